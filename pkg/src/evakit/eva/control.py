"""Exploration-variance controller, adaptive gate and gated relay."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..core import EvakitError
from .layers import relu, sigmoid


@dataclass(frozen=True)
class VarianceController:
    """Two EMAs of the prediction error; their gap sets the sampling std.

    ``sigma`` is bounded to ``[sigma_min, sigma_max]`` through
    ``sigma_min + (sigma_max - sigma_min) * tanh(alpha_gain * |ema_short - ema_long|)``.
    Units are normalized location units (the frame spans [-1, 1]).
    """

    tau_long: float = 0.98
    tau_short: float = 0.9
    alpha_gain: float = 5.0
    sigma_min: float = 0.05
    sigma_max: float = 0.5
    ema_long: float = 0.0
    ema_short: float = 0.0
    sigma: float | None = None
    uncertainty: float = 0.0

    def __post_init__(self):
        if not (0 < self.tau_short < self.tau_long < 1):
            raise ValueError("need 0 < tau_short < tau_long < 1")
        if self.alpha_gain <= 0:
            raise ValueError("alpha_gain must be positive")
        if not (0 <= self.sigma_min < self.sigma_max):
            raise ValueError("need 0 <= sigma_min < sigma_max")
        if self.sigma is None:
            object.__setattr__(self, "sigma", self.sigma_max)
        if not (self.sigma_min <= self.sigma <= self.sigma_max):
            raise ValueError("sigma outside [sigma_min, sigma_max]")


def update_variance(vc: VarianceController, e_t: float) -> VarianceController:
    if not math.isfinite(e_t):
        raise EvakitError(f"prediction error must be finite, got {e_t}")
    if e_t < 0:
        raise ValueError("prediction error must be non-negative")
    ema_long = vc.tau_long * vc.ema_long + (1 - vc.tau_long) * e_t
    ema_short = vc.tau_short * vc.ema_short + (1 - vc.tau_short) * e_t
    u = abs(ema_short - ema_long)
    sigma = vc.sigma_min + (vc.sigma_max - vc.sigma_min) * math.tanh(vc.alpha_gain * u)
    return replace(vc, ema_long=ema_long, ema_short=ema_short, uncertainty=u, sigma=min(sigma, vc.sigma_max))


def self_error(y_prev, y_cur) -> float:
    """Total-variation distance between consecutive class distributions."""
    y_prev = np.asarray(y_prev, dtype=float)
    y_cur = np.asarray(y_cur, dtype=float)
    if y_prev.shape != y_cur.shape:
        raise EvakitError(f"distribution length mismatch: {y_prev.shape} vs {y_cur.shape}")
    return float(0.5 * np.abs(y_cur - y_prev).sum())


def label_error(y, label: int) -> float:
    y = np.asarray(y, dtype=float)
    if not 0 <= label < len(y):
        raise EvakitError(f"label {label} out of range for {len(y)} classes")
    return float(1.0 - y[label])


@dataclass(frozen=True)
class GateState:
    """Gate values and their EMAs; ``beta_bottom``/``beta_bar_bottom`` track the bottom-up branch."""

    beta: np.ndarray
    beta_bar: np.ndarray
    beta_bottom: np.ndarray
    beta_bar_bottom: np.ndarray
    gamma: float = 0.9
    eps_relay: float = 0.01

    @classmethod
    def initial(cls, dim: int, beta0: float = 0.5, gamma: float = 0.9, eps_relay: float = 0.01) -> "GateState":
        full = np.full(dim, float(beta0))
        return cls(full, full.copy(), full.copy(), full.copy(), gamma, eps_relay)

    @property
    def mean(self) -> float:
        return float(np.mean(self.beta_bar))

    @property
    def bottom_mean(self) -> float:
        return float(np.mean(self.beta_bar_bottom))


def gate_step(gs: GateState, h1_prev, h2_prev, sigma: float, w) -> GateState:
    """One gate update from the previous lower/upper states and the current sigma.

    ``beta = clip((td(h2) - sigma) * (bu(h1) + sigma), 0, 1)`` with one-layer ReLU
    MLPs ``td`` and ``bu``, followed by ``beta_bar = gamma * beta_bar + (1 - gamma) * beta``.
    The bottom-up factor ``clip(bu(h1) + sigma, 0, 1)`` is smoothed the same way.
    """
    h1_prev = np.asarray(h1_prev, dtype=float)
    h2_prev = np.asarray(h2_prev, dtype=float)
    if not (math.isfinite(sigma) and np.all(np.isfinite(h1_prev)) and np.all(np.isfinite(h2_prev))):
        raise EvakitError("gate inputs must be finite")
    td = relu(w["gate_td.w"] @ h2_prev + w["gate_td.b"])
    bu = relu(w["gate_bu.w"] @ h1_prev + w["gate_bu.b"])
    beta = np.clip((td - sigma) * (bu + sigma), 0.0, 1.0)
    beta_bottom = np.clip(bu + sigma, 0.0, 1.0)
    g = gs.gamma
    # convex combination can overshoot 1 by an ulp
    beta_bar = np.clip(g * gs.beta_bar + (1 - g) * beta, 0.0, 1.0)
    beta_bar_bottom = np.clip(g * gs.beta_bar_bottom + (1 - g) * beta_bottom, 0.0, 1.0)
    if g == 1.0:
        beta_bar, beta_bar_bottom = gs.beta_bar, gs.beta_bar_bottom
    return replace(gs, beta=beta, beta_bar=beta_bar, beta_bottom=beta_bottom, beta_bar_bottom=beta_bar_bottom)


def relay(h1, fovea_feat, h2_prev, beta_bar, w, eps: float = 0.01) -> np.ndarray:
    """Attention-style gated relay input ``[z || rho]`` for the upper cell.

    The query comes from the previous upper state, key and value from
    ``[h1 || fovea features]``; with a single key the attention weight is the
    scalar ``sigmoid(q . k / sqrt(d))``.
    """
    h1 = np.asarray(h1, dtype=float)
    h2_prev = np.asarray(h2_prev, dtype=float)
    beta_bar = np.asarray(beta_bar, dtype=float)
    kv_in = np.concatenate([h1, np.asarray(fovea_feat, dtype=float)])
    q = w["attn.w_q"] @ h2_prev
    k = w["attn.w_k"] @ kv_in
    v = w["attn.w_v"] @ kv_in
    alpha = sigmoid(q @ k / math.sqrt(len(q)))
    z = (1.0 - beta_bar) * (alpha * v + eps * v)
    rho = beta_bar * h2_prev
    out = np.concatenate([z, rho])
    if not np.all(np.isfinite(out)):
        raise EvakitError("relay produced non-finite values")
    return out
