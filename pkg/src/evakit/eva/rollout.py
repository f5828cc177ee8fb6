"""Sequential inference for one image: glimpse, integrate, gate, predict, sample, adapt sigma."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import EvakitError, Fixation, ImageFrame, ReferenceFrame, Scanpath, normalize_scanpath
from ..policies import Policy, center_fixed, corner_fixed, random_uniform, sample_fixation, shuffled
from .control import GateState, VarianceController, gate_step, label_error, relay, self_error, update_variance
from .glimpse import GlimpseConfig, encode_fovea, encode_periphery, extract_glimpse, to_normalized, to_pixels
from .layers import lstm_step, softmax


@dataclass
class StepRecord:
    location: tuple[float, float]  # pixels in the image frame
    location_norm: tuple[float, float]
    sigma: float
    probs: np.ndarray
    baseline: float = 0.0
    uncertainty: float = 0.0
    error: float = 0.0
    gate_mean: float = 0.5
    gate_bottom_mean: float = 0.5
    gate_bottom_l1: float = 0.0
    mu: tuple[float, float] = (0.0, 0.0)
    log_prob: float | None = None  # density of the next fixation; None at the last step
    h1: np.ndarray | None = field(default=None, repr=False)
    h2: np.ndarray | None = field(default=None, repr=False)

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.probs))


@dataclass
class RolloutTrace:
    image_id: str
    frame: ReferenceFrame
    steps: list[StepRecord]
    policy: str = "predicted"
    seed: int = 0
    settings: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.steps)

    @property
    def y_hat(self) -> int:
        return self.steps[-1].prediction

    @property
    def locations(self) -> np.ndarray:
        return np.array([s.location for s in self.steps], dtype=float)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([s.sigma for s in self.steps])

    def scanpath(self, frame: ReferenceFrame | None = None) -> Scanpath:
        """Fixations as a model scanpath, optionally rescaled to ``frame``."""
        sp = Scanpath(self.image_id, "model", self.frame, tuple(Fixation(x, y) for x, y in self.locations))
        return sp if frame is None else normalize_scanpath(sp, self.frame, frame)

    def states(self, layer: str = "upper") -> np.ndarray:
        key = {"upper": "h2", "lower": "h1"}[layer]
        return np.stack([getattr(s, key) for s in self.steps])

    def to_dict(self, include_states: bool = False) -> dict:
        steps = []
        for t, s in enumerate(self.steps, 1):
            rec = {
                "t": t,
                "location": list(s.location),
                "location_norm": list(s.location_norm),
                "mu": list(s.mu),
                "sigma": s.sigma,
                "uncertainty": s.uncertainty,
                "error": s.error,
                "gate_mean": s.gate_mean,
                "gate_bottom_mean": s.gate_bottom_mean,
                "gate_bottom_l1": s.gate_bottom_l1,
                "probs": [float(p) for p in s.probs],
                "prediction": s.prediction,
                "baseline": s.baseline,
                "log_prob": s.log_prob,
            }
            if include_states:
                rec["h1"] = [float(v) for v in s.h1]
                rec["h2"] = [float(v) for v in s.h2]
            steps.append(rec)
        return {
            "image_id": self.image_id,
            "frame": [self.frame.width, self.frame.height],
            "policy": self.policy,
            "seed": self.seed,
            "settings": self.settings,
            "y_hat": self.y_hat,
            "steps": steps,
        }

    def to_json(self, include_states: bool = False, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(include_states), indent=indent)


def _gaussian_logpdf(x, mu, sigma: float) -> float | None:
    if sigma <= 0:
        return None
    d2 = (x[0] - mu[0]) ** 2 + (x[1] - mu[1]) ** 2
    return -d2 / (2 * sigma * sigma) - math.log(2 * math.pi * sigma * sigma)


def _sub_seed(seed: int, tag: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), tag])


def override_fixations(policy: Policy, frame: ReferenceFrame, steps: int, seed: int, inset: float) -> list[tuple[float, float]] | None:
    """Pixel fixations for deterministic/random override policies; None for predicted/shuffled."""
    if policy.kind == "center_fixed":
        sp = center_fixed(frame, steps)
    elif policy.kind == "corner_fixed":
        sp = corner_fixed(frame, steps, policy.corner, inset=inset)
    elif policy.kind == "random_uniform":
        sp = random_uniform(frame, steps, _sub_seed(seed, 1))
    else:
        return None
    return [(f.x, f.y) for f in sp.fixations]


def rollout(
    img: ImageFrame,
    w,
    cfg: GlimpseConfig = GlimpseConfig(),
    vc_init: VarianceController | None = None,
    policy: Policy | str = "predicted",
    seed: int = 1,
    label: int | None = None,
    *,
    image_id: str = "",
    gate_init: GateState | None = None,
    init_fixation: tuple[float, float] | None = None,
    init_sigma: float | None = None,
    init_states: Sequence[np.ndarray] | None = None,
    fixations: Sequence[tuple[float, float]] | None = None,
    keep_states: bool = True,
) -> RolloutTrace:
    """Run ``cfg.steps`` glimpses on one image.

    With ``policy="predicted"`` the location head drives fixations: the next
    fixation is drawn around the head's mean with the current sigma and clipped
    to the frame.  Other policies (or an explicit ``fixations`` list, in pixels)
    replace only the fixation choice; everything else runs unchanged.  The
    ``shuffled`` policy first runs the predicted rollout and then replays its own
    fixations in a seeded random order.

    ``init_fixation`` (pixels), ``init_sigma`` and ``init_states`` (h1, c1, h2,
    c2) override the default start: image centre, sigma_max, zero states.
    ``init_sigma`` applies to the first step only; the controller sets later ones.

    The error signal feeding the sigma controller is ``label_error`` when a label
    is given, otherwise ``self_error`` against the previous step (a uniform
    distribution before the first step).
    """
    if isinstance(policy, str):
        policy = Policy.parse(policy)
    frame = img.frame
    T = cfg.steps
    dims = w.dims
    if dims.fovea_size != cfg.fovea_size:
        raise EvakitError(f"weights expect fovea {dims.fovea_size}, config has {cfg.fovea_size}")
    if dims.channels != img.channels:
        raise EvakitError(f"weights expect {dims.channels} channels, image has {img.channels}")

    if fixations is None and policy.kind == "shuffled":
        base = rollout(img, w, cfg, vc_init, "predicted", seed, label, image_id=image_id, gate_init=gate_init,
                       init_fixation=init_fixation, init_sigma=init_sigma, init_states=init_states, keep_states=False)
        fixations = [(f.x, f.y) for f in shuffled(base.scanpath(), _sub_seed(seed, 2)).fixations]
    elif fixations is None:
        fixations = override_fixations(policy, frame, T, seed, inset=cfg.fovea_size / 2)
    if fixations is not None and len(fixations) != T:
        raise EvakitError(f"override has {len(fixations)} fixations, expected {T}")

    rng = np.random.default_rng(_sub_seed(seed, 0))
    vc = vc_init or VarianceController()
    gs = gate_init or GateState.initial(dims.upper_hidden)
    if init_states is None:
        h1, c1 = np.zeros(dims.lower_hidden), np.zeros(dims.lower_hidden)
        h2, c2 = np.zeros(dims.upper_hidden), np.zeros(dims.upper_hidden)
    else:
        h1, c1, h2, c2 = (np.asarray(s, dtype=float).copy() for s in init_states)

    loc = tuple(fixations[0]) if fixations is not None else (init_fixation or frame.center)
    loc = (float(loc[0]), float(loc[1]))
    y_prev = np.full(dims.n_classes, 1.0 / dims.n_classes)
    steps: list[StepRecord] = []
    n_stages = len(dims.conv_widths)

    for t in range(T):
        sigma = init_sigma if (t == 0 and init_sigma is not None) else vc.sigma
        obs = extract_glimpse(img, loc, cfg)
        g_f = encode_fovea(obs, w)
        g_p = encode_periphery(obs, w)
        s_t = np.concatenate([g_f, g_p])
        h1_prev = h1
        h1, c1 = lstm_step(s_t, h1, c1, w["lower.w_ih"], w["lower.w_hh"], w["lower.b"])
        gs = gate_step(gs, h1_prev, h2, sigma, w)
        u_in = relay(h1, g_f, h2, gs.beta_bar, w, gs.eps_relay)
        h2, c2 = lstm_step(u_in, h2, c2, w["upper.w_ih"], w["upper.w_hh"], w["upper.b"])
        probs = softmax(w["action.w"] @ h2 + w["action.b"])
        baseline = float((w["baseline.w"] @ h2 + w["baseline.b"])[0])
        mu = np.tanh(w["location.w"] @ h1 + w["location.b"])

        log_prob = None
        next_loc = None
        if t < T - 1:
            sample = sample_fixation(mu, sigma, rng)
            if fixations is not None:
                next_loc = (float(fixations[t + 1][0]), float(fixations[t + 1][1]))
                log_prob = _gaussian_logpdf(to_normalized(next_loc, frame.width, frame.height), mu, sigma)
            else:
                log_prob = _gaussian_logpdf(sample, mu, sigma)
                clipped = (min(max(sample[0], -1.0), 1.0), min(max(sample[1], -1.0), 1.0))
                next_loc = to_pixels(clipped, frame.width, frame.height)

        e_t = label_error(probs, label) if label is not None else self_error(y_prev, probs)
        vc = update_variance(vc, e_t)
        steps.append(StepRecord(
            location=loc,
            location_norm=to_normalized(loc, frame.width, frame.height),
            sigma=sigma,
            probs=probs,
            baseline=baseline,
            uncertainty=vc.uncertainty,
            error=e_t,
            gate_mean=gs.mean,
            gate_bottom_mean=gs.bottom_mean,
            gate_bottom_l1=float(np.abs(gs.beta_bar_bottom).sum()),
            mu=(float(mu[0]), float(mu[1])),
            log_prob=log_prob,
            h1=h1.copy() if keep_states else None,
            h2=h2.copy() if keep_states else None,
        ))
        y_prev = probs
        if next_loc is not None:
            loc = next_loc

    settings = {
        "fovea_size": cfg.fovea_size,
        "periphery_size": cfg.periphery_size,
        "steps": T,
        "tau_long": vc.tau_long,
        "tau_short": vc.tau_short,
        "alpha_gain": vc.alpha_gain,
        "sigma_min": vc.sigma_min,
        "sigma_max": vc.sigma_max,
        "gamma": gs.gamma,
        "eps_relay": gs.eps_relay,
        "error_signal": "label" if label is not None else "self",
        "conv_stages": n_stages,
    }
    return RolloutTrace(image_id, frame, steps, str(policy), int(seed), settings)
