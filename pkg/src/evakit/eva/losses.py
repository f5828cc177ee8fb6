"""Training-objective terms evaluated on a finished rollout, as plain numbers (no gradients)."""
from __future__ import annotations

import math
import warnings

from ..core import EvakitError

PROB_FLOOR = 1e-12


def reward(trace, label: int) -> float:
    return 1.0 if trace.y_hat == label else 0.0


def reinforce_loss(trace, label: int) -> float:
    """``-sum_t (R - b_t) * log pi(l_t)`` over every step that sampled a next fixation."""
    r = reward(trace, label)
    total = 0.0
    last = len(trace.steps) - 1
    for t, step in enumerate(trace.steps):
        if step.log_prob is None:
            if t == last:
                continue
            raise EvakitError(f"step {t + 1} has no log-density (zero sigma or incomplete trace)")
        if not math.isfinite(step.log_prob):
            raise EvakitError(f"step {t + 1} has a non-finite log-density")
        total -= (r - step.baseline) * step.log_prob
    return float(total)


def ce_loss(trace, label: int) -> float:
    """Cross-entropy of the true label summed over all steps."""
    total = 0.0
    floored = False
    for step in trace.steps:
        if not 0 <= label < len(step.probs):
            raise EvakitError(f"label {label} out of range")
        p = float(step.probs[label])
        if p < PROB_FLOOR:
            p, floored = PROB_FLOOR, True
        total -= math.log(p)
    if floored:
        warnings.warn(f"probability of label {label} floored at {PROB_FLOOR}", RuntimeWarning, stacklevel=2)
    return total


def _xlog(x: float, eps: float) -> float:
    return 0.0 if x == 0 else x * math.log(x + eps)


def gate_regularizers(trace, lambdas=(0.1, 0.01, 0.05), eps: float = 1e-8) -> tuple[float, float, float, float]:
    """Gate cost, L1 and entropy terms, each averaged over steps, and their sum.

    Per step the cost uses the mean smoothed bottom-up gate, the L1 term its
    L1 norm, and the entropy ``-m log(m + eps) - m_b log(m_b + eps)`` with
    ``m`` the mean smoothed gate and ``m_b`` the mean bottom-up gate.
    """
    lam_cost, lam_1, lam_h = lambdas
    n = len(trace.steps)
    if n == 0:
        raise EvakitError("empty trace")
    cost = lam_cost * sum(s.gate_bottom_mean for s in trace.steps) / n
    l1 = lam_1 * sum(s.gate_bottom_l1 for s in trace.steps) / n
    ent = sum(-_xlog(s.gate_mean, eps) - _xlog(s.gate_bottom_mean, eps) for s in trace.steps) / n
    entropy = lam_h * ent
    return float(cost), float(l1), float(entropy), float(cost + l1 + entropy)


def total_objective(trace, label: int, lambdas=(0.1, 0.01, 0.05), eps: float = 1e-8) -> float:
    return float(ce_loss(trace, label) + reinforce_loss(trace, label) + gate_regularizers(trace, lambdas, eps)[3])
