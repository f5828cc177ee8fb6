import math

import numpy as np
import pytest

from evakit.core import DEFAULT_FRAME, EvakitError
from evakit.eva import ce_loss, gate_regularizers, reinforce_loss, rollout, total_objective
from evakit.eva.rollout import RolloutTrace, StepRecord

from test_eva_glimpse import pattern_image


def trace(probs_list, baselines=None, log_probs=None, gate=0.5, gate_b=0.5, l1=0.0):
    T = len(probs_list)
    baselines = baselines or [0.0] * T
    log_probs = log_probs or [-1.0] * (T - 1) + [None]
    steps = [StepRecord((0.0, 0.0), (0.0, 0.0), 0.1, np.asarray(p, float), baseline=b, log_prob=lp,
                        gate_mean=gate, gate_bottom_mean=gate_b, gate_bottom_l1=l1)
             for p, b, lp in zip(probs_list, baselines, log_probs)]
    return RolloutTrace("x", DEFAULT_FRAME, steps)


def test_baseline_equal_reward_gives_zero():
    tr = trace([[0.2, 0.8]] * 4, baselines=[1.0] * 4, log_probs=[-3.0, -0.5, 2.0, None])
    assert reinforce_loss(tr, 1) == 0.0
    tr = trace([[0.2, 0.8]] * 4, baselines=[0.0] * 4, log_probs=[-3.0, -0.5, 2.0, None])
    assert reinforce_loss(tr, 0) == 0.0


def test_reinforce_hand():
    tr = trace([[0.2, 0.8]] * 3, baselines=[0.5, 0.25, 9.0], log_probs=[-2.0, -1.0, None])
    assert reinforce_loss(tr, 1) == pytest.approx(-(0.5 * -2.0 + 0.75 * -1.0))


def test_reinforce_missing_density_is_error():
    tr = trace([[0.5, 0.5]] * 3, log_probs=[-1.0, None, None])
    with pytest.raises(EvakitError):
        reinforce_loss(tr, 0)


def test_ce_one_hot_and_uniform():
    assert ce_loss(trace([[0, 1, 0]] * 5), 1) == 0.0
    assert ce_loss(trace([[0.25] * 4] * 6), 2) == pytest.approx(6 * math.log(4), abs=1e-12)
    with pytest.warns(RuntimeWarning):
        assert ce_loss(trace([[1.0, 0.0]]), 1) == pytest.approx(-math.log(1e-12))
    with pytest.raises(EvakitError):
        ce_loss(trace([[0.5, 0.5]]), 3)


def test_gate_regularizers_half():
    cost, l1, ent, tot = gate_regularizers(trace([[0.5, 0.5]] * 3, gate=0.5, gate_b=0.5, l1=2.0), (0.1, 0.01, 0.05))
    assert cost == pytest.approx(0.05)
    assert l1 == pytest.approx(0.02)
    # -2 * 0.5 * ln(0.5) = ln 2
    assert ent == pytest.approx(0.05 * math.log(2), abs=1e-8)
    assert tot == pytest.approx(cost + l1 + ent)


def test_gate_regularizers_zero_gates():
    assert gate_regularizers(trace([[0.5, 0.5]] * 2, gate=0.0, gate_b=0.0)) == (0.0, 0.0, 0.0, 0.0)


def test_total_objective_golden(small_weights):
    img = pattern_image()
    tr = rollout(img, small_weights, seed=3, label=2)
    assert total_objective(tr, 2) == pytest.approx(28.687416817121544, abs=1e-9)
    assert total_objective(tr, 2) == pytest.approx(ce_loss(tr, 2) + reinforce_loss(tr, 2) + gate_regularizers(tr)[3])
    tr = rollout(img, small_weights, seed=3)
    assert total_objective(tr, 2) == pytest.approx(26.999122998921244, abs=1e-9)
