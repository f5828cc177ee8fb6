import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evakit.core import DEFAULT_FRAME, EmptyScanpathError, ReferenceFrame, Scanpath
from evakit.gcs import (
    STAT_NAMES,
    CalibrationRefs,
    DegenerateCalibrationError,
    GcsConfig,
    MovementStats,
    corpus_gcs,
    debias,
    gcs,
    movement_distance,
    movement_similarity,
    movement_stats,
    normalize_dtw,
    normalize_updir,
)
from evakit.metrics import METRIC_NAMES, MetricConfig, RawMetrics, density_grid, raw_metrics
from evakit.policies import center_fixed, corner_fixed

from conftest import path

coord = st.floats(0, 224, allow_nan=False)
paths12 = st.lists(st.tuples(coord, coord), min_size=2, max_size=12)


def refs(upper, lower, center=(0, 0, 0, 0)):
    return CalibrationRefs(RawMetrics(*upper), RawMetrics(*lower), RawMetrics(*center))


def test_normalize_dtw_examples():
    r = refs((10.0, 1, 1, 1), (110.0, 0, 0, 0))
    assert normalize_dtw(10.0, r) == 1.0
    assert normalize_dtw(110.0, r) == 0.0
    assert normalize_dtw(60.0, r) == 0.5
    assert normalize_dtw(210.0, r) == -1.0  # not clamped


def test_normalize_updir_examples():
    assert normalize_updir(0.8, 0.2, 0.8) == 1.0
    assert normalize_updir(0.2, 0.2, 0.8) == 0.0
    assert normalize_updir(0.5, 0.2, 0.8) == pytest.approx(0.5)


def test_degenerate_calibration_names_metric():
    with pytest.raises(DegenerateCalibrationError, match="nss"):
        normalize_updir(1.0, 0.3, 0.3, "nss")
    with pytest.raises(DegenerateCalibrationError, match="dtw"):
        normalize_dtw(1.0, refs((5.0, 1, 1, 1), (5.0, 0, 0, 0)))


def test_debias_examples():
    assert debias(0.4, 0.4) == 0
    assert debias(0.7, 0.4) == pytest.approx(0.3)
    assert debias(0.2, 0.4) == pytest.approx(-0.2)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_debias_shift_invariant(m, c, k):
    assert debias(m + k, c + k) == pytest.approx(debias(m, c), abs=1e-12)


def test_violations_flagged():
    r = refs((50.0, 0.3, 1.0, 0.6), (20.0, 0.5, 2.0, 0.7))
    assert r.violations() == ["dtw", "scanmatch", "nss", "auc"]
    assert refs((0.0, 1, 1, 1), (9.0, 0, 0, 0)).violations() == []


# --- movement statistics --------------------------------------------------------------


def test_square_path_stats():
    sq = path([(0, 0), (224, 0), (224, 224), (0, 224), (0, 0)])
    ms = movement_stats(sq)
    assert ms.path_length == 896.0
    assert ms.mean_saccade_amplitude == 224.0
    assert ms.mean_dist_to_center == pytest.approx(112 * math.sqrt(2), abs=1e-12)
    assert ms.spatial_coverage == pytest.approx(4 / 49)
    assert ms.direction_entropy == pytest.approx(math.log(4), abs=1e-12)
    assert ms.collapse_rate == 0.0
    assert not ms.degenerate


def test_identical_fixations_stats():
    ms = movement_stats(path([(50, 50)] * 6))
    assert ms.path_length == 0 and ms.mean_saccade_amplitude == 0
    assert ms.spatial_coverage == pytest.approx(1 / 49)
    assert ms.collapse_rate == 1.0 and ms.direction_entropy == 0.0
    assert ms.degenerate


def test_single_fixation_degenerate():
    ms = movement_stats(path([(10, 10)]))
    assert ms.degenerate and ms.collapse_rate == 1.0 and ms.path_length == 0


def test_collapse_rate_threshold():
    assert movement_stats(path([(10, 10), (20, 10)]), collapse_radius=15).collapse_rate == 1.0
    assert movement_stats(path([(10, 10), (20, 10)]), collapse_radius=10).collapse_rate == 0.0


def test_direction_bins_are_compass_centred():
    # eight unit steps in the eight compass directions: uniform histogram
    dirs = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
    pts = [(112.0, 112.0)]
    for dx, dy in dirs:
        pts.append((pts[-1][0] + 10 * dx, pts[-1][1] + 10 * dy))
    assert movement_stats(path(pts)).direction_entropy == pytest.approx(math.log(8), abs=1e-12)


def test_movement_stats_empty():
    with pytest.raises(EmptyScanpathError):
        movement_stats(Scanpath("a", "model", DEFAULT_FRAME, ()))


@given(paths12)
def test_movement_stats_ranges(xy):
    ms = movement_stats(path(xy))
    v = ms.vector()
    assert np.all(np.isfinite(v)) and len(v) == len(STAT_NAMES) == 6
    assert ms.path_length >= 0
    assert 0 <= ms.spatial_coverage <= 1 and 0 <= ms.collapse_rate <= 1
    assert 0 <= ms.direction_entropy <= math.log(8) + 1e-12


def test_movement_distance_examples():
    h = MovementStats(100.0, 10.0, 50.0, 0.2, 1.0, 0.1)
    assert movement_distance(h, h) == 0.0
    m = MovementStats(200.0, 10.0, 50.0, 0.2, 1.0, 0.1)
    assert movement_distance(m, h, eps=1e-12) == pytest.approx(math.sqrt(1 / 6), abs=1e-9)
    h0 = MovementStats(0.0, 10.0, 50.0, 0.2, 1.0, 0.1)
    m0 = MovementStats(1e-6, 10.0, 50.0, 0.2, 1.0, 0.1)
    assert movement_distance(m0, h0, eps=1e-6) == pytest.approx(math.sqrt(1 / 6), rel=1e-12)


def test_movement_similarity_examples():
    assert movement_similarity(0.0) == 1.0
    assert movement_similarity(2.0, 2.0) == pytest.approx(math.exp(-1))
    assert movement_similarity(1e6) < 1e-300 + 1e-12
    with pytest.raises(ValueError):
        movement_similarity(1.0, 0.0)


@given(st.floats(0, 50), st.floats(0, 50), st.floats(0.01, 10))
def test_similarity_monotone(d1, d2, tau):
    s1, s2 = movement_similarity(d1, tau), movement_similarity(d2, tau)
    assert 0 < s1 <= 1 or d1 / tau > 700
    if d1 < d2:
        assert s1 >= s2


# --- full report ----------------------------------------------------------------------

HUMAN = path([(60, 50), (150, 80), (120, 170), (40, 150), (100, 100)], image_id="im", source="human")
MODEL = path([(70, 60), (140, 90), (130, 160), (60, 120), (110, 110)], image_id="im")


def test_center_policy_zero_identity():
    rep = gcs(center_fixed(DEFAULT_FRAME, len(HUMAN), "im", "model"), HUMAN)
    assert all(rep.debiased[m] == 0.0 for m in METRIC_NAMES)
    assert rep.gcs == rep.lam * rep.movement_similarity


def test_model_equals_human():
    rep = gcs(HUMAN, HUMAN)
    assert all(rep.normalized[m] == pytest.approx(1.0, abs=1e-12) for m in METRIC_NAMES)
    assert rep.movement_similarity == 1.0
    want = sum(1 - rep.center_normalized[m] for m in METRIC_NAMES) / 4 + 0.1
    assert rep.gcs == pytest.approx(want, abs=1e-12)


def test_report_matches_hand_evaluation():
    cfg = GcsConfig()
    rep = gcs(MODEL, HUMAN, cfg=cfg)
    dens = density_grid([HUMAN], DEFAULT_FRAME, cfg.metric.nss_sigma)
    center = center_fixed(DEFAULT_FRAME, 5, "im")
    corner = corner_fixed(DEFAULT_FRAME, 5, "TR", 4.0, "im")
    m, up, lo, ce = (raw_metrics(s, HUMAN, dens, cfg.metric) for s in (MODEL, HUMAN, corner, center))
    norm = lambda r: {  # noqa: E731
        "dtw": (lo.dtw - r.dtw) / (lo.dtw - up.dtw),
        **{k: (getattr(r, k) - getattr(lo, k)) / (getattr(up, k) - getattr(lo, k)) for k in ("scanmatch", "nss", "auc")},
    }
    deb = {k: norm(m)[k] - norm(ce)[k] for k in METRIC_NAMES}

    def stats(xy):
        xy = np.asarray(xy, float)
        st_ = [math.dist(a, b) for a, b in zip(xy[:-1], xy[1:])]
        cells = {(min(int(x / 32), 6), min(int(y / 32), 6)) for x, y in xy}
        bins = [round(math.atan2(b[1] - a[1], b[0] - a[0]) / (math.pi / 4)) % 8 for a, b in zip(xy[:-1], xy[1:])]
        p = np.bincount(bins, minlength=8) / len(bins)
        p = p[p > 0]
        return [sum(st_), sum(st_) / len(st_), np.mean([math.dist(q, (112, 112)) for q in xy]),
                len(cells) / 49, float(-(p * np.log(p)).sum()), np.mean([s < 8 for s in st_])]

    fm, fh = stats(MODEL.xy), stats(HUMAN.xy)
    d = math.sqrt(sum((abs(a - b) / (abs(b) + 1e-6)) ** 2 for a, b in zip(fm, fh)) / 6)
    want = sum(deb.values()) / 4 + 0.1 * math.exp(-d)
    assert rep.movement_distance == pytest.approx(d, abs=1e-12)
    for k in METRIC_NAMES:
        assert rep.debiased[k] == pytest.approx(deb[k], abs=1e-12)
    assert rep.gcs == pytest.approx(want, abs=1e-12)
    assert rep.upper_mode == "self"


def test_external_human_reference():
    other = path([(65, 55), (150, 90), (110, 160), (50, 140), (90, 100)], image_id="im", source="human")
    rep = gcs(MODEL, HUMAN, refs_inputs={"human_ref": other})
    assert rep.upper_mode == "external"
    assert rep.refs.upper.dtw > 0


def test_report_row_has_every_field():
    row = gcs(MODEL, HUMAN).row()
    for k in METRIC_NAMES:
        for prefix in ("raw", "upper", "lower", "center", "norm", "center_norm", "debiased"):
            assert f"{prefix}_{k}" in row
    for k in STAT_NAMES:
        assert f"model_{k}" in row and f"human_{k}" in row
    for k in ("movement_distance", "movement_similarity", "gcs", "lam", "tau", "upper_mode", "flags"):
        assert k in row


def test_degenerate_calibration_in_gcs():
    # a human at the corner point makes human and corner references coincide
    h = corner_fixed(DEFAULT_FRAME, 3, "TR", 4.0, "im", "human")
    with pytest.raises(DegenerateCalibrationError):
        gcs(path([(1, 2), (3, 4), (5, 6)], image_id="im"), h)


@settings(max_examples=40)
@given(paths12, paths12, st.floats(0, 1), st.floats(0.1, 5))
def test_decomposition_identity(m, h, lam, tau):
    human = path(h, image_id="p", source="human")
    if len(set(map(tuple, human.xy.tolist()))) < 2:
        return
    cfg = GcsConfig(lam=lam, tau=tau, metric=MetricConfig(auc_negatives=100))
    try:
        rep = gcs(path(m, image_id="p"), human, cfg=cfg)
    except DegenerateCalibrationError:
        return
    assert abs(rep.decomposition_residual()) <= 1e-12
    # exp(-d/tau) underflows to 0.0 in doubles once d/tau exceeds ~745
    assert 0 <= rep.movement_similarity <= 1
    if rep.movement_distance / tau < 700:
        assert rep.movement_similarity > 0


@settings(max_examples=40)
@given(paths12)
def test_center_identity_any_human(h):
    human = path(h, image_id="q", source="human")
    try:
        rep = gcs(center_fixed(DEFAULT_FRAME, len(human), "q", "model"), human,
                  cfg=GcsConfig(metric=MetricConfig(auc_negatives=100)))
    except DegenerateCalibrationError:
        return
    assert all(rep.debiased[k] == 0.0 for k in METRIC_NAMES)
    assert rep.gcs == rep.lam * rep.movement_similarity


def test_corpus_gcs_mean():
    reps = [gcs(MODEL, HUMAN), gcs(HUMAN, HUMAN)]
    assert corpus_gcs(reps) == pytest.approx((reps[0].gcs + reps[1].gcs) / 2)


def test_deterministic():
    assert gcs(MODEL, HUMAN).row() == gcs(MODEL, HUMAN).row()


def test_frame_mismatch():
    with pytest.raises(Exception):
        gcs(path([(1, 1)], frame=ReferenceFrame(10, 10)), HUMAN)
