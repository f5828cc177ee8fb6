"""Center-debiased Gaze Consistency Score.

Each metric is rescaled between a corner-fixation floor (0) and a human ceiling
(1), the rescaled always-center score is subtracted, and a movement-similarity
bonus is added::

    gcs = mean(debiased over dtw, scanmatch, nss, auc) + lam * exp(-d / tau)

where ``d`` is the RMS relative error between movement statistics of the model
and human scanpaths.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .core import DensityGrid, EmptyScanpathError, EvakitError, ReferenceFrame, Scanpath, require_same_frame
from .metrics import METRIC_NAMES, MetricConfig, RawMetrics, density_grid, raw_metrics
from .policies import center_fixed, corner_fixed


class DegenerateCalibrationError(EvakitError):
    def __init__(self, metric: str, value: float):
        super().__init__(f"degenerate calibration for {metric}: human and corner references both equal {value!r}")
        self.metric = metric


@dataclass(frozen=True)
class GcsConfig:
    lam: float = 0.1
    tau: float = 1.0
    eps: float = 1e-6
    coverage_grid: tuple[int, int] = (7, 7)
    collapse_radius: float = 8.0
    corner: str = "TR"
    corner_inset: float = 4.0
    metric: MetricConfig = field(default_factory=MetricConfig)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class CalibrationRefs:
    upper: RawMetrics
    lower: RawMetrics
    center: RawMetrics

    def violations(self) -> list[str]:
        """Metrics whose human reference does not beat the corner reference."""
        bad = []
        if self.lower.dtw < self.upper.dtw:
            bad.append("dtw")
        for name in ("scanmatch", "nss", "auc"):
            if getattr(self.upper, name) < getattr(self.lower, name):
                bad.append(name)
        return bad


@dataclass(frozen=True)
class MovementStats:
    path_length: float
    mean_saccade_amplitude: float
    mean_dist_to_center: float
    spatial_coverage: float
    direction_entropy: float
    collapse_rate: float
    degenerate: bool = field(default=False, compare=False)

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self) if f.name != "degenerate"])


STAT_NAMES = tuple(f.name for f in fields(MovementStats) if f.name != "degenerate")


def normalize_dtw(d: float, refs: CalibrationRefs) -> float:
    worst, best = refs.lower.dtw, refs.upper.dtw
    if worst == best:
        raise DegenerateCalibrationError("dtw", worst)
    return (worst - d) / (worst - best)


def normalize_updir(m: float, m_min: float, m_max: float, name: str = "metric") -> float:
    if m_max == m_min:
        raise DegenerateCalibrationError(name, m_max)
    return (m - m_min) / (m_max - m_min)


def normalize_all(raw: RawMetrics, refs: CalibrationRefs) -> dict[str, float]:
    out = {"dtw": normalize_dtw(raw.dtw, refs)}
    for name in ("scanmatch", "nss", "auc"):
        out[name] = normalize_updir(getattr(raw, name), getattr(refs.lower, name), getattr(refs.upper, name), name)
    return out


def debias(normalized_model: float, normalized_center: float) -> float:
    return normalized_model - normalized_center


def _direction_bin(dx: float, dy: float) -> int:
    # eight bins centred on the compass directions
    return int(round(math.atan2(dy, dx) / (math.pi / 4))) % 8


def movement_stats(sp: Scanpath, frame: ReferenceFrame | None = None, coverage_grid=(7, 7), collapse_radius: float = 8.0) -> MovementStats:
    """Run-level movement statistics of one scanpath.

    Direction entropy uses eight 45-degree bins centred on the compass
    directions and skips zero-length saccades.  A scanpath with a single
    fixation has no saccades: its saccade statistics are zero, collapse rate is 1
    and ``degenerate`` is set.  The flag is also set when every saccade has zero
    length.
    """
    if len(sp) == 0:
        raise EmptyScanpathError(f"scanpath {sp.image_id!r} has no fixations")
    frame = frame or sp.frame
    xy = sp.xy
    steps = np.diff(xy, axis=0)
    amps = np.hypot(steps[:, 0], steps[:, 1])
    n_sacc = len(amps)
    cx, cy = frame.center
    mean_center = float(np.mean(np.hypot(xy[:, 0] - cx, xy[:, 1] - cy)))

    cols, rows = coverage_grid
    c = np.clip(np.floor(xy[:, 0] / frame.width * cols), 0, cols - 1).astype(int)
    r = np.clip(np.floor(xy[:, 1] / frame.height * rows), 0, rows - 1).astype(int)
    coverage = len(set(zip(r.tolist(), c.tolist()))) / (cols * rows)

    if n_sacc == 0:
        return MovementStats(0.0, 0.0, mean_center, coverage, 0.0, 1.0, degenerate=True)

    path_length = float(amps.sum())
    moving = amps > 0
    counts = np.bincount([_direction_bin(dx, dy) for dx, dy in steps[moving]], minlength=8)
    entropy = 0.0
    if counts.sum() > 0:
        p = counts[counts > 0] / counts.sum()
        entropy = float(-(p * np.log(p)).sum())
    collapse = float(np.mean(amps < collapse_radius))
    return MovementStats(path_length, path_length / n_sacc, mean_center, coverage, entropy, collapse,
                         degenerate=path_length == 0)


def movement_distance(model: MovementStats, human: MovementStats, eps: float = 1e-6) -> float:
    if eps <= 0:
        raise ValueError("eps must be positive")
    fm, fh = model.vector(), human.vector()
    rel = np.abs(fm - fh) / (np.abs(fh) + eps)
    return float(np.sqrt(np.mean(rel**2)))


def movement_similarity(d: float, tau: float = 1.0) -> float:
    if tau <= 0:
        raise ValueError("tau must be positive")
    if d < 0:
        raise ValueError("distance must be non-negative")
    return math.exp(-d / tau)


@dataclass(frozen=True)
class GcsReport:
    image_id: str
    raw: RawMetrics
    refs: CalibrationRefs
    normalized: dict
    center_normalized: dict
    debiased: dict
    model_stats: MovementStats
    human_stats: MovementStats
    movement_distance: float
    movement_similarity: float
    gcs: float
    lam: float
    sim_temperature: float
    upper_mode: str = "self"
    flags: tuple = ()

    def decomposition_residual(self) -> float:
        """``gcs - (mean(debiased) + lam * sim)`` recomputed from the stored fields."""
        return self.gcs - (sum(self.debiased[m] for m in METRIC_NAMES) / 4.0 + self.lam * self.movement_similarity)

    def row(self) -> dict:
        """Flat record with every field, for CSV output."""
        out = {"image_id": self.image_id}
        for prefix, rm in (("raw", self.raw), ("upper", self.refs.upper), ("lower", self.refs.lower), ("center", self.refs.center)):
            for k, v in asdict(rm).items():
                out[f"{prefix}_{k}"] = v
        for prefix, d in (("norm", self.normalized), ("center_norm", self.center_normalized), ("debiased", self.debiased)):
            for m in METRIC_NAMES:
                out[f"{prefix}_{m}"] = d[m]
        for prefix, st in (("model", self.model_stats), ("human", self.human_stats)):
            for k, v in zip(STAT_NAMES, st.vector()):
                out[f"{prefix}_{k}"] = float(v)
        out.update(
            movement_distance=self.movement_distance,
            movement_similarity=self.movement_similarity,
            gcs=self.gcs,
            lam=self.lam,
            tau=self.sim_temperature,
            upper_mode=self.upper_mode,
            flags=";".join(self.flags),
        )
        return out


def reference_scanpaths(human: Scanpath, cfg: GcsConfig = GcsConfig()) -> dict[str, Scanpath]:
    """Always-center and corner-fixation references matching the human scanpath length."""
    n = len(human)
    center = center_fixed(human.frame, n, image_id=human.image_id)
    corner = corner_fixed(human.frame, n, cfg.corner, inset=cfg.corner_inset, image_id=human.image_id)
    return {"center_ref": center, "corner_ref": corner}


def gcs(
    model: Scanpath,
    human: Scanpath,
    human_density: DensityGrid | None = None,
    refs_inputs: dict | None = None,
    cfg: GcsConfig = GcsConfig(),
) -> GcsReport:
    """Per-image GCS report.

    ``refs_inputs`` may supply ``human_ref``, ``corner_ref`` and ``center_ref``
    scanpaths; missing ones default to the human scanpath itself and to the
    corner and center policies.  When no density is given it is built from the
    human scanpath with ``cfg.metric.nss_sigma``.
    """
    refs_inputs = dict(refs_inputs or {})
    require_same_frame(model, human)
    if human_density is None:
        human_density = density_grid([human], human.frame, cfg.metric.nss_sigma)
    defaults = reference_scanpaths(human, cfg)
    upper_mode = "external" if "human_ref" in refs_inputs else "self"
    human_ref = refs_inputs.get("human_ref", human)
    corner_ref = refs_inputs.get("corner_ref", defaults["corner_ref"])
    center_ref = refs_inputs.get("center_ref", defaults["center_ref"])
    for sp in (human_ref, corner_ref, center_ref):
        require_same_frame(sp, human)

    mc = cfg.metric
    raw = raw_metrics(model, human, human_density, mc)
    refs = CalibrationRefs(
        upper=raw_metrics(human_ref, human, human_density, mc),
        lower=raw_metrics(corner_ref, human, human_density, mc),
        center=raw_metrics(center_ref, human, human_density, mc),
    )
    normalized = normalize_all(raw, refs)
    center_normalized = normalize_all(refs.center, refs)
    debiased = {m: debias(normalized[m], center_normalized[m]) for m in METRIC_NAMES}

    ms = movement_stats(model, model.frame, cfg.coverage_grid, cfg.collapse_radius)
    hs = movement_stats(human, human.frame, cfg.coverage_grid, cfg.collapse_radius)
    d = movement_distance(ms, hs, cfg.eps)
    sim = movement_similarity(d, cfg.tau)
    score = sum(debiased[m] for m in METRIC_NAMES) / 4.0 + cfg.lam * sim

    flags = tuple(f"calibration_violation:{m}" for m in refs.violations())
    if ms.degenerate:
        flags += ("model_degenerate",)
    if hs.degenerate:
        flags += ("human_degenerate",)
    return GcsReport(
        image_id=human.image_id,
        raw=raw,
        refs=refs,
        normalized=normalized,
        center_normalized=center_normalized,
        debiased=debiased,
        model_stats=ms,
        human_stats=hs,
        movement_distance=d,
        movement_similarity=sim,
        gcs=score,
        lam=cfg.lam,
        sim_temperature=cfg.tau,
        upper_mode=upper_mode,
        flags=flags,
    )


def corpus_gcs(reports) -> float:
    """Mean of per-image GCS."""
    reports = list(reports)
    if not reports:
        raise EvakitError("no reports")
    return float(np.mean([r.gcs for r in reports]))
