"""Scanpath and saliency similarity metrics: DTW, ScanMatch, NSS, AUC."""
from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .core import (
    DensityGrid,
    EvakitError,
    Fixation,
    ReferenceFrame,
    Scanpath,
    require_nonempty,
    require_same_frame,
)


@dataclass(frozen=True)
class MetricConfig:
    scanmatch_grid: tuple[int, int] = (14, 14)
    scanmatch_gap: float = 0.2
    scanmatch_sub_scale: float = 1.0
    nss_sigma: float = 11.2
    auc_negatives: int = 1000
    rng_seed: int = 1

    def __post_init__(self):
        cols, rows = self.scanmatch_grid
        if cols < 1 or rows < 1:
            raise ValueError("scanmatch grid needs at least one cell per axis")
        if self.nss_sigma <= 0:
            raise ValueError("nss_sigma must be positive")
        if self.auc_negatives < 1:
            raise ValueError("auc_negatives must be >= 1")
        object.__setattr__(self, "scanmatch_grid", (int(cols), int(rows)))


@dataclass(frozen=True)
class RawMetrics:
    dtw: float
    scanmatch: float
    nss: float
    auc: float

    def as_dict(self) -> dict:
        return asdict(self)


METRIC_NAMES = ("dtw", "scanmatch", "nss", "auc")


# --- DTW ------------------------------------------------------------------------------


def dtw(a: Scanpath, b: Scanpath) -> float:
    """Summed Euclidean DTW cost, boundary-aligned, no window, no length normalization."""
    require_nonempty(a)
    require_nonempty(b)
    require_same_frame(a, b)
    return dtw_cost(a.xy, b.xy)


def dtw_cost(p: np.ndarray, q: np.ndarray) -> float:
    dist = np.sqrt(((p[:, None, :] - q[None, :, :]) ** 2).sum(-1))
    n, m = dist.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row, prev = acc[i], acc[i - 1]
        d = dist[i - 1]
        for j in range(1, m + 1):
            row[j] = d[j - 1] + min(prev[j - 1], prev[j], row[j - 1])
    return float(acc[n, m])


# --- ScanMatch ------------------------------------------------------------------------


def quantize(sp: Scanpath, grid: tuple[int, int]) -> np.ndarray:
    """Grid cell ``(col, row)`` of each fixation; edge positions fall in the last cell."""
    cols, rows = grid
    xy = sp.xy
    c = np.clip(np.floor(xy[:, 0] / sp.frame.width * cols), 0, cols - 1).astype(int)
    r = np.clip(np.floor(xy[:, 1] / sp.frame.height * rows), 0, rows - 1).astype(int)
    return np.column_stack([c, r])


def substitution_matrix(cells_a: np.ndarray, cells_b: np.ndarray, grid: tuple[int, int], sub_scale: float) -> np.ndarray:
    cols, rows = grid
    d_max = math.hypot(cols - 1, rows - 1)
    d = np.sqrt(((cells_a[:, None, :] - cells_b[None, :, :]) ** 2).sum(-1).astype(float))
    if d_max == 0:
        return np.full(d.shape, float(sub_scale))
    return sub_scale * (1.0 - d / d_max)


def needleman_wunsch(sub: np.ndarray, gap: float) -> float:
    """Optimal global alignment score for a substitution matrix and linear gap cost."""
    n, m = sub.shape
    score = np.empty((n + 1, m + 1))
    score[0, :] = -gap * np.arange(m + 1)
    score[:, 0] = -gap * np.arange(n + 1)
    for i in range(1, n + 1):
        row, prev, s = score[i], score[i - 1], sub[i - 1]
        for j in range(1, m + 1):
            row[j] = max(prev[j - 1] + s[j - 1], prev[j] - gap, row[j - 1] - gap)
    return float(score[n, m])


def scanmatch(a: Scanpath, b: Scanpath, cfg: MetricConfig = MetricConfig()) -> float:
    """ScanMatch similarity, normalized so a scanpath matched with itself scores 1.

    Fixations are binned on ``cfg.scanmatch_grid``; substitution scores fall off
    linearly with the distance between cell centres and reach zero at the grid
    diagonal.  Alignments of very different lengths can score below zero.
    """
    require_nonempty(a)
    require_nonempty(b)
    require_same_frame(a, b)
    grid = cfg.scanmatch_grid
    sub = substitution_matrix(quantize(a, grid), quantize(b, grid), grid, cfg.scanmatch_sub_scale)
    raw = needleman_wunsch(sub, cfg.scanmatch_gap * cfg.scanmatch_sub_scale)
    return raw / (cfg.scanmatch_sub_scale * max(len(a), len(b)))


# --- saliency -------------------------------------------------------------------------


def density_grid(paths: Sequence[Scanpath], frame: ReferenceFrame, sigma: float) -> DensityGrid:
    """Sum of isotropic Gaussians (cut at 4 sigma) at every fixation, normalized to sum 1.

    Cell ``(r, c)`` is evaluated at its centre ``(c + 0.5, r + 0.5)``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    pts = [p for sp in paths for p in sp.xy]
    if not pts:
        raise EvakitError("density grid needs at least one fixation")
    grid = np.zeros((frame.height, frame.width))
    cut = 4.0 * sigma
    for x, y in pts:
        c0 = max(int(math.floor(x - cut - 0.5)), 0)
        c1 = min(int(math.ceil(x + cut - 0.5)) + 1, frame.width)
        r0 = max(int(math.floor(y - cut - 0.5)), 0)
        r1 = min(int(math.ceil(y + cut - 0.5)) + 1, frame.height)
        if c0 >= c1 or r0 >= r1:
            continue
        dx = np.arange(c0, c1) + 0.5 - x
        dy = np.arange(r0, r1) + 0.5 - y
        d2 = dy[:, None] ** 2 + dx[None, :] ** 2
        k = np.exp(-d2 / (2 * sigma * sigma))
        k[d2 > cut * cut] = 0.0
        grid[r0:r1, c0:c1] += k
    total = grid.sum()
    if total <= 0:
        raise EvakitError("all fixations fall outside the density frame")
    return DensityGrid(frame, grid / total, "probability")


def sample_bilinear(values: np.ndarray, xy: np.ndarray) -> np.ndarray:
    """Bilinear lookup of cell-centred grid values at continuous positions, edge-clamped."""
    h, w = values.shape
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    gx = np.clip(xy[:, 0] - 0.5, 0.0, w - 1)
    gy = np.clip(xy[:, 1] - 0.5, 0.0, h - 1)
    x0 = np.floor(gx).astype(int)
    y0 = np.floor(gy).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = gx - x0
    fy = gy - y0
    top = values[y0, x0] * (1 - fx) + values[y0, x1] * fx
    bottom = values[y1, x0] * (1 - fx) + values[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def _positions(fixations) -> np.ndarray:
    if isinstance(fixations, Scanpath):
        return fixations.xy
    if len(fixations) and isinstance(fixations[0], Fixation):
        return np.array([(f.x, f.y) for f in fixations], dtype=float)
    return np.asarray(fixations, dtype=float).reshape(-1, 2)


def _grid_values(sal) -> np.ndarray:
    # plain arrays are accepted so signed or rescaled maps need no DensityGrid flag
    if isinstance(sal, DensityGrid):
        return sal.values
    v = np.asarray(sal, dtype=float)
    if v.ndim != 2 or not np.all(np.isfinite(v)):
        raise EvakitError("saliency map must be a finite 2-D array")
    return v


def nss(sal: DensityGrid, fixations) -> float:
    """Mean z-scored saliency at the fixations; 0 for a constant map."""
    xy = _positions(fixations)
    if len(xy) == 0:
        raise EvakitError("nss needs at least one fixation")
    v = _grid_values(sal)
    if np.ptp(v) == 0:
        return 0.0
    z = (v - v.mean()) / v.std()
    return float(sample_bilinear(z, xy).mean())


def auc_rng(cfg: MetricConfig, key: str = "") -> np.random.Generator:
    """Generator for AUC negatives, derived from the config seed and an image key."""
    return np.random.default_rng(np.random.SeedSequence([cfg.rng_seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(key.encode())]))


def mann_whitney_auc(pos: np.ndarray, neg: np.ndarray) -> float:
    """P(pos > neg) + 0.5 P(pos == neg) from average ranks."""
    n_p, n_n = len(pos), len(neg)
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[:n_p].sum() - n_p * (n_p + 1) / 2.0
    return float(u / (n_p * n_n))


def auc(sal: DensityGrid, fixations, cfg: MetricConfig = MetricConfig(), key: str = "") -> float:
    """Borji AUC: saliency at fixations against ``cfg.auc_negatives`` uniform random points.

    Negatives come from a generator seeded by ``(cfg.rng_seed, key)``, so two calls
    with the same key see the same negative points.
    """
    xy = _positions(fixations)
    if len(xy) == 0:
        raise EvakitError("auc needs at least one fixation")
    v = _grid_values(sal)
    if np.ptp(v) == 0:
        return 0.5
    rng = auc_rng(cfg, key)
    h, w = v.shape
    neg_xy = np.column_stack([rng.uniform(0, w, cfg.auc_negatives), rng.uniform(0, h, cfg.auc_negatives)])
    return mann_whitney_auc(sample_bilinear(v, xy), sample_bilinear(v, neg_xy))


def raw_metrics(model: Scanpath, human: Scanpath, human_density: DensityGrid, cfg: MetricConfig = MetricConfig()) -> RawMetrics:
    """All four metrics for one model/human pair. AUC negatives are keyed by the human image id."""
    return RawMetrics(
        dtw=dtw(model, human),
        scanmatch=scanmatch(model, human, cfg),
        nss=nss(human_density, model),
        auc=auc(human_density, model, cfg, key=human.image_id),
    )


# --- DensityGrid file format ----------------------------------------------------------


def dumps_grid(grid: DensityGrid) -> bytes:
    """``DGRID <w> <h> <flags>\\n`` followed by little-endian float32 cells, row-major."""
    header = f"DGRID {grid.frame.width} {grid.frame.height} {grid.normalization}\n".encode("ascii")
    return header + grid.values.astype("<f4").tobytes()


def loads_grid(data: bytes) -> DensityGrid:
    nl = data.find(b"\n")
    if nl < 0:
        raise EvakitError("DGRID header missing")
    parts = data[:nl].decode("ascii", "replace").split()
    if len(parts) != 4 or parts[0] != "DGRID":
        raise EvakitError(f"bad DGRID header at offset 0: {data[:nl]!r}")
    w, h, flags = int(parts[1]), int(parts[2]), parts[3]
    body = data[nl + 1:]
    if len(body) != 4 * w * h:
        raise EvakitError(f"DGRID body at offset {nl + 1} has {len(body)} bytes, expected {4 * w * h}")
    values = np.frombuffer(body, dtype="<f4").astype(float).reshape(h, w)
    if flags == "probability":
        # float32 storage loses the exact unit sum
        values = values / values.sum()
    return DensityGrid(ReferenceFrame(w, h), values, flags)

