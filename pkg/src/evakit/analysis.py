"""Experiment harnesses: gaze-perturbation study, init-sensitivity sweep, PCA of hidden states."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import EvakitError, ImageFrame
from .eva.control import VarianceController
from .eva.glimpse import GlimpseConfig
from .eva.rollout import rollout
from .gcs import movement_stats
from .policies import Policy

STUDY_POLICIES = ("predicted", "center", "corner:tr", "random", "shuffled")


@dataclass(frozen=True)
class Sample:
    image_id: str
    image: ImageFrame
    label: int


def image_seed(seed: int, image_id: str) -> int:
    """Per-image seed, independent of processing order."""
    return int(np.random.SeedSequence([int(seed), zlib.crc32(image_id.encode())]).generate_state(1)[0])


def _sorted(samples: Sequence[Sample]) -> list[Sample]:
    samples = sorted(samples, key=lambda s: s.image_id)
    if not samples:
        raise EvakitError("need at least one labelled image")
    return samples


# --- perturbation study ---------------------------------------------------------------


@dataclass
class PerturbationReport:
    policies: list[str]
    accuracy: dict[str, float]
    delta: dict[str, float]
    outcomes: dict[str, list[tuple[str, int, int]]]  # (image_id, label, prediction)
    n_images: int
    seed: int

    def rows(self) -> list[dict]:
        return [{"policy": p, "accuracy": self.accuracy[p], "delta": self.delta[p], "n_images": self.n_images} for p in self.policies]


def run_perturbation_study(samples: Sequence[Sample], w, cfg: GlimpseConfig = GlimpseConfig(),
                           policies: Sequence[str] = STUDY_POLICIES, seed: int = 1,
                           vc_init: VarianceController | None = None) -> PerturbationReport:
    """Accuracy of the same weights under each gaze policy, and its change vs ``predicted``.

    ``predicted`` is always evaluated.  Accuracy uses the final-step prediction.
    """
    samples = _sorted(samples)
    names = [str(Policy.parse(p)) for p in policies]
    if "predicted" not in names:
        names.insert(0, "predicted")
    outcomes = {}
    accuracy = {}
    for name in names:
        res = []
        for s in samples:
            tr = rollout(s.image, w, cfg, vc_init, name, image_seed(seed, s.image_id), image_id=s.image_id, keep_states=False)
            res.append((s.image_id, s.label, tr.y_hat))
        outcomes[name] = res
        accuracy[name] = sum(int(lab == pred) for _, lab, pred in res) / len(res)
    delta = {p: accuracy[p] - accuracy["predicted"] for p in names}
    return PerturbationReport(names, accuracy, delta, outcomes, len(samples), seed)


# --- PCA ------------------------------------------------------------------------------


@dataclass
class PcaResult:
    components: np.ndarray  # (2, D), rows orthonormal
    explained_variance: np.ndarray  # (2,)
    mean: np.ndarray
    projected: dict = field(default_factory=dict)  # (class, step) -> (pc1, pc2)

    def project(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) @ self.components.T

    def reconstruct(self, p) -> np.ndarray:
        return np.asarray(p, dtype=float) @ self.components + self.mean


def principal_axes(x: np.ndarray, k: int = 2):
    """Top-``k`` eigenpairs of the population covariance of the rows of ``x``.

    Each eigenvector is signed so that its largest-magnitude coordinate is positive.
    """
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / len(x)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:k]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order].T
    for i in range(len(vecs)):
        j = np.argmax(np.abs(vecs[i]))
        if vecs[i, j] < 0:
            vecs[i] = -vecs[i]
    return vecs, vals, mean


def pca_trajectories(states, labels) -> PcaResult:
    """Fit PCA on pooled hidden states and project class-wise mean trajectories.

    ``states`` has shape (samples, steps, dims) or (samples, dims).
    """
    states = np.asarray(states, dtype=float)
    if states.ndim == 2:
        states = states[:, None, :]
    n, T, D = states.shape
    labels = np.asarray(labels)
    if n < 2 or D < 2:
        raise EvakitError("PCA needs at least 2 samples and 2 dimensions")
    if len(labels) != n:
        raise EvakitError("one label per sample required")
    pooled = states.reshape(n * T, D)
    if np.ptp(pooled, axis=0).max() == 0:
        raise EvakitError("PCA input has zero variance")
    comps, var, mean = principal_axes(pooled, 2)
    result = PcaResult(comps, var, mean)
    for c in sorted(set(labels.tolist())):
        class_mean = states[labels == c].mean(axis=0)  # (T, D)
        proj = result.project(class_mean)
        for t in range(T):
            result.projected[(c, t + 1)] = (float(proj[t, 0]), float(proj[t, 1]))
    return result


def collect_states(samples: Sequence[Sample], w, cfg: GlimpseConfig = GlimpseConfig(), layer: str = "upper",
                   seed: int = 1, vc_init=None) -> tuple[np.ndarray, np.ndarray]:
    samples = _sorted(samples)
    states = [rollout(s.image, w, cfg, vc_init, "predicted", image_seed(seed, s.image_id), image_id=s.image_id).states(layer)
              for s in samples]
    return np.stack(states), np.array([s.label for s in samples])


# --- init sensitivity -----------------------------------------------------------------


@dataclass(frozen=True)
class InitCondition:
    """Test-time initial conditions. ``init_fixation`` is in pixels (None: image centre);
    ``init_states`` is ``"zero"`` or ``"random"`` (uniform in +-``state_scale``)."""

    name: str
    init_fixation: tuple[float, float] | None = None
    init_sigma: float | None = None
    init_states: str = "zero"
    state_scale: float = 0.1


@dataclass
class InitSweepRow:
    condition: str
    first_step_amplitude: float
    spatial_coverage: float
    accuracy: float


@dataclass
class InitSweepReport:
    rows: list[InitSweepRow]
    seed: int


def _initial_states(cond: InitCondition, dims, seed: int):
    if cond.init_states == "zero":
        return None
    if cond.init_states != "random":
        raise EvakitError(f"unknown init_states {cond.init_states!r}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    s = cond.state_scale
    return (rng.uniform(-s, s, dims.lower_hidden), rng.uniform(-s, s, dims.lower_hidden),
            rng.uniform(-s, s, dims.upper_hidden), rng.uniform(-s, s, dims.upper_hidden))


def init_sweep(samples: Sequence[Sample], w, cfg: GlimpseConfig = GlimpseConfig(),
               conditions: Sequence[InitCondition] = (), seed: int = 1,
               vc_init: VarianceController | None = None, coverage_grid=(7, 7)) -> InitSweepReport:
    """Mean first-step saccade amplitude (image pixels), spatial coverage and accuracy per condition."""
    if not conditions:
        raise EvakitError("need at least one init condition")
    samples = _sorted(samples)
    rows = []
    for cond in conditions:
        amps, covs, hits = [], [], 0
        for s in samples:
            sd = image_seed(seed, s.image_id)
            tr = rollout(s.image, w, cfg, vc_init, "predicted", sd, image_id=s.image_id,
                         init_fixation=cond.init_fixation, init_sigma=cond.init_sigma, init_states=_initial_states(cond, w.dims, sd), keep_states=False)
            loc = tr.locations
            amps.append(math.hypot(*(loc[1] - loc[0])) if len(loc) > 1 else 0.0)
            covs.append(movement_stats(tr.scanpath(), coverage_grid=coverage_grid).spatial_coverage)
            hits += int(tr.y_hat == s.label)
        rows.append(InitSweepRow(cond.name, float(np.mean(amps)), float(np.mean(covs)), hits / len(samples)))
    return InitSweepReport(rows, seed)
