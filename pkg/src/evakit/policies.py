"""Reference and perturbation gaze policies, plus the Gaussian fixation sampler."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Fixation, ReferenceFrame, Scanpath, require_nonempty

CORNERS = ("TL", "TR", "BL", "BR")
KINDS = ("predicted", "center_fixed", "corner_fixed", "random_uniform", "shuffled")
DEFAULT_INSET = 4.0  # half of the 8 px fovea


@dataclass(frozen=True)
class Policy:
    """Which fixation policy drives a rollout; ``corner`` is used by ``corner_fixed`` only."""

    kind: str = "predicted"
    corner: str = "TR"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy {self.kind!r}")
        if self.corner not in CORNERS:
            raise ValueError(f"unknown corner {self.corner!r}")

    @classmethod
    def parse(cls, text: str) -> "Policy":
        """Parse CLI names: ``predicted``, ``center``, ``corner[:tr]``, ``random``, ``shuffled``."""
        name, _, arg = text.strip().lower().partition(":")
        aliases = {"center": "center_fixed", "corner": "corner_fixed", "random": "random_uniform"}
        kind = aliases.get(name, name)
        return cls(kind, arg.upper() if arg else "TR")

    def __str__(self):
        return f"corner:{self.corner.lower()}" if self.kind == "corner_fixed" else self.kind


def _repeat(frame, n, x, y, image_id, source):
    if n < 1:
        raise ValueError("n must be >= 1")
    return Scanpath(image_id, source, frame, tuple(Fixation(x, y) for _ in range(n)))


def center_fixed(frame: ReferenceFrame, n: int, image_id: str = "", source: str = "reference") -> Scanpath:
    cx, cy = frame.center
    return _repeat(frame, n, cx, cy, image_id, source)


def corner_point(frame: ReferenceFrame, corner: str = "TR", inset: float = DEFAULT_INSET) -> tuple[float, float]:
    corner = corner.upper()
    if corner not in CORNERS:
        raise ValueError(f"unknown corner {corner!r}")
    x = frame.width - inset if corner[1] == "R" else inset
    y = frame.height - inset if corner[0] == "B" else inset
    return float(x), float(y)


def corner_fixed(frame: ReferenceFrame, n: int, corner: str = "TR", inset: float = DEFAULT_INSET,
                 image_id: str = "", source: str = "reference") -> Scanpath:
    """Every fixation at one corner, pulled inward by ``inset`` pixels on both axes."""
    x, y = corner_point(frame, corner, inset)
    return _repeat(frame, n, x, y, image_id, source)


def random_uniform(frame: ReferenceFrame, n: int, seed, image_id: str = "", source: str = "reference") -> Scanpath:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.0, frame.width, n)
    ys = rng.uniform(0.0, frame.height, n)
    return Scanpath.from_xy(image_id, source, frame, np.column_stack([xs, ys]))


def shuffled(sp: Scanpath, seed) -> Scanpath:
    """Seeded random permutation of the fixation order."""
    require_nonempty(sp)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(sp))
    return sp.with_fixations(sp.fixations[i] for i in order)


def sample_fixation(mu, sigma: float, rng: np.random.Generator) -> tuple[float, float]:
    """Draw ``(x, y)`` from an isotropic Gaussian around ``mu``.

    Two standard normals are always consumed, so the generator advances the same
    way whatever ``sigma`` is; ``sigma == 0`` returns ``mu`` exactly.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    z = rng.standard_normal(2)
    if sigma == 0:
        return float(mu[0]), float(mu[1])
    return float(mu[0] + sigma * z[0]), float(mu[1] + sigma * z[1])
