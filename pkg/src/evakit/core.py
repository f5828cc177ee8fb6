"""Value types shared by every module: fixations, scanpaths, frames, grids, images.

Coordinates follow the image convention: origin at the top-left corner, x to the
right, y downward, continuous pixel units.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

SOURCES = ("human", "model", "reference")


class EvakitError(Exception):
    """Base class for input errors raised by this package."""


class InvalidFrameError(EvakitError):
    pass


class InvalidImageError(EvakitError):
    pass


class EmptyScanpathError(EvakitError):
    pass


class FrameMismatchError(EvakitError):
    pass


@dataclass(frozen=True)
class ReferenceFrame:
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidFrameError(f"frame must be positive, got {self.width}x{self.height}")

    @property
    def center(self) -> tuple[float, float]:
        return self.width / 2.0, self.height / 2.0

    @classmethod
    def parse(cls, text: str) -> "ReferenceFrame":
        """Parse ``"224x224"``."""
        try:
            w, h = text.lower().split("x")
            return cls(int(w), int(h))
        except ValueError as exc:
            raise InvalidFrameError(f"cannot parse frame {text!r}") from exc

    def __str__(self):
        return f"{self.width}x{self.height}"


DEFAULT_FRAME = ReferenceFrame(224, 224)


@dataclass(frozen=True)
class Fixation:
    x: float
    y: float
    duration: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"fixation coordinates must be finite, got ({self.x}, {self.y})")

    def in_frame(self, frame: ReferenceFrame) -> bool:
        return 0.0 <= self.x <= frame.width and 0.0 <= self.y <= frame.height


@dataclass(frozen=True)
class Scanpath:
    """Ordered fixation sequence on one image.

    ``clamped`` and ``padded`` record whether coordinates were clamped into the
    frame or the sequence was padded to a fixed length.
    """

    image_id: str
    source: str
    frame: ReferenceFrame
    fixations: tuple[Fixation, ...]
    clamped: bool = False
    padded: bool = False

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown scanpath source {self.source!r}")
        if not isinstance(self.fixations, tuple):
            object.__setattr__(self, "fixations", tuple(self.fixations))

    def __len__(self):
        return len(self.fixations)

    def __iter__(self) -> Iterator[Fixation]:
        return iter(self.fixations)

    @property
    def xy(self) -> np.ndarray:
        """Fixation positions as an ``(n, 2)`` float array."""
        return np.array([(f.x, f.y) for f in self.fixations], dtype=float).reshape(-1, 2)

    @classmethod
    def from_xy(cls, image_id, source, frame, xy, **kwargs) -> "Scanpath":
        fixations = tuple(Fixation(float(x), float(y)) for x, y in np.asarray(xy, dtype=float).reshape(-1, 2))
        return cls(image_id, source, frame, fixations, **kwargs)

    def with_fixations(self, fixations: Iterable[Fixation], **kwargs) -> "Scanpath":
        return replace(self, fixations=tuple(fixations), **kwargs)


def require_nonempty(sp: Scanpath) -> None:
    if len(sp.fixations) == 0:
        raise EmptyScanpathError(f"scanpath {sp.image_id!r} has no fixations")


def require_same_frame(a: Scanpath, b: Scanpath) -> None:
    if a.frame != b.frame:
        raise FrameMismatchError(f"frame mismatch: {a.frame} vs {b.frame}")


def normalize_scanpath(sp: Scanpath, src: ReferenceFrame, dst: ReferenceFrame) -> Scanpath:
    """Rescale fixation coordinates from ``src`` to ``dst``."""
    if src.width <= 0 or src.height <= 0:
        raise InvalidFrameError(f"invalid source frame {src}")
    if src == dst:
        return replace(sp, frame=dst)
    sx = dst.width / src.width
    sy = dst.height / src.height
    fixations = tuple(Fixation(f.x * sx, f.y * sy, f.duration) for f in sp.fixations)
    return replace(sp, frame=dst, fixations=fixations)


def clamp_to_frame(sp: Scanpath, frame: ReferenceFrame) -> Scanpath:
    clamped = False
    out = []
    for f in sp.fixations:
        x = min(max(f.x, 0.0), float(frame.width))
        y = min(max(f.y, 0.0), float(frame.height))
        if x != f.x or y != f.y:
            clamped = True
        out.append(Fixation(x, y, f.duration))
    return replace(sp, fixations=tuple(out), clamped=clamped)


@dataclass(frozen=True)
class DensityGrid:
    """Scalar field over a frame, one value per pixel cell, shape ``(height, width)``.

    ``normalization`` is one of ``"none"``, ``"probability"`` (sums to one) or
    ``"zscore"``.
    """

    frame: ReferenceFrame
    values: np.ndarray
    normalization: str = "none"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.frame.height, self.frame.width):
            raise ValueError(f"grid shape {values.shape} does not match frame {self.frame}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        if self.normalization not in ("none", "probability", "zscore"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.normalization != "zscore" and np.any(values < 0):
            raise ValueError("density values must be non-negative")
        if self.normalization == "probability" and abs(values.sum() - 1.0) > 1e-9:
            raise ValueError("probability grid must sum to 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, values, normalization="none") -> "DensityGrid":
        values = np.asarray(values, dtype=float)
        return cls(ReferenceFrame(values.shape[1], values.shape[0]), values, normalization)


@dataclass(frozen=True)
class ImageFrame:
    """8-bit image stored as a ``(height, width, channels)`` uint8 array."""

    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise InvalidImageError(f"expected (h, w, 1|3) pixels, got shape {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise InvalidImageError("empty image")
        px = np.ascontiguousarray(px, dtype=np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def frame(self) -> ReferenceFrame:
        return ReferenceFrame(self.width, self.height)


# --- scanpath JSON-lines interchange -------------------------------------------------


def scanpath_to_dict(sp: Scanpath) -> dict:
    return {
        "image_id": sp.image_id,
        "source": sp.source,
        "frame": [sp.frame.width, sp.frame.height],
        "fixations": [[f.x, f.y] for f in sp.fixations],
    }


def scanpath_from_dict(obj: dict) -> Scanpath:
    try:
        w, h = obj["frame"]
        fixations = tuple(Fixation(float(p[0]), float(p[1])) for p in obj["fixations"])
        return Scanpath(str(obj["image_id"]), obj.get("source", "human"), ReferenceFrame(int(w), int(h)), fixations)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise EvakitError(f"malformed scanpath record: {exc}") from exc


def dumps_jsonl(paths: Sequence[Scanpath]) -> str:
    # json renders floats with repr(), which round-trips exactly
    return "".join(json.dumps(scanpath_to_dict(sp)) + "\n" for sp in paths)


def loads_jsonl(text: str) -> list[Scanpath]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EvakitError(f"line {lineno}: {exc}") from exc
        out.append(scanpath_from_dict(obj))
    return out


def read_jsonl(path) -> list[Scanpath]:
    with open(path, encoding="utf-8") as fh:
        return loads_jsonl(fh.read())
