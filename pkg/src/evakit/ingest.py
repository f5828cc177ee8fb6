"""Gaze-data ingestion: image I/O, perceptual-hash alignment and I-DT fixation extraction."""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.fft import dct

from ._fileio import atomic_write_bytes, atomic_write_text
from .core import EvakitError, Fixation, ImageFrame, InvalidImageError

LUMA = np.array([0.299, 0.587, 0.114])
HASH_SIZE = 8
HASH_IMAGE_SIZE = 32


# --- images ---------------------------------------------------------------------------


def read_image(path) -> ImageFrame:
    """Read a PNG or binary PPM/PGM file."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in (".png", ".ppm", ".pgm", ".pnm"):
        raise InvalidImageError(f"unsupported image format: {path.name}")
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return ImageFrame(np.asarray(im))
    except UnidentifiedImageError as exc:
        raise InvalidImageError(f"cannot decode {path}") from exc


def write_image(path, img: ImageFrame) -> None:
    px = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
    fmt = {".png": "PNG", ".ppm": "PPM", ".pgm": "PPM"}.get(Path(path).suffix.lower())
    if fmt is None:
        raise InvalidImageError(f"{path}: only PNG and PPM/PGM are written")
    buf = io.BytesIO()
    Image.fromarray(px).save(buf, format=fmt, **({"compress_level": 1} if fmt == "PNG" else {}))
    atomic_write_bytes(path, buf.getvalue())


def to_gray(img: ImageFrame) -> np.ndarray:
    """Float luma image of shape (h, w)."""
    px = img.pixels.astype(float)
    if img.channels == 1:
        return px[:, :, 0]
    return px @ LUMA


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5)


def resize_bilinear(arr: np.ndarray, w: int, h: int) -> np.ndarray:
    """Bilinear resampling of a float array ``(H, W[, C])`` with half-pixel alignment.

    Output pixel ``i`` samples source position ``(i + 0.5) * W / w - 0.5``, clamped
    to the valid range; no antialiasing prefilter.
    """
    if w <= 0 or h <= 0:
        raise ValueError(f"target size must be positive, got {w}x{h}")
    arr = np.asarray(arr, dtype=float)
    H, W = arr.shape[:2]
    if (H, W) == (h, w):
        return arr.copy()

    def axis(n_out, n_in):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        i0 = np.floor(pos).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, pos - i0

    y0, y1, fy = axis(h, H)
    x0, x1, fx = axis(w, W)
    if arr.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bottom = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def downsample_bilinear(img: ImageFrame, w: int, h: int) -> ImageFrame:
    """Resize an 8-bit image; interpolated values are rounded half-up."""
    if (img.width, img.height) == (w, h):
        return img
    out = resize_bilinear(img.pixels.astype(float), w, h)
    return ImageFrame(np.clip(_round_half_up(out), 0, 255).astype(np.uint8))


# --- perceptual hash ------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class PerceptualHash:
    bits: int

    def __post_init__(self):
        if not 0 <= self.bits < (1 << 64):
            raise ValueError("hash must fit in 64 bits")

    def hex(self) -> str:
        return f"{self.bits:016x}"

    @classmethod
    def from_hex(cls, text: str) -> "PerceptualHash":
        return cls(int(text, 16))

    def __str__(self):
        return self.hex()


def _hash_coefficients(img: ImageFrame) -> np.ndarray:
    gray = to_gray(img)
    small = resize_bilinear(gray, HASH_IMAGE_SIZE, HASH_IMAGE_SIZE)
    coeffs = dct(dct(small, type=2, axis=0), type=2, axis=1)
    block = coeffs[:HASH_SIZE, :HASH_SIZE].ravel()[1:]
    vals = np.append(block, coeffs[HASH_SIZE, 0])
    # flatten round-off so a constant image yields exact zeros
    scale = 1e-9 * (1.0 + abs(coeffs[0, 0]))
    vals[np.abs(vals) < scale] = 0.0
    return vals


def phash(img: ImageFrame) -> PerceptualHash:
    """64-bit DCT perceptual hash.

    Luma conversion, bilinear resize to 32x32, 2-D DCT-II, then the 8x8
    low-frequency block without the DC term plus coefficient (8, 0).  Each
    coefficient above the median of those 64 values sets its bit; bits are
    packed row-major, most significant first, with (8, 0) last.
    """
    if img.width == 0 or img.height == 0:
        raise InvalidImageError("empty image")
    vals = _hash_coefficients(img)
    med = np.median(vals)
    bits = 0
    for v in vals:
        bits = (bits << 1) | int(v > med)
    return PerceptualHash(bits)


def hamming(a: PerceptualHash, b: PerceptualHash) -> int:
    return (a.bits ^ b.bits).bit_count()


@dataclass(frozen=True)
class IndexEntry:
    hash: PerceptualHash
    image_id: str
    label: str | None = None


@dataclass
class HashIndex:
    entries: list[IndexEntry] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.image_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise EvakitError("duplicate image_id in hash index")

    def __len__(self):
        return len(self.entries)

    def add(self, image_id: str, img: ImageFrame, label: str | None = None) -> IndexEntry:
        if any(e.image_id == image_id for e in self.entries):
            raise EvakitError(f"duplicate image_id {image_id!r}")
        entry = IndexEntry(phash(img), image_id, label)
        self.entries.append(entry)
        return entry

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["hash_hex", "image_id", "label"])
        for e in self.entries:
            writer.writerow([e.hash.hex(), e.image_id, "" if e.label is None else e.label])
        return buf.getvalue()

    def save(self, path) -> None:
        atomic_write_text(path, self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "HashIndex":
        rows = list(csv.DictReader(io.StringIO(text)))
        try:
            entries = [IndexEntry(PerceptualHash.from_hex(r["hash_hex"]), r["image_id"], r.get("label") or None) for r in rows]
        except (KeyError, ValueError) as exc:
            raise EvakitError(f"malformed hash index: {exc}") from exc
        return cls(entries)

    @classmethod
    def load(cls, path) -> "HashIndex":
        with open(path, encoding="utf-8") as fh:
            return cls.from_csv(fh.read())


@dataclass(frozen=True)
class Match:
    image_id: str
    distance: int
    exact: bool
    label: str | None = None


def match_image(query: ImageFrame, index: HashIndex) -> Match:
    """Nearest index entry under Hamming distance; ties go to the smallest image_id."""
    if len(index) == 0:
        raise EvakitError("hash index is empty")
    h = phash(query)
    best = min(index.entries, key=lambda e: (hamming(h, e.hash), e.image_id))
    d = hamming(h, best.hash)
    return Match(best.image_id, d, d == 0, best.label)


def build_index(image_dir, labels: dict[str, str] | None = None) -> HashIndex:
    """Hash every PNG/PPM/PGM in ``image_dir``; ids are file stems."""
    labels = labels or {}
    index = HashIndex()
    for path in sorted(Path(image_dir).iterdir()):
        if path.suffix.lower() in (".png", ".ppm", ".pgm", ".pnm"):
            index.add(path.stem, read_image(path), labels.get(path.stem))
    return index


# --- gaze traces and fixations --------------------------------------------------------


@dataclass(frozen=True)
class GazeTrace:
    """Dense gaze samples, ``samples`` has shape (n, 3) with NaN for missing time."""

    image_ref: str
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[1] not in (2, 3):
            raise EvakitError("gaze samples must be (n, 2) or (n, 3)")
        if s.shape[1] == 2:
            s = np.column_stack([s, np.full(len(s), np.nan)])
        if len(s) == 0:
            raise EvakitError(f"gaze trace {self.image_ref!r} is empty")
        if not np.all(np.isfinite(s[:, :2])):
            raise EvakitError(f"gaze trace {self.image_ref!r} has non-finite coordinates")
        object.__setattr__(self, "samples", s)

    @property
    def xy(self) -> np.ndarray:
        return self.samples[:, :2]

    def scaled(self, sx: float, sy: float) -> "GazeTrace":
        s = self.samples.copy()
        s[:, 0] *= sx
        s[:, 1] *= sy
        return GazeTrace(self.image_ref, s)


def read_trace(path, image_ref: str | None = None) -> GazeTrace:
    """Read a gaze CSV with header ``x,y[,t]``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "y"} <= set(reader.fieldnames):
            raise EvakitError(f"{path}: expected header x,y[,t]")
        rows = []
        for lineno, r in enumerate(reader, 2):
            try:
                t = r.get("t")
                rows.append((float(r["x"]), float(r["y"]), float(t) if t not in (None, "") else math.nan))
            except ValueError as exc:
                raise EvakitError(f"{path}:{lineno}: {exc}") from exc
    return GazeTrace(image_ref or Path(path).stem, np.array(rows, dtype=float).reshape(-1, 3))


def write_trace(path, trace: GazeTrace) -> None:
    has_t = not np.all(np.isnan(trace.samples[:, 2]))
    lines = ["x,y,t" if has_t else "x,y"]
    for x, y, t in trace.samples:
        x, y, t = float(x), float(y), float(t)
        lines.append(f"{x!r},{y!r},{t!r}" if has_t else f"{x!r},{y!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def idt_fixations(trace: GazeTrace, radius: float) -> list[Fixation]:
    """Radius-only I-DT clustering.

    A cluster grows while the next sample lies within ``radius`` of the cluster's
    running centroid; otherwise the centroid is emitted and a new cluster starts
    at that sample.  There is no minimum duration.  Durations are reported when
    timestamps are present.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    return [fix for fix, _ in _idt_clusters(trace, radius)]


def _idt_clusters(trace: GazeTrace, radius: float):
    s = trace.samples
    out = []
    start = 0
    cx, cy = s[0, 0], s[0, 1]
    count = 1

    def emit(lo, hi):
        t0, t1 = s[lo, 2], s[hi - 1, 2]
        dur = float(t1 - t0) if np.isfinite(t0) and np.isfinite(t1) else None
        out.append((Fixation(float(cx), float(cy), dur), (lo, hi)))

    for i in range(1, len(s)):
        x, y = s[i, 0], s[i, 1]
        if math.hypot(x - cx, y - cy) <= radius:
            count += 1
            cx += (x - cx) / count
            cy += (y - cy) / count
        else:
            emit(start, i)
            start, cx, cy, count = i, x, y, 1
    emit(start, len(s))
    return out


def fit_length(fixations: Sequence[Fixation], n: int) -> tuple[list[Fixation], bool]:
    """Truncate or pad to exactly ``n`` fixations.

    Short sequences are padded by repeating the last fixation; the second return
    value tells whether padding happened.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if len(fixations) == 0:
        raise EvakitError("cannot fit an empty fixation list")
    fixations = list(fixations)
    if len(fixations) >= n:
        return fixations[:n], False
    return fixations + [fixations[-1]] * (n - len(fixations)), True


def read_manifest(path) -> list[dict]:
    """Rows of a CSV manifest, with relative file columns resolved against its directory."""
    base = Path(path).parent
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for key, value in r.items():
            if key.endswith("_file") and value and not os.path.isabs(value):
                r[key] = str(base / value)
    return rows
