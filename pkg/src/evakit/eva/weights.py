"""Parameter bundle for the forward EVA network, with seeded init and a binary file format.

File layout (all integers little-endian)::

    b"EVAW1"
    uint32  number of blocks
    per block:
        uint16  name length, then UTF-8 name
        uint8   ndim, then ndim x uint32 shape
        float32 values, row-major
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .._fileio import atomic_write_bytes
from ..core import EvakitError

MAGIC = b"EVAW1"
INIT_RANGE = 0.05


class WeightFormatError(EvakitError):
    pass


@dataclass(frozen=True)
class EvaDims:
    channels: int = 3
    fovea_size: int = 8
    conv_widths: tuple[int, ...] = (64, 128, 256, 256)
    periphery_dim: int = 128
    lower_hidden: int = 256
    upper_hidden: int = 256
    key_dim: int = 64
    n_classes: int = 10

    def __post_init__(self):
        object.__setattr__(self, "conv_widths", tuple(int(w) for w in self.conv_widths))
        if not self.conv_widths:
            raise ValueError("need at least one convolution stage")
        for name in ("channels", "fovea_size", "periphery_dim", "lower_hidden", "upper_hidden", "key_dim", "n_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def fovea_features(self) -> int:
        return self.conv_widths[-1]

    @property
    def glimpse_features(self) -> int:
        return self.fovea_features + self.periphery_dim

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Canonical block names and shapes, in file order."""
        c, f = self.channels, self.fovea_size
        h1, h2, d = self.lower_hidden, self.upper_hidden, self.key_dim
        kv_in = h1 + self.fovea_features
        out: dict[str, tuple[int, ...]] = {}
        prev = c
        for i, width in enumerate(self.conv_widths):
            out[f"fovea.conv{i}.w"] = (width, prev, 3, 3)
            out[f"fovea.conv{i}.b"] = (width,)
            prev = width
        out["periphery.w"] = (self.periphery_dim, c * f * f + 2)
        out["periphery.b"] = (self.periphery_dim,)
        out["lower.w_ih"] = (4 * h1, self.glimpse_features)
        out["lower.w_hh"] = (4 * h1, h1)
        out["lower.b"] = (4 * h1,)
        out["upper.w_ih"] = (4 * h2, 2 * h2)
        out["upper.w_hh"] = (4 * h2, h2)
        out["upper.b"] = (4 * h2,)
        out["location.w"] = (2, h1)
        out["location.b"] = (2,)
        out["action.w"] = (self.n_classes, h2)
        out["action.b"] = (self.n_classes,)
        out["baseline.w"] = (1, h2)
        out["baseline.b"] = (1,)
        out["gate_td.w"] = (h2, h2)
        out["gate_td.b"] = (h2,)
        out["gate_bu.w"] = (h2, h1)
        out["gate_bu.b"] = (h2,)
        out["attn.w_q"] = (d, h2)
        out["attn.w_k"] = (d, kv_in)
        out["attn.w_v"] = (h2, kv_in)
        return out


class WeightBundle:
    """Immutable named float32 parameter blocks; indexing returns float64 views for compute."""

    def __init__(self, dims: EvaDims, params: dict[str, np.ndarray]):
        expected = dims.shapes()
        for name, shape in expected.items():
            if name not in params:
                raise WeightFormatError(f"missing block {name!r}")
            arr = np.asarray(params[name])
            if arr.shape != shape:
                raise WeightFormatError(f"block {name!r} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise WeightFormatError(f"block {name!r} has non-finite values")
        extra = set(params) - set(expected)
        if extra:
            raise WeightFormatError(f"unexpected blocks {sorted(extra)}")
        self.dims = dims
        self._f32 = {}
        self._f64 = {}
        for name in expected:
            a = np.array(params[name], dtype=np.float32)
            a.setflags(write=False)
            self._f32[name] = a
            b = a.astype(np.float64)
            b.setflags(write=False)
            self._f64[name] = b

    def __getitem__(self, name: str) -> np.ndarray:
        return self._f64[name]

    def __contains__(self, name):
        return name in self._f64

    def raw(self, name: str) -> np.ndarray:
        return self._f32[name]

    def names(self) -> list[str]:
        return list(self._f32)

    def __eq__(self, other):
        if not isinstance(other, WeightBundle) or self.dims != other.dims:
            return NotImplemented if not isinstance(other, WeightBundle) else False
        return all(np.array_equal(self._f32[k].view(np.uint32), other._f32[k].view(np.uint32)) for k in self._f32)

    def replace(self, **blocks) -> "WeightBundle":
        """Copy with some blocks swapped; keyword names use ``__`` for ``.``."""
        params = dict(self._f32)
        for key, value in blocks.items():
            params[key.replace("__", ".")] = value
        return WeightBundle(self.dims, params)


def init_weights(dims: EvaDims = EvaDims(), seed: int = 1) -> WeightBundle:
    """Uniform values in [-0.05, 0.05] for every block, drawn in file order."""
    rng = np.random.default_rng(seed)
    params = {name: rng.uniform(-INIT_RANGE, INIT_RANGE, shape).astype(np.float32) for name, shape in dims.shapes().items()}
    return WeightBundle(dims, params)


def zero_weights(dims: EvaDims = EvaDims()) -> WeightBundle:
    return WeightBundle(dims, {name: np.zeros(shape, np.float32) for name, shape in dims.shapes().items()})


def dumps_weights(w: WeightBundle) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(w.names()))]
    for name in w.names():
        arr = w.raw(name)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f4").tobytes())
    return b"".join(parts)


def save_weights(w: WeightBundle, path) -> None:
    atomic_write_bytes(path, dumps_weights(w))


def _infer_dims(blocks: dict[str, np.ndarray]) -> EvaDims:
    def need(name):
        if name not in blocks:
            raise WeightFormatError(f"missing block {name!r}")
        return blocks[name].shape

    channels = need("fovea.conv0.w")[1]
    widths = []
    i = 0
    while f"fovea.conv{i}.w" in blocks:
        widths.append(blocks[f"fovea.conv{i}.w"].shape[0])
        i += 1
    p_out, p_in = need("periphery.w")
    side2 = (p_in - 2) / channels
    f = int(round(side2 ** 0.5))
    if f * f * channels + 2 != p_in:
        raise WeightFormatError(f"block 'periphery.w' input size {p_in} is not channels*f*f+2")
    try:
        return EvaDims(
            channels=channels,
            fovea_size=f,
            conv_widths=tuple(widths),
            periphery_dim=p_out,
            lower_hidden=need("lower.w_hh")[1],
            upper_hidden=need("upper.w_hh")[1],
            key_dim=need("attn.w_q")[0],
            n_classes=need("action.w")[0],
        )
    except ValueError as exc:
        raise WeightFormatError(str(exc)) from exc


def loads_weights(data: bytes) -> WeightBundle:
    if not data.startswith(MAGIC):
        raise WeightFormatError("bad magic at offset 0")
    off = len(MAGIC)

    def take(n, what):
        nonlocal off
        if off + n > len(data):
            raise WeightFormatError(f"truncated {what} at offset {off}")
        chunk = data[off:off + n]
        off += n
        return chunk

    (count,) = struct.unpack("<I", take(4, "block count"))
    blocks: dict[str, np.ndarray] = {}
    for _ in range(count):
        start = off
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        try:
            name = take(nlen, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightFormatError(f"bad block name at offset {start}") from exc
        (ndim,) = struct.unpack("<B", take(1, "ndim"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"shape of {name!r}"))
        size = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(take(4 * size, f"values of {name!r}"), dtype="<f4").reshape(shape)
        if name in blocks:
            raise WeightFormatError(f"duplicate block {name!r} at offset {start}")
        blocks[name] = values.astype(np.float32)
    if off != len(data):
        raise WeightFormatError(f"trailing bytes at offset {off}")
    return WeightBundle(_infer_dims(blocks), blocks)


def load_weights(path) -> WeightBundle:
    return loads_weights(Path(path).read_bytes())
