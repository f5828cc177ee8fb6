"""Fovea/periphery glimpse sensor and glimpse encoder."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import ImageFrame
from ..ingest import downsample_bilinear
from .layers import fovea_features, relu


@dataclass(frozen=True)
class GlimpseConfig:
    fovea_size: int = 8
    periphery_size: int = 16
    steps: int = 12

    def __post_init__(self):
        if self.fovea_size < 1 or self.periphery_size < self.fovea_size:
            raise ValueError("need 1 <= fovea_size <= periphery_size")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    @property
    def periphery_downscale(self) -> float:
        return self.periphery_size / self.fovea_size


@dataclass(frozen=True)
class GlimpseObservation:
    fovea: ImageFrame
    periphery: ImageFrame
    location: tuple[float, float]  # in [-1, 1]^2


def to_normalized(xy, width: int, height: int) -> tuple[float, float]:
    return 2.0 * xy[0] / width - 1.0, 2.0 * xy[1] / height - 1.0


def to_pixels(loc, width: int, height: int) -> tuple[float, float]:
    return (loc[0] + 1.0) * 0.5 * width, (loc[1] + 1.0) * 0.5 * height


def crop(img: ImageFrame, center, size: int) -> np.ndarray:
    """``size`` x ``size`` crop centred on ``center`` (pixels), zero outside the image."""
    left = math.floor(center[0] - size / 2 + 0.5)
    top = math.floor(center[1] - size / 2 + 0.5)
    out = np.zeros((size, size, img.channels), dtype=np.uint8)
    x0, y0 = max(left, 0), max(top, 0)
    x1, y1 = min(left + size, img.width), min(top + size, img.height)
    if x0 < x1 and y0 < y1:
        out[y0 - top:y1 - top, x0 - left:x1 - left] = img.pixels[y0:y1, x0:x1]
    return out


def extract_glimpse(img: ImageFrame, loc, cfg: GlimpseConfig = GlimpseConfig()) -> GlimpseObservation:
    """Glimpse at pixel location ``loc``; the periphery crop is resized down to the fovea size."""
    fovea = ImageFrame(crop(img, loc, cfg.fovea_size))
    periphery = downsample_bilinear(ImageFrame(crop(img, loc, cfg.periphery_size)), cfg.fovea_size, cfg.fovea_size)
    return GlimpseObservation(fovea, periphery, to_normalized(loc, img.width, img.height))


def encode_fovea(obs: GlimpseObservation, w) -> np.ndarray:
    x = obs.fovea.pixels.astype(float).transpose(2, 0, 1) / 255.0
    return fovea_features(x, w, len(w.dims.conv_widths))


def encode_periphery(obs: GlimpseObservation, w) -> np.ndarray:
    flat = obs.periphery.pixels.astype(float).transpose(2, 0, 1).ravel() / 255.0
    x = np.concatenate([flat, np.asarray(obs.location, dtype=float)])
    return relu(w["periphery.w"] @ x + w["periphery.b"])


def encode_glimpse(obs: GlimpseObservation, w) -> np.ndarray:
    """Glimpse vector: fovea conv features followed by periphery+location features."""
    return np.concatenate([encode_fovea(obs, w), encode_periphery(obs, w)])
