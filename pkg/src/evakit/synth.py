"""Desk-scale synthetic corpus: smooth images, planted human scanpaths, dense gaze traces."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from ._fileio import atomic_write_text
from .core import DEFAULT_FRAME, ImageFrame, ReferenceFrame, Scanpath, dumps_jsonl
from .ingest import GazeTrace, _round_half_up, resize_bilinear, write_image, write_trace


def smooth_image(rng: np.random.Generator, size: int = 32, n_blobs: int = 4) -> tuple[ImageFrame, np.ndarray]:
    """Sum of coloured Gaussian blobs over a colour gradient; returns the image and blob centres."""
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    img = np.zeros((size, size, 3))
    base = rng.uniform(20, 120, 3)
    grad = rng.uniform(-60, 60, (2, 3))
    img += base + (xx[..., None] / size) * grad[0] + (yy[..., None] / size) * grad[1]
    centres = rng.uniform(0.15 * size, 0.85 * size, (n_blobs, 2))
    for cx, cy in centres:
        s = rng.uniform(0.08, 0.2) * size
        amp = rng.uniform(60, 160, 3) * rng.choice([-1, 1])
        img += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))[..., None]
    return ImageFrame(np.clip(np.round(img), 0, 255).astype(np.uint8)), centres


def plant_fixations(rng, centres, image_size, frame: ReferenceFrame, n: int = 12,
                    min_step: float = 40.0, margin: float = 10.0) -> np.ndarray:
    """Fixations near the blob centres (in ``frame`` pixels), consecutive ones at least ``min_step`` apart."""
    scale = np.array([frame.width / image_size, frame.height / image_size])
    targets = centres * scale
    lo, hi = margin, np.array([frame.width, frame.height]) - margin
    out = []
    while len(out) < n:
        if rng.random() < 0.7:
            p = targets[rng.integers(len(targets))] + rng.normal(0, 12, 2)
        else:
            p = rng.uniform(lo, hi)
        p = np.clip(p, lo, hi)
        if out and np.hypot(*(p - out[-1])) < min_step:
            continue
        out.append(p)
    return np.array(out)


def gaze_samples(rng, fixations: np.ndarray, jitter: float = 5.0, per_fix=(15, 40), dt: float = 4.0) -> np.ndarray:
    """Samples scattered uniformly in a disc of radius ``jitter`` around each fixation, with timestamps."""
    rows = []
    t = 0.0
    for fx, fy in fixations:
        k = int(rng.integers(per_fix[0], per_fix[1] + 1))
        r = jitter * np.sqrt(rng.uniform(0, 1, k))
        a = rng.uniform(0, 2 * np.pi, k)
        for ri, ai in zip(r, a):
            rows.append((fx + ri * np.cos(ai), fy + ri * np.sin(ai), t))
            t += dt
    return np.array(rows)


def upsample(img: ImageFrame, size: int) -> ImageFrame:
    out = resize_bilinear(img.pixels.astype(float), size, size)
    return ImageFrame(np.clip(_round_half_up(out), 0, 255).astype(np.uint8))


def synth_corpus(seed: int, n_images: int, out_dir, image_size: int = 32, gaze_size: int = 1024,
                 frame: ReferenceFrame = DEFAULT_FRAME, n_fixations: int = 12, jitter: float = 5.0,
                 model_noise: float = 20.0, n_classes: int = 10) -> list[dict]:
    """Write a synthetic corpus to ``out_dir`` and return its manifest rows.

    Layout::

        originals/<id>.png          image_size x image_size originals
        originals/labels.csv        image_id,label
        gaze_images/<id>_gaze.png   originals upsampled to gaze_size
        traces/<id>.csv             x,y,t gaze samples in gaze-image pixels
        manifest.csv                trace_file,image_file,image_id,original_file,label
        human.jsonl                 planted fixations in ``frame``
        model.jsonl                 planted fixations plus Gaussian noise, a stand-in model
    """
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    out = Path(out_dir)
    for sub in ("originals", "gaze_images", "traces"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    gaze_scale = gaze_size / frame.width, gaze_size / frame.height
    rows, humans, models = [], [], []
    for i in range(n_images):
        image_id = f"img{i:04d}"
        label = i % n_classes
        img, centres = smooth_image(rng, image_size)
        fix = plant_fixations(rng, centres, image_size, frame, n_fixations)
        samples = gaze_samples(rng, fix, jitter)
        noisy = np.clip(fix + rng.normal(0, model_noise, fix.shape), 0, [frame.width, frame.height])

        write_image(out / "originals" / f"{image_id}.png", img)
        write_image(out / "gaze_images" / f"{image_id}_gaze.png", upsample(img, gaze_size))
        trace = GazeTrace(f"{image_id}_gaze", samples).scaled(*gaze_scale)
        write_trace(out / "traces" / f"{image_id}.csv", trace)
        humans.append(Scanpath.from_xy(image_id, "human", frame, fix))
        models.append(Scanpath.from_xy(image_id, "model", frame, noisy))
        rows.append({
            "trace_file": f"traces/{image_id}.csv",
            "image_file": f"gaze_images/{image_id}_gaze.png",
            "image_id": image_id,
            "original_file": f"originals/{image_id}.png",
            "label": str(label),
        })

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    atomic_write_text(out / "manifest.csv", buf.getvalue())
    atomic_write_text(out / "originals" / "labels.csv",
                      "image_id,label\n" + "".join(f"{r['image_id']},{r['label']}\n" for r in rows))
    atomic_write_text(out / "human.jsonl", dumps_jsonl(humans))
    atomic_write_text(out / "model.jsonl", dumps_jsonl(models))
    return rows
