"""Score a noisy stand-in model and three reference policies against planted human scanpaths.

The always-center policy lands at exactly lambda * Sim_move, since its debiased
terms are zero by construction.  The noisy model should beat it and the corner and
random policies should fall below it.

    python demos/gcs_walkthrough.py
"""
import tempfile
from pathlib import Path

from evakit.core import read_jsonl
from evakit.gcs import corpus_gcs, gcs
from evakit.policies import center_fixed, corner_fixed, random_uniform
from evakit.synth import synth_corpus

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp)
    synth_corpus(seed=3, n_images=20, out_dir=out, gaze_size=256)
    human = read_jsonl(out / "human.jsonl")
    model = {m.image_id: m for m in read_jsonl(out / "model.jsonl")}

candidates = {
    "noisy model": lambda h: model[h.image_id],
    "center": lambda h: center_fixed(h.frame, len(h), h.image_id, "model"),
    "corner": lambda h: corner_fixed(h.frame, len(h), image_id=h.image_id, source="model"),
    "random": lambda h: random_uniform(h.frame, len(h), seed=7, image_id=h.image_id, source="model"),
}

print(f"{'policy':<12} {'GCS':>8} {'dtw':>8} {'scanmatch':>10} {'nss':>8} {'auc':>8} {'sim':>6}")
for name, make in candidates.items():
    reports = [gcs(make(h), h) for h in human]
    deb = {m: sum(r.debiased[m] for r in reports) / len(reports) for m in ("dtw", "scanmatch", "nss", "auc")}
    sim = sum(r.movement_similarity for r in reports) / len(reports)
    print(f"{name:<12} {corpus_gcs(reports):8.3f} {deb['dtw']:8.3f} {deb['scanmatch']:10.3f} "
          f"{deb['nss']:8.3f} {deb['auc']:8.3f} {sim:6.3f}")
