import numpy as np

from evakit.core import DEFAULT_FRAME, read_jsonl
from evakit.ingest import read_image, read_manifest, read_trace
from evakit.synth import gaze_samples, plant_fixations, smooth_image, synth_corpus


def test_plant_fixations_constraints():
    rng = np.random.default_rng(0)
    _, centres = smooth_image(rng)
    fix = plant_fixations(rng, centres, 32, DEFAULT_FRAME, 20)
    assert fix.shape == (20, 2)
    assert (fix >= 10).all() and (fix <= 214).all()
    assert (np.hypot(*np.diff(fix, axis=0).T) >= 40).all()


def test_gaze_samples_in_disc():
    rng = np.random.default_rng(1)
    fix = np.array([[50.0, 60.0], [150.0, 100.0]])
    s = gaze_samples(rng, fix, jitter=5.0)
    assert (np.diff(s[:, 2]) == 4.0).all()
    d = np.minimum(np.hypot(s[:, 0] - 50, s[:, 1] - 60), np.hypot(s[:, 0] - 150, s[:, 1] - 100))
    assert (d <= 5.0 + 1e-12).all()
    assert 30 <= len(s) <= 80


def test_corpus_layout_and_determinism(tmp_path):
    rows = synth_corpus(2, 3, tmp_path / "a", gaze_size=64)
    synth_corpus(2, 3, tmp_path / "b", gaze_size=64)
    for name in ("manifest.csv", "human.jsonl", "model.jsonl", "traces/img0001.csv", "gaze_images/img0002_gaze.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert [r["label"] for r in rows] == ["0", "1", "2"]
    assert read_manifest(tmp_path / "a" / "manifest.csv")[0]["image_id"] == "img0000"
    assert read_image(tmp_path / "a" / "gaze_images" / "img0000_gaze.png").width == 64
    assert read_image(tmp_path / "a" / "originals" / "img0000.png").width == 32
    tr = read_trace(tmp_path / "a" / "traces" / "img0000.csv")
    assert tr.samples[:, :2].max() <= 64
    human = read_jsonl(tmp_path / "a" / "human.jsonl")
    assert [len(h) for h in human] == [12, 12, 12]
