import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evakit.core import (
    DEFAULT_FRAME,
    DensityGrid,
    EmptyScanpathError,
    EvakitError,
    Fixation,
    FrameMismatchError,
    ImageFrame,
    InvalidFrameError,
    InvalidImageError,
    ReferenceFrame,
    Scanpath,
    clamp_to_frame,
    dumps_jsonl,
    loads_jsonl,
    normalize_scanpath,
    require_nonempty,
    require_same_frame,
)

from conftest import path

coord = st.floats(-500, 1500, allow_nan=False, allow_infinity=False)
points = st.lists(st.tuples(coord, coord), min_size=1, max_size=15)
frames = st.builds(ReferenceFrame, st.integers(1, 2048), st.integers(1, 2048))


def test_frame_parse_and_center():
    f = ReferenceFrame.parse("224x160")
    assert (f.width, f.height) == (224, 160)
    assert f.center == (112.0, 80.0)
    assert str(f) == "224x160"


@pytest.mark.parametrize("text", ["224", "ax3", "0x10", "-5x5"])
def test_frame_parse_rejects(text):
    with pytest.raises(InvalidFrameError):
        ReferenceFrame.parse(text)


def test_fixation_must_be_finite():
    with pytest.raises(ValueError):
        Fixation(float("nan"), 1.0)


def test_scanpath_source_checked():
    with pytest.raises(ValueError):
        Scanpath("a", "robot", DEFAULT_FRAME, ())


def test_normalize_examples():
    sp = path([(512, 256)], frame=ReferenceFrame(1024, 1024))
    out = normalize_scanpath(sp, ReferenceFrame(1024, 1024), DEFAULT_FRAME)
    assert out.xy.tolist() == [[112.0, 56.0]]
    assert out.frame == DEFAULT_FRAME
    same = normalize_scanpath(sp, sp.frame, sp.frame)
    assert same == sp


def test_normalize_midpoint():
    sp = path([(16, 16)], frame=ReferenceFrame(32, 32))
    out = normalize_scanpath(sp, sp.frame, DEFAULT_FRAME)
    assert out.xy.tolist() == [[112.0, 112.0]]


@given(points, frames, frames)
def test_normalize_roundtrip(xy, src, dst):
    sp = path(xy, frame=src)
    back = normalize_scanpath(normalize_scanpath(sp, src, dst), dst, src)
    assert np.allclose(back.xy, sp.xy, rtol=0, atol=1e-12 * max(1.0, np.abs(sp.xy).max()))


def test_clamp_examples():
    out = clamp_to_frame(path([(-3, 10)]), DEFAULT_FRAME)
    assert out.xy.tolist() == [[0.0, 10.0]] and out.clamped
    inside = path([(5, 5), (100, 200)])
    res = clamp_to_frame(inside, DEFAULT_FRAME)
    assert res.xy.tolist() == inside.xy.tolist() and not res.clamped
    out = clamp_to_frame(path([(230, 230)]), DEFAULT_FRAME)
    assert out.xy.tolist() == [[224.0, 224.0]] and out.clamped


@given(points)
def test_clamp_idempotent(xy):
    once = clamp_to_frame(path(xy), DEFAULT_FRAME)
    twice = clamp_to_frame(once, DEFAULT_FRAME)
    assert twice.xy.tolist() == once.xy.tolist()
    assert all(f.in_frame(DEFAULT_FRAME) for f in twice)


@given(points)
def test_jsonl_roundtrip_bit_exact(xy):
    sp = path(xy, source="human")
    (back,) = loads_jsonl(dumps_jsonl([sp]))
    assert back.xy.tobytes() == sp.xy.tobytes()
    assert (back.image_id, back.source, back.frame) == (sp.image_id, sp.source, sp.frame)


def test_jsonl_format():
    line = dumps_jsonl([path([(1.5, 2.0)], image_id="x", source="human")])
    assert line == '{"image_id": "x", "source": "human", "frame": [224, 224], "fixations": [[1.5, 2.0]]}\n'


def test_jsonl_errors_name_line():
    with pytest.raises(EvakitError, match="line 2"):
        loads_jsonl('{"image_id": "a", "frame": [2, 2], "fixations": []}\n{oops\n')
    with pytest.raises(EvakitError):
        loads_jsonl('{"image_id": "a"}\n')


def test_guards():
    with pytest.raises(EmptyScanpathError):
        require_nonempty(Scanpath("a", "model", DEFAULT_FRAME, ()))
    with pytest.raises(FrameMismatchError):
        require_same_frame(path([(1, 1)]), path([(1, 1)], frame=ReferenceFrame(10, 10)))


def test_density_grid_validation():
    with pytest.raises(ValueError):
        DensityGrid(ReferenceFrame(2, 2), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        DensityGrid.from_array([[0.5, 0.4]], "probability")
    g = DensityGrid.from_array([[0.5, 0.5]], "probability")
    assert g.frame == ReferenceFrame(2, 1)
    with pytest.raises(ValueError):
        g.values[0, 0] = 1.0


def test_image_frame():
    img = ImageFrame(np.zeros((4, 6), dtype=np.uint8))
    assert (img.width, img.height, img.channels) == (6, 4, 1)
    with pytest.raises(InvalidImageError):
        ImageFrame(np.zeros((0, 3, 3), dtype=np.uint8))
    with pytest.raises(InvalidImageError):
        ImageFrame(np.zeros((2, 2, 4), dtype=np.uint8))
