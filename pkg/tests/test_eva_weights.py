import struct

import numpy as np
import pytest

from evakit.eva import EvaDims, WeightFormatError, dumps_weights, init_weights, load_weights, loads_weights, save_weights, zero_weights
from evakit.eva.layers import conv3x3, lstm_step, maxpool2, sigmoid, softmax

from conftest import SMALL_DIMS


def test_init_range_and_determinism():
    a = init_weights(SMALL_DIMS, 3)
    assert a == init_weights(SMALL_DIMS, 3)
    assert a != init_weights(SMALL_DIMS, 4)
    for name in a.names():
        assert a.raw(name).dtype == np.float32
        assert np.abs(a.raw(name)).max() <= 0.05


def test_save_load_bit_exact(tmp_path):
    w = init_weights(SMALL_DIMS, 8)
    save_weights(w, tmp_path / "w.evaw")
    back = load_weights(tmp_path / "w.evaw")
    assert back == w and back.dims == SMALL_DIMS
    assert dumps_weights(back) == dumps_weights(w)
    assert (tmp_path / "w.evaw").read_bytes()[:5] == b"EVAW1"


def test_default_dims_shapes():
    shapes = EvaDims().shapes()
    assert [shapes[f"fovea.conv{i}.w"][0] for i in range(4)] == [64, 128, 256, 256]
    assert shapes["periphery.w"] == (128, 3 * 8 * 8 + 2)
    assert shapes["lower.w_ih"] == (4 * 256, 256 + 128)
    assert shapes["upper.w_ih"] == (4 * 256, 512)


def test_mismatch_names_block():
    w = init_weights(SMALL_DIMS, 1)
    with pytest.raises(WeightFormatError, match="gate_td.w"):
        w.replace(gate_td__w=np.zeros((3, 3), np.float32))
    with pytest.raises(WeightFormatError, match="action.b"):
        w.replace(action__b=np.array([np.nan] * SMALL_DIMS.n_classes, np.float32))


def test_load_rejects_inconsistent_file():
    w = init_weights(SMALL_DIMS, 1)
    blob = bytearray(dumps_weights(w))
    # rewrite the shape of the first block that follows conv stages: corrupt 'upper.w_hh' shape
    name = b"upper.w_hh"
    i = blob.index(name) + len(name)
    ndim = blob[i]
    dims = list(struct.unpack(f"<{ndim}I", blob[i + 1:i + 1 + 4 * ndim]))
    dims[0], dims[1] = dims[1], dims[0]
    blob[i + 1:i + 1 + 4 * ndim] = struct.pack(f"<{ndim}I", *dims)
    with pytest.raises(WeightFormatError, match="upper"):
        loads_weights(bytes(blob))


@pytest.mark.parametrize("cut", [3, 7, 12, 40])
def test_truncated_file_reports_offset(cut):
    data = dumps_weights(init_weights(SMALL_DIMS, 1))
    with pytest.raises(WeightFormatError, match="offset"):
        loads_weights(data[:cut])


def test_bad_magic_and_trailing():
    data = dumps_weights(init_weights(SMALL_DIMS, 1))
    with pytest.raises(WeightFormatError, match="magic"):
        loads_weights(b"XXXXX" + data[5:])
    with pytest.raises(WeightFormatError, match="trailing"):
        loads_weights(data + b"\0")


def test_bundle_is_immutable():
    w = zero_weights(SMALL_DIMS)
    with pytest.raises(ValueError):
        w["action.b"][0] = 1.0


# --- layers ---------------------------------------------------------------------------


def test_conv3x3_matches_loops():
    r = np.random.default_rng(0)
    x, k, b = r.random((2, 5, 4)), r.random((3, 2, 3, 3)), r.random(3)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    want = np.zeros((3, 5, 4))
    for o in range(3):
        for i in range(5):
            for j in range(4):
                want[o, i, j] = (k[o] * xp[:, i:i + 3, j:j + 3]).sum() + b[o]
    assert np.allclose(conv3x3(x, k, b), want, atol=1e-12)


def test_maxpool_and_activations():
    x = np.arange(16.0).reshape(1, 4, 4)
    assert maxpool2(x).tolist() == [[[5.0, 7.0], [13.0, 15.0]]]
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert np.isclose(sigmoid(np.array([2.0]))[0], 1 / (1 + np.exp(-2.0)), atol=1e-15)
    p = softmax(np.array([1000.0, 1000.0]))
    assert p.tolist() == [0.5, 0.5]


def test_lstm_zero_weights_keep_zero_state():
    n = 4
    h, c = np.zeros(n), np.zeros(n)
    for _ in range(5):
        h, c = lstm_step(np.ones(3), h, c, np.zeros((4 * n, 3)), np.zeros((4 * n, n)), np.zeros(4 * n))
    assert not h.any() and not c.any()


def test_lstm_hand_case():
    # one unit, only the cell-input and output gates driven
    w_ih = np.array([[0.0], [0.0], [1.0], [0.0]])
    h, c = lstm_step(np.array([0.5]), np.zeros(1), np.array([0.2]), w_ih, np.zeros((4, 1)), np.zeros(4))
    c_want = 0.5 * 0.2 + 0.5 * np.tanh(0.5)
    assert c[0] == pytest.approx(c_want, abs=1e-15)
    assert h[0] == pytest.approx(0.5 * np.tanh(c_want), abs=1e-15)
