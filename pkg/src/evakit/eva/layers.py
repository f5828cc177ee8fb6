"""Forward-only numpy layers: convolution stack, affine maps and LSTM cells."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x):
    e = np.exp(x - np.max(x))
    return e / e.sum()


def conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padded 3x3 convolution of a ``(C, H, W)`` map with ``(O, C, 3, 3)`` filters."""
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (C, H, W, 3, 3)
    return np.einsum("ocij,chwij->ohw", w, win) + b[:, None, None]


def maxpool2(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    return x[:, : 2 * h2, : 2 * w2].reshape(c, h2, 2, w2, 2).max(axis=(2, 4))


def fovea_features(x: np.ndarray, w, n_stages: int) -> np.ndarray:
    """Conv stack over a ``(C, H, W)`` crop: conv-ReLU per stage, 2x2 max-pool while the map is
    at least 2 pixels wide, then global average pooling."""
    for i in range(n_stages):
        x = relu(conv3x3(x, w[f"fovea.conv{i}.w"], w[f"fovea.conv{i}.b"]))
        if min(x.shape[1:]) >= 2:
            x = maxpool2(x)
    return x.mean(axis=(1, 2))


def lstm_step(x, h, c, w_ih, w_hh, b):
    """Standard LSTM cell with gate order (input, forget, cell, output)."""
    z = w_ih @ x + w_hh @ h + b
    n = h.shape[0]
    i = sigmoid(z[:n])
    f = sigmoid(z[n:2 * n])
    g = np.tanh(z[2 * n:3 * n])
    o = sigmoid(z[3 * n:])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new
