"""Differentiable building blocks over float64 numpy arrays (N, C, H, W)."""

from __future__ import annotations

import numpy as np

from .. import kernels


def conv(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    """Zero-padded 'same'-style convolution: padding = kernel_size // 2."""
    return kernels.conv2d_forward(x, w, b, stride, w.shape[2] // 2)


def conv_backward(
    x: np.ndarray, w: np.ndarray, dout: np.ndarray, stride: int = 1
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return kernels.conv2d_backward(x, w, dout, stride, w.shape[2] // 2)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(y: np.ndarray, dout: np.ndarray) -> np.ndarray:
    # gradient taken as 0 at the kink
    return np.where(y > 0.0, dout, 0.0)


def upsample2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour x2 along both spatial axes."""
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2_backward(dout: np.ndarray) -> np.ndarray:
    n, c, h, w = dout.shape
    return dout.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
