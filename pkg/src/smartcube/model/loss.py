from __future__ import annotations

import numpy as np

from ..errors import DataError

IGNORE = 255
EPS = 1e-7


def counted_mask(labels: np.ndarray, valid: np.ndarray) -> np.ndarray:
    return (labels != IGNORE) & valid.astype(bool)


def bce_loss(probs: np.ndarray, labels: np.ndarray, valid: np.ndarray) -> tuple[float, np.ndarray]:
    """Masked mean binary cross-entropy and its gradient with respect to ``probs``.

    Pixels with label ``IGNORE`` or ``valid == False`` do not count.  Probabilities
    are clamped to ``[EPS, 1 - EPS]``; the gradient is zero where clamping is active.
    """
    counted = counted_mask(labels, valid)
    n = int(counted.sum())
    if n == 0:
        raise DataError("no counted pixels: every label is ignored or invalid")
    p = np.clip(probs, EPS, 1.0 - EPS)
    y = np.where(counted, labels, 0).astype(np.float64)
    terms = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    loss = float(terms[counted].sum() / n)
    grad = (-(y / p) + (1.0 - y) / (1.0 - p)) / n
    inside = (probs >= EPS) & (probs <= 1.0 - EPS)
    grad = np.where(counted & inside, grad, 0.0)
    return loss, grad
