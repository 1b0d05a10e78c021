"""Numpy implementations of the hot kernels.

This module is the fallback used when the compiled ``_ckernels`` extension is
unavailable.  Both implementations follow the same arithmetic so results agree
(bit-for-bit for the resampling kernel, to rounding for convolutions).
"""

from __future__ import annotations

from collections import deque

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """(N, C, H, W) * (O, C, kh, kw) -> (N, O, Ho, Wo), zero padding."""
    _, _, kh, kw = w.shape
    win = _windows(x, kh, kw, stride, pad)  # N, C, Ho, Wo, kh, kw
    # one contraction per sample: results then do not depend on batch size or position
    out = np.stack([np.tensordot(s, w, axes=([0, 3, 4], [1, 2, 3])) for s in win])  # N, Ho, Wo, O
    out = out.transpose(0, 3, 1, 2) + b[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_backward(
    x: np.ndarray, w: np.ndarray, dout: np.ndarray, stride: int, pad: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dw, db) of :func:`conv2d_forward` given upstream ``dout``."""
    n, c, h, wd = x.shape
    _, _, kh, kw = w.shape
    ho, wo = dout.shape[2], dout.shape[3]
    win = _windows(x, kh, kw, stride, pad)
    dw = np.tensordot(dout, win, axes=([0, 2, 3], [0, 2, 3]))  # O, C, kh, kw
    db = dout.sum(axis=(0, 2, 3))
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(dout, w[:, :, i, j], axes=([1], [0]))  # N, Ho, Wo, C
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += contrib.transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad : pad + h, pad : pad + wd]
    return np.ascontiguousarray(dx), dw, db


def bilinear_sample(
    src: np.ndarray,
    valid: np.ndarray,
    rows: np.ndarray,
    cols: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Separable bilinear interpolation on an axis-aligned grid.

    ``src`` is (B, H, W) float64 with boolean ``valid`` of the same shape.
    ``rows``/``cols`` give, per destination row/column, the continuous source
    coordinate measured in cell-center units (cell ``i`` has center ``i``), or
    NaN when the destination center falls outside the source footprint.
    Coordinates must already be clamped to ``[0, H-1]`` / ``[0, W-1]``.

    Returns ``(values, ok)`` of shape (B, len(rows), len(cols)).  A neighbor
    contributes only when its weight is non-zero; any invalid contributor
    makes the output cell not ok.
    """
    _, h, w = src.shape
    row_in = ~np.isnan(rows)
    col_in = ~np.isnan(cols)
    rr = np.where(row_in, rows, 0.0)
    cc = np.where(col_in, cols, 0.0)
    r0 = np.minimum(np.floor(rr).astype(np.intp), h - 1)
    c0 = np.minimum(np.floor(cc).astype(np.intp), w - 1)
    bw = rr - r0
    aw = cc - c0
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)

    vals = np.where(valid, src, 0.0)
    v00 = vals[:, r0[:, None], c0[None, :]]
    v01 = vals[:, r0[:, None], c1[None, :]]
    v10 = vals[:, r1[:, None], c0[None, :]]
    v11 = vals[:, r1[:, None], c1[None, :]]
    a = aw[None, None, :]
    b = bw[None, :, None]
    top = v00 * (1.0 - a) + v01 * a
    bot = v10 * (1.0 - a) + v11 * a
    out = top * (1.0 - b) + bot * b

    need_c1 = (aw > 0.0)[None, None, :]
    need_r1 = (bw > 0.0)[None, :, None]
    ok = valid[:, r0[:, None], c0[None, :]].copy()
    ok &= ~need_c1 | valid[:, r0[:, None], c1[None, :]]
    ok &= ~need_r1 | valid[:, r1[:, None], c0[None, :]]
    ok &= ~(need_c1 & need_r1) | valid[:, r1[:, None], c1[None, :]]
    ok &= (row_in[:, None] & col_in[None, :])[None, :, :]
    return out, ok


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected labeling; labels 1..n assigned in raster order of first pixel."""
    h, w = mask.shape
    fg = np.asarray(mask, dtype=bool)
    labels = np.zeros((h, w), dtype=np.int32)
    count = 0
    for r0 in range(h):
        for c0 in range(w):
            if not fg[r0, c0] or labels[r0, c0]:
                continue
            count += 1
            labels[r0, c0] = count
            queue = deque([(r0, c0)])
            while queue:
                r, c = queue.popleft()
                for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                    if 0 <= rr < h and 0 <= cc < w and fg[rr, cc] and not labels[rr, cc]:
                        labels[rr, cc] = count
                        queue.append((rr, cc))
    return labels, count
