# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; drop-in replacements for ``smartcube._pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, isnan

cnp.import_array()


def conv2d_forward(x, w, b, int stride, int pad):
    cdef const double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], wd = xv.shape[3]
    cdef Py_ssize_t o = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pad - kw) // stride + 1
    out = np.empty((n, o, ho, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] ov = out
    cdef Py_ssize_t ni, oi, ci, y, xx, i, j, iy, ix
    cdef double acc
    for ni in range(n):
        for oi in range(o):
            for y in range(ho):
                for xx in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        for i in range(kh):
                            iy = y * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for j in range(kw):
                                ix = xx * stride + j - pad
                                if ix < 0 or ix >= wd:
                                    continue
                                acc += wv[oi, ci, i, j] * xv[ni, ci, iy, ix]
                    ov[ni, oi, y, xx] = acc + bv[oi]
    return out


def conv2d_backward(x, w, dout, int stride, int pad):
    cdef const double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:, :, :, ::1] gv = np.ascontiguousarray(dout, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], wd = xv.shape[3]
    cdef Py_ssize_t o = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3]
    cdef Py_ssize_t ho = gv.shape[2], wo = gv.shape[3]
    dx = np.zeros((n, c, h, wd), dtype=np.float64)
    dw = np.zeros((o, c, kh, kw), dtype=np.float64)
    db = np.zeros(o, dtype=np.float64)
    cdef double[:, :, :, ::1] dxv = dx
    cdef double[:, :, :, ::1] dwv = dw
    cdef double[::1] dbv = db
    cdef Py_ssize_t ni, oi, ci, y, xx, i, j, iy, ix
    cdef double g
    for ni in range(n):
        for oi in range(o):
            for y in range(ho):
                for xx in range(wo):
                    g = gv[ni, oi, y, xx]
                    dbv[oi] += g
                    if g == 0.0:
                        continue
                    for ci in range(c):
                        for i in range(kh):
                            iy = y * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for j in range(kw):
                                ix = xx * stride + j - pad
                                if ix < 0 or ix >= wd:
                                    continue
                                dwv[oi, ci, i, j] += g * xv[ni, ci, iy, ix]
                                dxv[ni, ci, iy, ix] += g * wv[oi, ci, i, j]
    return dx, dw, db


def bilinear_sample(src, valid, rows, cols):
    cdef const double[:, :, ::1] sv = np.ascontiguousarray(src, dtype=np.float64)
    cdef const cnp.uint8_t[:, :, ::1] vv = np.ascontiguousarray(valid, dtype=np.uint8)
    cdef const double[::1] rv = np.ascontiguousarray(rows, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(cols, dtype=np.float64)
    cdef Py_ssize_t nb = sv.shape[0], h = sv.shape[1], w = sv.shape[2]
    cdef Py_ssize_t ny = rv.shape[0], nx = cv.shape[0]
    out = np.zeros((nb, ny, nx), dtype=np.float64)
    ok = np.zeros((nb, ny, nx), dtype=bool)
    cdef double[:, :, ::1] ov = out
    cdef cnp.uint8_t[:, :, ::1] okv = ok.view(np.uint8)
    cdef Py_ssize_t bi, y, x, r0, r1, c0, c1
    cdef double a, b, v00, v01, v10, v11, top, bot, rr, cc
    cdef bint good
    for y in range(ny):
        rr = rv[y]
        if isnan(rr):
            continue
        r0 = <Py_ssize_t>floor(rr)
        if r0 > h - 1:
            r0 = h - 1
        b = rr - r0
        r1 = r0 + 1 if r0 + 1 < h else h - 1
        for x in range(nx):
            cc = cv[x]
            if isnan(cc):
                continue
            c0 = <Py_ssize_t>floor(cc)
            if c0 > w - 1:
                c0 = w - 1
            a = cc - c0
            c1 = c0 + 1 if c0 + 1 < w else w - 1
            for bi in range(nb):
                good = vv[bi, r0, c0] != 0
                if a > 0.0 and not vv[bi, r0, c1]:
                    good = False
                if b > 0.0 and not vv[bi, r1, c0]:
                    good = False
                if a > 0.0 and b > 0.0 and not vv[bi, r1, c1]:
                    good = False
                v00 = sv[bi, r0, c0] if vv[bi, r0, c0] else 0.0
                v01 = sv[bi, r0, c1] if vv[bi, r0, c1] else 0.0
                v10 = sv[bi, r1, c0] if vv[bi, r1, c0] else 0.0
                v11 = sv[bi, r1, c1] if vv[bi, r1, c1] else 0.0
                top = v00 * (1.0 - a) + v01 * a
                bot = v10 * (1.0 - a) + v11 * a
                ov[bi, y, x] = top * (1.0 - b) + bot * b
                okv[bi, y, x] = good
    return out, ok


def label_components(mask):
    cdef const cnp.uint8_t[:, ::1] mv = np.ascontiguousarray(mask, dtype=bool).view(np.uint8)
    cdef Py_ssize_t h = mv.shape[0], w = mv.shape[1]
    labels = np.zeros((h, w), dtype=np.int32)
    cdef int[:, ::1] lv = labels
    queue = np.empty(max(h * w, 1), dtype=np.intp)
    cdef Py_ssize_t[::1] qv = queue
    cdef Py_ssize_t r0, c0, r, c, head, tail, p
    cdef int count = 0
    for r0 in range(h):
        for c0 in range(w):
            if mv[r0, c0] == 0 or lv[r0, c0] != 0:
                continue
            count += 1
            lv[r0, c0] = count
            head = 0
            tail = 0
            qv[tail] = r0 * w + c0
            tail += 1
            while head < tail:
                p = qv[head]
                head += 1
                r = p // w
                c = p - r * w
                if r > 0 and mv[r - 1, c] and lv[r - 1, c] == 0:
                    lv[r - 1, c] = count
                    qv[tail] = p - w
                    tail += 1
                if r + 1 < h and mv[r + 1, c] and lv[r + 1, c] == 0:
                    lv[r + 1, c] = count
                    qv[tail] = p + w
                    tail += 1
                if c > 0 and mv[r, c - 1] and lv[r, c - 1] == 0:
                    lv[r, c - 1] = count
                    qv[tail] = p - 1
                    tail += 1
                if c + 1 < w and mv[r, c + 1] and lv[r, c + 1] == 0:
                    lv[r, c + 1] = count
                    qv[tail] = p + 1
                    tail += 1
    return labels, count
