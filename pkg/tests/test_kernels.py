import numpy as np
import oracles
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from smartcube import _pykernels, kernels

try:
    from smartcube import _ckernels
except ImportError:  # pragma: no cover - extension not built
    _ckernels = None

BACKENDS = [_pykernels] + ([_ckernels] if _ckernels is not None else [])
IDS = ["python"] + (["cython"] if _ckernels is not None else [])


def test_backend_selected():
    assert kernels.BACKEND in ("python", "cython")
    if _ckernels is not None:
        assert kernels.BACKEND == "cython"


@pytest.mark.parametrize("impl", BACKENDS, ids=IDS)
@pytest.mark.parametrize("stride, k", [(1, 3), (2, 3), (1, 1)])
def test_conv_matches_direct_oracle(impl, stride, k):
    rng = np.random.default_rng(k + stride)
    x = rng.normal(size=(2, 3, 6, 8))
    w = rng.normal(size=(4, 3, k, k))
    b = rng.normal(size=4)
    out = impl.conv2d_forward(x, w, b, stride, k // 2)
    for n in range(2):
        np.testing.assert_allclose(out[n], oracles.naive_conv(x[n], w, b, stride), atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS, ids=IDS)
@pytest.mark.parametrize("stride", [1, 2])
def test_conv_backward_is_adjoint(impl, stride):
    # <conv(x), d> is linear in x and w, so its gradients can be checked exactly by directional derivatives
    rng = np.random.default_rng(stride)
    x = rng.normal(size=(2, 3, 6, 6))
    w = rng.normal(size=(5, 3, 3, 3))
    b = rng.normal(size=5)
    zero = np.zeros(5)
    d = rng.normal(size=impl.conv2d_forward(x, w, b, stride, 1).shape)
    dx, dw, db = impl.conv2d_backward(x, w, d, stride, 1)
    vx, vw = rng.normal(size=x.shape), rng.normal(size=w.shape)
    assert np.sum(impl.conv2d_forward(vx, w, zero, stride, 1) * d) == pytest.approx(np.sum(dx * vx), rel=1e-12)
    assert np.sum(impl.conv2d_forward(x, vw, zero, stride, 1) * d) == pytest.approx(np.sum(dw * vw), rel=1e-12)
    np.testing.assert_allclose(db, d.sum(axis=(0, 2, 3)), rtol=1e-12)


@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
@given(st.integers(0, 2**32 - 1))
def test_backends_agree_conv(seed):
    rng = np.random.default_rng(seed)
    c, o = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    h, w_ = 2 * int(rng.integers(1, 6)), 2 * int(rng.integers(1, 6))
    stride = int(rng.choice([1, 2]))
    x, w, b = rng.normal(size=(2, c, h, w_)), rng.normal(size=(o, c, 3, 3)), rng.normal(size=o)
    y1 = _pykernels.conv2d_forward(x, w, b, stride, 1)
    y2 = _ckernels.conv2d_forward(x, w, b, stride, 1)
    np.testing.assert_allclose(y1, y2, rtol=1e-12, atol=1e-12)
    d = rng.normal(size=y1.shape)
    for g1, g2 in zip(_pykernels.conv2d_backward(x, w, d, stride, 1), _ckernels.conv2d_backward(x, w, d, stride, 1)):
        np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-12)


@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
@given(st.integers(0, 2**32 - 1))
def test_backends_agree_bilinear(seed):
    rng = np.random.default_rng(seed)
    h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
    src = rng.normal(size=(2, h, w))
    valid = rng.random((2, h, w)) > 0.2
    rows = np.clip(rng.uniform(-1, h, 7), 0, h - 1)
    cols = np.clip(rng.uniform(-1, w, 5), 0, w - 1)
    rows[rng.random(7) < 0.2] = np.nan
    cols[:2] = np.floor(cols[:2])  # exact cell centers exercise zero weights
    v1, ok1 = _pykernels.bilinear_sample(src, valid, rows, cols)
    v2, ok2 = _ckernels.bilinear_sample(src, valid, rows, cols)
    assert np.array_equal(ok1, ok2)
    assert v1[ok1].tobytes() == v2[ok2].tobytes()


@pytest.mark.parametrize("impl", BACKENDS, ids=IDS)
def test_bilinear_zero_weight_ignores_invalid_neighbor(impl):
    src = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    valid = np.array([[[True, False], [True, True]]])
    vals, ok = impl.bilinear_sample(src, valid, np.array([1.0, 0.5]), np.array([0.0]))
    assert ok[0, :, 0].tolist() == [True, True] and vals[0, :, 0].tolist() == [3.0, 2.0]
    _, ok = impl.bilinear_sample(src, valid, np.array([0.5]), np.array([0.5]))
    assert not ok[0, 0, 0]


@pytest.mark.parametrize("impl", BACKENDS, ids=IDS)
@given(st.integers(0, 2**32 - 1))
def test_labeling_matches_scipy(impl, seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((int(rng.integers(1, 20)), int(rng.integers(1, 20)))) < rng.uniform(0.2, 0.8)
    labels, n = impl.label_components(mask)
    ref, m = ndimage.label(mask)
    assert n == m
    # same partition, with labels in raster order of first pixel
    assert np.array_equal(labels > 0, mask)
    firsts = [np.flatnonzero(labels.ravel() == lab)[0] for lab in range(1, n + 1)]
    assert firsts == sorted(firsts)
    pairs = set(zip(labels[mask].tolist(), ref[mask].tolist()))
    assert len(pairs) == n
