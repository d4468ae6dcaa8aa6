"""Compiled extension vs pure-numpy kernels.

Gather/select kernels (im2col, pooling) must agree bitwise; col2im accumulates
overlapping patches in a different order per backend, so it gets a last-ulp
tolerance instead. Tests import both implementation modules directly, so they
run regardless of which backend the package selected at import time.
"""

import numpy as np
import pytest

from sudseg.diffcore import _kernels_np as knp
from sudseg.diffcore import kernels

try:
    from sudseg.diffcore import _kernels_cy as kcy
    HAVE_COMPILED = True
except ImportError:
    kcy = None
    HAVE_COMPILED = False

needs_compiled = pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernels not built")


def test_backend_reports_selection():
    assert kernels.BACKEND in ("compiled", "numpy")
    if HAVE_COMPILED:
        assert kernels.BACKEND == "compiled"


@needs_compiled
@pytest.mark.parametrize("dtype", [np.float64, np.float32])
@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0), (2, 0)])
def test_im2col_matches(dtype, stride, pad):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, 9, 7)).astype(dtype)
    a = knp.im2col(x, 3, 3, stride, pad)
    b = kcy.im2col(x, 3, 3, stride, pad)
    assert a.dtype == b.dtype == dtype
    np.testing.assert_array_equal(a, b)


@needs_compiled
@pytest.mark.parametrize("dtype", [np.float64, np.float32])
@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0)])
def test_col2im_matches(dtype, stride, pad):
    rng = np.random.default_rng(4)
    c, h, w, kh, kw = 2, 8, 6, 3, 3
    x = rng.normal(size=(c, h, w)).astype(dtype)
    cols = knp.im2col(x, kh, kw, stride, pad)
    d = rng.normal(size=cols.shape).astype(dtype)
    a = knp.col2im(np.ascontiguousarray(d), c, h, w, kh, kw, stride, pad)
    b = kcy.col2im(np.ascontiguousarray(d), c, h, w, kh, kw, stride, pad)
    assert a.dtype == b.dtype == dtype
    # accumulation order differs between backends; only reassociation error allowed
    eps = np.finfo(dtype).eps
    np.testing.assert_allclose(a, b, rtol=16 * eps, atol=16 * eps)


@needs_compiled
@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_pool_roundtrip_matches(dtype):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(4, 10, 8)).astype(dtype)
    ya, ia = knp.maxpool2(x)
    yb, ib = kcy.maxpool2(x)
    np.testing.assert_array_equal(ya, yb)
    np.testing.assert_array_equal(ia, ib)
    dy = rng.normal(size=ya.shape).astype(dtype)
    np.testing.assert_array_equal(knp.maxpool2_backward(dy, ia), kcy.maxpool2_backward(dy, ib))
    np.testing.assert_array_equal(knp.max_unpool2(ya, ia), kcy.max_unpool2(yb, ib))
    g = rng.normal(size=x.shape).astype(dtype)
    np.testing.assert_array_equal(knp.max_unpool2_backward(g, ia), kcy.max_unpool2_backward(g, ib))


def test_im2col_col2im_adjoint():
    # <im2col(x), d> == <x, col2im(d)> pins the index bookkeeping
    rng = np.random.default_rng(6)
    x = rng.normal(size=(2, 6, 6))
    cols = kernels.im2col(x, 3, 3, 1, 1)
    d = rng.normal(size=cols.shape)
    lhs = float((cols * d).sum())
    rhs = float((x * kernels.col2im(np.ascontiguousarray(d), 2, 6, 6, 3, 3, 1, 1)).sum())
    assert abs(lhs - rhs) < 1e-10


def test_maxpool_ties_break_consistently():
    # equal values in a block: both backends must pick the same index
    x = np.ones((1, 4, 4))
    _, ia = knp.maxpool2(x)
    if HAVE_COMPILED:
        _, ib = kcy.maxpool2(x)
        np.testing.assert_array_equal(ia, ib)
    got = knp.max_unpool2(np.ones((1, 2, 2)), ia)
    assert np.count_nonzero(got) == 4
