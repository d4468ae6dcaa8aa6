"""Scalar-output graph builders for finite-difference checks.

Each case maps an rng to (inputs, build_fn) where build_fn wires the op into
a weighted-sum scalar. Weights are fixed random constants so layout mistakes
(transposed axes, wrong strides) show up in the gradient, which a plain sum
would mask. Inputs sit away from kinks (relu zero, clip edge, pool ties) so
central differences stay valid.
"""

import zlib

import numpy as np

from sudseg.diffcore import Graph, Tensor, grad_check, ops


def _t(rng, shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, shape), requires_grad=True)


def _away_from(rng, shape, point, margin=0.05):
    """Uniform values at least `margin` from `point` on either side."""
    x = rng.uniform(margin, 1.0, shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return Tensor(point + sign * x, requires_grad=True)


def _weights(rng, shape):
    return Tensor(rng.uniform(-1.0, 1.0, shape), requires_grad=False)


def _wsum(t, w):
    return ops.tsum(ops.mul(t, w))


def _distinct(rng, shape):
    """All entries distinct with gaps >= 0.01: safe around max selections."""
    flat = rng.permutation(int(np.prod(shape))).astype(np.float64) * 0.01
    return Tensor(flat.reshape(shape), requires_grad=True)


def case_add(rng):
    a, b = _t(rng, (3, 4, 5)), _t(rng, (3, 4, 5))
    w = _weights(rng, (3, 4, 5))
    return {"a": a, "b": b}, lambda i: _wsum(ops.add(i["a"], i["b"]), w)


def case_sub(rng):
    a, b = _t(rng, (3, 4, 5)), _t(rng, (3, 4, 5))
    w = _weights(rng, (3, 4, 5))
    return {"a": a, "b": b}, lambda i: _wsum(ops.sub(i["a"], i["b"]), w)


def case_mul(rng):
    a, b = _t(rng, (3, 4, 5)), _t(rng, (3, 4, 5))
    w = _weights(rng, (3, 4, 5))
    return {"a": a, "b": b}, lambda i: _wsum(ops.mul(i["a"], i["b"]), w)


def case_div(rng):
    a = _t(rng, (3, 4, 5))
    b = _away_from(rng, (3, 4, 5), 0.0, margin=0.3)
    w = _weights(rng, (3, 4, 5))
    return {"a": a, "b": b}, lambda i: _wsum(ops.div(i["a"], i["b"]), w)


def case_scale(rng):
    a = _t(rng, (2, 6, 6))
    c = float(rng.uniform(-3.0, 3.0))
    w = _weights(rng, (2, 6, 6))
    return {"a": a}, lambda i: _wsum(ops.scale(i["a"], c), w)


def case_add_const(rng):
    a = _t(rng, (2, 6, 6))
    c = float(rng.uniform(-3.0, 3.0))
    w = _weights(rng, (2, 6, 6))
    return {"a": a}, lambda i: _wsum(ops.add_const(i["a"], c), w)


def case_neg(rng):
    a = _t(rng, (2, 6, 6))
    w = _weights(rng, (2, 6, 6))
    return {"a": a}, lambda i: _wsum(ops.neg(i["a"]), w)


def case_log(rng):
    a = _t(rng, (2, 5, 5), lo=0.3, hi=3.0)
    w = _weights(rng, (2, 5, 5))
    return {"a": a}, lambda i: _wsum(ops.log(i["a"]), w)


def case_exp(rng):
    a = _t(rng, (2, 5, 5))
    w = _weights(rng, (2, 5, 5))
    return {"a": a}, lambda i: _wsum(ops.exp(i["a"]), w)


def case_clip_min(rng):
    lo = float(rng.uniform(-0.5, 0.5))
    a = _away_from(rng, (2, 5, 5), lo)
    w = _weights(rng, (2, 5, 5))
    return {"a": a}, lambda i: _wsum(ops.clip_min(i["a"], lo), w)


def case_leaky_relu(rng):
    a = _away_from(rng, (2, 6, 6), 0.0)
    w = _weights(rng, (2, 6, 6))
    return {"a": a}, lambda i: _wsum(ops.leaky_relu(i["a"], 0.01), w)


def case_tsum_all(rng):
    a = _t(rng, (3, 4, 4))
    return {"a": a}, lambda i: ops.tsum(i["a"])


def case_tsum_axis(rng):
    a = _t(rng, (3, 4, 4))
    w = _weights(rng, (4, 4))
    return {"a": a}, lambda i: _wsum(ops.tsum(i["a"], axis=0), w)


def case_tmean(rng):
    a = _t(rng, (3, 4, 4))
    return {"a": a}, lambda i: ops.tmean(i["a"])


def case_reshape(rng):
    a = _t(rng, (3, 4, 4))
    w = _weights(rng, (12, 4))
    return {"a": a}, lambda i: _wsum(ops.reshape(i["a"], (12, 4)), w)


def case_concat_channels(rng):
    a, b = _t(rng, (2, 5, 5)), _t(rng, (3, 5, 5))
    w = _weights(rng, (5, 5, 5))
    return {"a": a, "b": b}, lambda i: _wsum(ops.concat_channels(i["a"], i["b"]), w)


def case_conv2d(rng):
    x = _t(rng, (3, 6, 6))
    wgt = _t(rng, (4, 3, 3, 3))
    b = _t(rng, (4,))
    w = _weights(rng, (4, 6, 6))
    return {"x": x, "w": wgt, "b": b}, lambda i: _wsum(ops.conv2d(i["x"], i["w"], i["b"], stride=1, pad=1), w)


def case_conv2d_stride2(rng):
    x = _t(rng, (2, 8, 8))
    wgt = _t(rng, (3, 2, 3, 3))
    b = _t(rng, (3,))
    w = _weights(rng, (3, 4, 4))
    return {"x": x, "w": wgt, "b": b}, lambda i: _wsum(ops.conv2d(i["x"], i["w"], i["b"], stride=2, pad=1), w)


def case_conv2d_1x1(rng):
    x = _t(rng, (4, 5, 5))
    wgt = _t(rng, (2, 4, 1, 1))
    w = _weights(rng, (2, 5, 5))
    return {"x": x, "w": wgt}, lambda i: _wsum(ops.conv2d(i["x"], i["w"], stride=1, pad=0), w)


def case_conv2d_transpose2(rng):
    x = _t(rng, (3, 4, 4))
    wgt = _t(rng, (3, 2, 2, 2))
    b = _t(rng, (2,))
    w = _weights(rng, (2, 8, 8))
    return {"x": x, "w": wgt, "b": b}, lambda i: _wsum(ops.conv2d_transpose2(i["x"], i["w"], i["b"]), w)


def case_maxpool2(rng):
    x = _distinct(rng, (2, 6, 6))
    w = _weights(rng, (2, 3, 3))
    return {"x": x}, lambda i: _wsum(ops.maxpool2(i["x"])[0], w)


def case_max_unpool2(rng):
    # indices come from pooling a frozen field, so they cannot flip under FD
    ref = _distinct(rng, (2, 6, 6))
    ref.requires_grad = False
    _, idx = ops.maxpool2(ref)
    x = _t(rng, (2, 3, 3))
    w = _weights(rng, (2, 6, 6))
    return {"x": x}, lambda i: _wsum(ops.max_unpool2(i["x"], idx), w)


def case_nn_upsample2(rng):
    x = _t(rng, (2, 4, 4))
    w = _weights(rng, (2, 8, 8))
    return {"x": x}, lambda i: _wsum(ops.nn_upsample2(i["x"]), w)


def case_instance_norm(rng):
    x = _t(rng, (3, 5, 5))
    w = _weights(rng, (3, 5, 5))
    return {"x": x}, lambda i: _wsum(ops.instance_norm(i["x"]), w)


def case_softmax_channels(rng):
    x = _t(rng, (4, 5, 5), lo=-2.0, hi=2.0)
    w = _weights(rng, (4, 5, 5))
    return {"x": x}, lambda i: _wsum(ops.softmax_channels(i["x"]), w)


def case_gather_label_probs(rng):
    p = _t(rng, (3, 5, 5), lo=0.1, hi=1.0)
    labels = rng.integers(0, 3, size=(5, 5))
    w = _weights(rng, (5, 5))
    return {"p": p}, lambda i: _wsum(ops.gather_label_probs(i["p"], labels), w)


OP_CASES = {
    name[5:]: fn
    for name, fn in sorted(vars().items())
    if name.startswith("case_")
}


def run_case(name, seed, tolerance=1e-5, step=1e-5):
    rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
    inputs, build = OP_CASES[name](rng)
    report = grad_check(Graph(build), inputs, tolerance=tolerance, step=step)
    return report
