import numpy as np
import pytest

from sudseg import nets
from sudseg.diffcore import Graph, Tensor, grad_check, no_grad
from sudseg.losses import cross_entropy_t


def tiny_recon(seed=0, **kw):
    cfg = nets.NetConfig(levels=2, base_features=2, in_channels=1, n_classes=2, **kw)
    return nets.build_reconstructor(cfg, np.random.default_rng(seed))


def tiny_denoiser(seed=0):
    cfg = nets.NetConfig(levels=2, base_features=2, in_channels=3, n_classes=3,
                         skip_connections=False)
    return nets.build_denoiser(cfg, np.random.default_rng(seed))


def test_output_is_simplex_field(rng):
    params = tiny_recon()
    img = rng.normal(size=(1, 16, 16))
    with no_grad():
        out = nets.forward(params, img).data
    assert out.shape == (2, 16, 16)
    assert out.min() >= 0.0
    np.testing.assert_allclose(out.sum(axis=0), 1.0, atol=1e-12)


def test_init_deterministic():
    a, b = tiny_recon(seed=3), tiny_recon(seed=3)
    for k in a.tensors:
        np.testing.assert_array_equal(a.tensors[k].data, b.tensors[k].data)
    c = tiny_recon(seed=4)
    assert any((a.tensors[k].data != c.tensors[k].data).any() for k in a.tensors)


def test_shape_must_be_poolable(rng):
    params = tiny_recon()
    with pytest.raises(ValueError):
        nets.forward(params, rng.normal(size=(1, 15, 16)))


def test_channel_mismatch_errors(rng):
    params = tiny_recon()
    with pytest.raises(ValueError):
        nets.forward(params, rng.normal(size=(2, 16, 16)))


@pytest.mark.parametrize("down", ["strided-conv", "max-pool"])
def test_downsampling_variants_run(down, rng):
    cfg = nets.NetConfig(levels=3, base_features=2, in_channels=1, n_classes=3,
                         downsampling=down)
    params = nets.build_reconstructor(cfg, np.random.default_rng(1))
    img = rng.normal(size=(1, 16, 16))
    with no_grad():
        out = nets.forward(params, img).data
    assert out.shape == (3, 16, 16)
    assert np.isfinite(out).all()


def test_builders_pin_skip_connections():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        nets.build_reconstructor(nets.NetConfig(skip_connections=False), rng)
    with pytest.raises(ValueError):
        nets.build_denoiser(nets.NetConfig(in_channels=2, n_classes=2,
                                           skip_connections=True), rng)
    with pytest.raises(ValueError):  # probability fields in and out
        nets.build_denoiser(nets.NetConfig(in_channels=1, n_classes=2,
                                           skip_connections=False), rng)


def test_dropout_train_vs_eval(rng):
    params = tiny_recon(dropout_keep=0.5)
    img = rng.normal(size=(1, 16, 16))
    with no_grad():
        eval_out = nets.forward(params, img, train=False).data
        t1 = nets.forward(params, img, train=True, rng=np.random.default_rng(7)).data
        t2 = nets.forward(params, img, train=True, rng=np.random.default_rng(7)).data
        t3 = nets.forward(params, img, train=True, rng=np.random.default_rng(8)).data
    np.testing.assert_array_equal(t1, t2)  # same rng stream, same masks
    assert (t1 != eval_out).any()
    assert (t1 != t3).any()


def test_train_forward_without_rng_errors(rng):
    params = tiny_recon(dropout_keep=0.5)
    with pytest.raises(ValueError):
        nets.forward(params, rng.normal(size=(1, 16, 16)), train=True)


def test_float32_forward_stays_float32(rng):
    params = tiny_recon().cast(np.float32)
    img = rng.normal(size=(1, 16, 16)).astype(np.float32)
    with no_grad():
        out = nets.forward(params, img).data
    assert out.dtype == np.float32


def test_save_load_round_trip(tmp_path, rng):
    params = tiny_recon(seed=9)
    p = tmp_path / "m.sudt"
    nets.save_model(p, params)
    back = nets.load_model(p)
    assert back.cfg == params.cfg
    for k in params.tensors:
        np.testing.assert_array_equal(back.tensors[k].data, params.tensors[k].data)
    img = rng.normal(size=(1, 16, 16))
    with no_grad():
        np.testing.assert_array_equal(
            nets.forward(params, img).data, nets.forward(back, img).data)


def test_copy_is_deep(rng):
    params = tiny_recon()
    dup = params.copy()
    k = next(iter(params.tensors))
    dup.tensors[k].data += 1.0
    assert (params.tensors[k].data != dup.tensors[k].data).any()


@pytest.mark.parametrize("make,img_ch", [(tiny_recon, 1), (tiny_denoiser, 3)])
def test_network_gradients(make, img_ch, rng):
    # fuller sweep lives in the acceptance suite
    params = make(seed=2)
    img = rng.normal(size=(img_ch, 8, 8))
    y = rng.integers(0, params.cfg.n_classes, size=(8, 8))

    def build(inputs):
        return cross_entropy_t(nets.forward(params, img), y)

    report = grad_check(Graph(build), dict(params.tensors),
                        tolerance=1e-5, step=1e-6, max_coords_per_leaf=3,
                        rng=np.random.default_rng(0))
    assert report.passed, str(report)
