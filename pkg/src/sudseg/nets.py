"""Encoder-decoder network builders.

Two variants share one level/feature schedule: the reconstructor (skip
concatenations, strided-conv downsampling by default) and the denoiser
autoencoder (no skips; strided conv or symmetric max pool/unpool per config).
Feature width at level k doubles from `base_features` up to `max_features`.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from .diffcore import Tensor
from .diffcore import ops

LEAKY_SLOPE = 0.01

DOWNSAMPLING_KINDS = ("strided-conv", "max-pool")


@dataclass(frozen=True)
class NetConfig:
    levels: int = 4
    base_features: int = 8
    max_features: int = 64
    in_channels: int = 1
    n_classes: int = 2
    skip_connections: bool = True
    downsampling: str = "strided-conv"
    convs_per_level: int = 1
    dropout_keep: float = 0.95

    def validate(self):
        if self.levels < 2:
            raise ValueError(f"levels must be >= 2, got {self.levels}")
        if self.base_features < 1:
            raise ValueError(f"base_features must be >= 1, got {self.base_features}")
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.downsampling not in DOWNSAMPLING_KINDS:
            raise ValueError(f"downsampling must be one of {DOWNSAMPLING_KINDS}")
        if self.convs_per_level < 1:
            raise ValueError("convs_per_level must be >= 1")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must be in (0, 1]")

    def features(self) -> list[int]:
        return [min(self.base_features * 2**k, self.max_features) for k in range(self.levels)]


@dataclass
class ModelParams:
    cfg: NetConfig
    tensors: "OrderedDict[str, Tensor]"

    def n_params(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, t.data.copy()) for k, t in self.tensors.items())

    def load_state(self, state) -> None:
        for k, t in self.tensors.items():
            if k not in state:
                raise KeyError(f"checkpoint missing parameter {k!r}")
            arr = np.asarray(state[k], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise ValueError(f"parameter {k!r}: shape {arr.shape} != expected {t.data.shape}")
            t.data = arr.copy()

    def copy(self) -> "ModelParams":
        dup = OrderedDict()
        for k, t in self.tensors.items():
            nt = Tensor(t.data.copy(), requires_grad=t.requires_grad, name=t.name)
            dup[k] = nt
        return ModelParams(self.cfg, dup)

    def cast(self, dtype) -> "ModelParams":
        for t in self.tensors.values():
            t.data = t.data.astype(dtype)
        return self


def _conv_param(rng, cout, cin, kh, kw):
    std = np.sqrt(2.0 / (cin * kh * kw))
    return rng.standard_normal((cout, cin, kh, kw)) * std


def _upconv_param(rng, cin, cout):
    # stride == kernel: each output position sees cin inputs
    std = np.sqrt(2.0 / cin)
    return rng.standard_normal((cin, cout, 2, 2)) * std


def _build(cfg: NetConfig, rng: np.random.Generator) -> ModelParams:
    cfg.validate()
    feats = cfg.features()
    tensors: OrderedDict[str, Tensor] = OrderedDict()

    def add(name, arr):
        tensors[name] = Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True, name=name)

    for k in range(cfg.levels):
        for j in range(cfg.convs_per_level):
            if j == 0:
                cin = cfg.in_channels if k == 0 else feats[k - 1]
            else:
                cin = feats[k]
            add(f"enc{k}.conv{j}.w", _conv_param(rng, feats[k], cin, 3, 3))
            add(f"enc{k}.conv{j}.b", np.zeros(feats[k]))

    for k in range(cfg.levels - 2, -1, -1):
        if cfg.downsampling == "strided-conv":
            add(f"dec{k}.up.w", _upconv_param(rng, feats[k + 1], feats[k]))
        else:
            # unpool keeps channel count, so reduce width before it
            add(f"dec{k}.up.w", _conv_param(rng, feats[k], feats[k + 1], 3, 3))
        add(f"dec{k}.up.b", np.zeros(feats[k]))
        for j in range(cfg.convs_per_level):
            if j == 0:
                cin = 2 * feats[k] if cfg.skip_connections else feats[k]
            else:
                cin = feats[k]
            add(f"dec{k}.conv{j}.w", _conv_param(rng, feats[k], cin, 3, 3))
            add(f"dec{k}.conv{j}.b", np.zeros(feats[k]))

    add("head.w", _conv_param(rng, cfg.n_classes, feats[0], 1, 1))
    add("head.b", np.zeros(cfg.n_classes))
    return ModelParams(cfg, tensors)


def build_reconstructor(cfg: NetConfig, rng: np.random.Generator) -> ModelParams:
    if not cfg.skip_connections:
        raise ValueError("reconstructor config must enable skip connections")
    return _build(cfg, rng)


def build_denoiser(cfg: NetConfig, rng: np.random.Generator) -> ModelParams:
    if cfg.skip_connections:
        raise ValueError("denoiser config must disable skip connections")
    if cfg.in_channels != cfg.n_classes:
        raise ValueError("denoiser maps probability fields to probability fields: in_channels must equal n_classes")
    return _build(cfg, rng)


def _dropout_mask(rng, channels, keep, dtype):
    m = (rng.random(channels) < keep).astype(dtype) / keep
    return m[:, None, None]


def forward(params: ModelParams, image, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Run the net; returns a per-pixel simplex field (C, H, W).

    Channel dropout after each encoder level fires only with train=True,
    drawing masks from `rng`.
    """
    cfg = params.cfg
    x = image if isinstance(image, Tensor) else Tensor(image)
    c, h, w = x.data.shape
    if c != cfg.in_channels:
        raise ValueError(f"input has {c} channels, config expects {cfg.in_channels}")
    div = 2 ** (cfg.levels - 1)
    if h % div or w % div:
        raise ValueError(f"shape not poolable: {(h, w)} not divisible by {div}")
    if train and cfg.dropout_keep < 1.0 and rng is None:
        raise ValueError("train-mode forward needs an rng for dropout")

    t = params.tensors
    strided = cfg.downsampling == "strided-conv"
    skips: list[Tensor | None] = []
    pool_idx: list[np.ndarray] = []

    for k in range(cfg.levels):
        if not strided and k > 0:
            x, idx = ops.maxpool2(x)
            pool_idx.append(idx)
        for j in range(cfg.convs_per_level):
            stride = 2 if (strided and k > 0 and j == 0) else 1
            x = ops.conv2d(x, t[f"enc{k}.conv{j}.w"], t[f"enc{k}.conv{j}.b"], stride=stride, pad=1)
            x = ops.instance_norm(x)
            x = ops.leaky_relu(x, LEAKY_SLOPE)
        if train and cfg.dropout_keep < 1.0:
            mask = _dropout_mask(rng, x.data.shape[0], cfg.dropout_keep, x.data.dtype)
            x = ops.mul(x, Tensor(np.broadcast_to(mask, x.data.shape).copy()))
        if k < cfg.levels - 1:
            skips.append(x if cfg.skip_connections else None)

    for k in range(cfg.levels - 2, -1, -1):
        if strided:
            x = ops.conv2d_transpose2(x, t[f"dec{k}.up.w"], t[f"dec{k}.up.b"])
        else:
            x = ops.conv2d(x, t[f"dec{k}.up.w"], t[f"dec{k}.up.b"], stride=1, pad=1)
            x = ops.leaky_relu(x, LEAKY_SLOPE)
            x = ops.max_unpool2(x, pool_idx[k])
        if cfg.skip_connections:
            x = ops.concat_channels(skips[k], x)
        for j in range(cfg.convs_per_level):
            x = ops.conv2d(x, t[f"dec{k}.conv{j}.w"], t[f"dec{k}.conv{j}.b"], stride=1, pad=1)
            x = ops.instance_norm(x)
            x = ops.leaky_relu(x, LEAKY_SLOPE)

    x = ops.conv2d(x, t["head.w"], t["head.b"], stride=1, pad=0)
    return ops.softmax_channels(x)


def config_with(cfg: NetConfig, **kw) -> NetConfig:
    return replace(cfg, **kw)


# -- serialization ------------------------------------------------------------

_DOWNSAMPLING_CODE = {k: i for i, k in enumerate(DOWNSAMPLING_KINDS)}


def save_model(path, params: ModelParams) -> None:
    """Single-file model: config scalars plus weights."""
    from .diffcore import save_tensors

    cfg = params.cfg
    entries = OrderedDict()
    meta = (
        ("levels", cfg.levels),
        ("base_features", cfg.base_features),
        ("max_features", cfg.max_features),
        ("in_channels", cfg.in_channels),
        ("n_classes", cfg.n_classes),
        ("skip_connections", int(cfg.skip_connections)),
        ("downsampling", _DOWNSAMPLING_CODE[cfg.downsampling]),
        ("convs_per_level", cfg.convs_per_level),
        ("dropout_keep", cfg.dropout_keep),
    )
    for k, v in meta:
        entries[f"cfg/{k}"] = np.float64(v)
    for k, t in params.tensors.items():
        entries[f"model/{k}"] = t.data
    save_tensors(path, entries)


def load_model(path) -> ModelParams:
    from .diffcore import load_tensors

    entries = load_tensors(path)
    get = lambda k: entries[f"cfg/{k}"].item()
    cfg = NetConfig(
        levels=int(get("levels")),
        base_features=int(get("base_features")),
        max_features=int(get("max_features")),
        in_channels=int(get("in_channels")),
        n_classes=int(get("n_classes")),
        skip_connections=bool(int(get("skip_connections"))),
        downsampling=DOWNSAMPLING_KINDS[int(get("downsampling"))],
        convs_per_level=int(get("convs_per_level")),
        dropout_keep=float(get("dropout_keep")),
    )
    params = _build(cfg, np.random.default_rng(0))
    params.load_state({k[len("model/"):]: v for k, v in entries.items() if k.startswith("model/")})
    return params
