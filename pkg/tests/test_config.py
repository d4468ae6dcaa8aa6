import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sudseg import config as cfglib
from sudseg.config import ConfigError, ExperimentConfig


def test_defaults_validate():
    cfg = ExperimentConfig()
    cfg.validate()
    assert cfg.train.mode == "sud-stored"
    assert cfg.train.beta == 0.05
    assert cfg.train.lambda_max == 4.0


def test_flat_roundtrip_defaults():
    cfg = ExperimentConfig()
    flat = cfglib.to_flat(cfg)
    assert cfglib.from_flat(flat) == cfg
    assert flat["train.mode"] == "sud-stored"
    assert flat["net.skip_connections"] == "true"
    assert flat["scene.class_means"] == "0.55,0.62,0.69"


def test_file_roundtrip(tmp_path):
    cfg = dataclasses.replace(
        ExperimentConfig(),
        run_dir="runs/x",
        train=dataclasses.replace(ExperimentConfig().train, lr=3e-4, beta=0.125,
                                  two_pass_updates=True, mode="mean-teacher"),
    )
    p = tmp_path / "config.txt"
    cfglib.write_config_file(p, cfg)
    assert cfglib.load_config(p) == cfg


def test_file_comments_and_blank_lines(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# comment\n\ntrain.beta = 0.2\n  train.steps=7\n")
    cfg = cfglib.load_config(p)
    assert cfg.train.beta == 0.2 and cfg.train.steps == 7
    bad = tmp_path / "bad.txt"
    bad.write_text("train.beta 0.2\n")
    with pytest.raises(ConfigError, match="key = value"):
        cfglib.load_config(bad)


def test_overrides_win_over_file(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("train.beta = 0.2\n")
    cfg = cfglib.load_config(p, ["train.beta=0.3", "train.seed = 5"])
    assert cfg.train.beta == 0.3 and cfg.train.seed == 5
    with pytest.raises(ConfigError, match="key=value"):
        cfglib.load_config(p, ["train.beta"])


def test_strong_preset_expands_then_yields_to_explicit():
    cfg = cfglib.from_flat({"train.preset": "strong"})
    assert cfg.train.beta == 0.125 and cfg.train.lambda_max == 8.0
    cfg2 = cfglib.from_flat({"train.preset": "strong", "train.beta": "0.5"})
    assert cfg2.train.beta == 0.5 and cfg2.train.lambda_max == 8.0
    with pytest.raises(ConfigError, match="preset"):
        cfglib.from_flat({"train.preset": "gentle"})


def test_unknown_keys_error():
    with pytest.raises(ConfigError, match="unknown config key"):
        cfglib.from_flat({"train.velocity": "1"})
    with pytest.raises(ConfigError, match="unknown config key"):
        cfglib.from_flat({"optimizer.lr": "0.1"})


def test_type_errors_are_config_errors():
    with pytest.raises(ConfigError, match="integer"):
        cfglib.from_flat({"train.steps": "many"})
    with pytest.raises(ConfigError, match="number"):
        cfglib.from_flat({"train.lr": "fast"})
    with pytest.raises(ConfigError, match="boolean"):
        cfglib.from_flat({"net.skip_connections": "maybe"})
    with pytest.raises(ConfigError, match="comma-separated"):
        cfglib.from_flat({"scene.shapes_per_class": "1,2,3"})


def test_tuple_fields_parse():
    cfg = cfglib.from_flat({"scene.class_means": "0.4,0.6,0.8", "scene.shapes_per_class": "2,3"})
    assert cfg.scene.class_means == (0.4, 0.6, 0.8)
    assert cfg.scene.shapes_per_class == (2, 3)


def test_semantic_validation():
    with pytest.raises(ConfigError, match="mode"):
        cfglib.from_flat({"train.mode": "ladder"})
    with pytest.raises(ConfigError, match="beta"):
        cfglib.from_flat({"train.beta": "1.5"})
    with pytest.raises(ConfigError, match="n_classes"):
        cfglib.from_flat({"net.n_classes": "3"})  # scene still has 4
    with pytest.raises(ConfigError, match="intensity channel"):
        cfglib.from_flat({"net.in_channels": "2"})
    with pytest.raises(ConfigError, match="val_every"):
        cfglib.from_flat({"train.val_every": "0"})


FLOAT_KEYS = st.sampled_from([
    ("train.lr", 1e-6, 1.0),
    ("train.beta", 0.0, 1.0),
    ("train.lambda_max", 0.0, 16.0),
    ("augment.noise_hi", 0.0, 1.0),
    ("scene.pixel_noise", 0.0, 0.5),
])


@given(FLOAT_KEYS, st.floats(0.0, 1.0, allow_nan=False))
@settings(max_examples=50, deadline=None)
def test_float_roundtrip_exact(spec, unit):
    """repr-formatted floats survive write -> parse bit-exactly."""
    key, lo, hi = spec
    value = lo + (hi - lo) * unit
    cfg = cfglib.from_flat({key: repr(value)})
    flat = cfglib.to_flat(cfg)
    assert flat[key] == repr(value)
    assert cfglib.from_flat(flat) == cfg


def test_config_equality_is_deep():
    a = cfglib.from_flat({"train.beta": "0.3"})
    b = cfglib.from_flat({"train.beta": "0.3"})
    c = cfglib.from_flat({"train.beta": "0.30001"})
    assert a == b
    assert a != c
