import numpy as np
import pytest

from sudseg.diffcore import CheckpointError, load_tensors, save_tensors


def test_round_trip_preserves_values_and_order(tmp_path, rng):
    src = {
        "b/weight": rng.normal(size=(3, 2, 3, 3)),
        "a/bias": rng.normal(size=(7,)),
        "meta/step": np.asarray(42.0),
    }
    p = tmp_path / "t.sudt"
    save_tensors(p, src)
    out = load_tensors(p)
    assert list(out) == list(src)  # insertion order, not sorted
    for k in src:
        np.testing.assert_array_equal(out[k], np.asarray(src[k], dtype=np.float64))


def test_float32_survives_via_float64_container(tmp_path, rng):
    x = rng.normal(size=(5, 5)).astype(np.float32)
    p = tmp_path / "t.sudt"
    save_tensors(p, {"x": x})
    back = load_tensors(p)["x"].astype(np.float32)
    np.testing.assert_array_equal(back, x)  # f32 -> f64 -> f32 is exact


def test_rank_zero_and_empty_names(tmp_path):
    save_tensors(tmp_path / "t.sudt", {"s": np.asarray(3.5)})
    out = load_tensors(tmp_path / "t.sudt")
    assert out["s"].shape == ()
    assert float(out["s"]) == 3.5


def test_truncated_file_errors(tmp_path, rng):
    p = tmp_path / "t.sudt"
    save_tensors(p, {"x": rng.normal(size=(64,))})
    raw = p.read_bytes()
    p.write_bytes(raw[: len(raw) - 9])
    with pytest.raises(CheckpointError):
        load_tensors(p)


def test_bad_magic_errors(tmp_path):
    p = tmp_path / "t.sudt"
    p.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(CheckpointError):
        load_tensors(p)
