import dataclasses

import numpy as np
import pytest

from sudseg import synth
from sudseg.config import ExperimentConfig


@pytest.fixture(scope="session")
def tiny_data_dir(tmp_path_factory):
    """Small on-disk dataset shared by trainer/cli tests: 32x32, 4 classes."""
    root = tmp_path_factory.mktemp("data")
    scene = synth.ShapeSceneConfig(height=32, width=32, radius_range=(4.0, 9.0))
    counts = {"labeled": 2, "unlabeled": 5, "val": 2, "test": 3, "denoiser": 3}
    synth.write_dataset(root, scene, counts, master_seed=11)
    return root


@pytest.fixture()
def tiny_cfg(tiny_data_dir):
    cfg = ExperimentConfig()
    return dataclasses.replace(
        cfg,
        run_dir="",
        data=dataclasses.replace(cfg.data, dir=str(tiny_data_dir)),
        scene=dataclasses.replace(cfg.scene, height=32, width=32, radius_range=(4.0, 9.0)),
        net=dataclasses.replace(cfg.net, levels=2, base_features=4),
        denoiser_net=dataclasses.replace(cfg.denoiser_net, levels=2, base_features=4),
        train=dataclasses.replace(cfg.train, steps=6),
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
