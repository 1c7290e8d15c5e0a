import time

import numpy as np
import pytest
import torch

from iharmon.losses import LossWeights
from iharmon.model import ModelBundle, ModelConfig
from iharmon.synthesis import build_dataset
from iharmon.training import StageConfig, new_state, train_stage

from toydata import probe_composite, write_sources

# toy training schedule; shared by the overfit and region-sensitivity tests
TOY_MODEL = dict(style_dim=64, base_channels=16, res_blocks=1, resolution=64)
TOY_SEED = 3
TOY_DATASET_SEED = 11
TOY_STAGE1_STEPS = 700
TOY_STAGE2_STEPS = 1300
# reconstruction-dominant at toy scale; style terms stay on but soft
TOY_STAGE1_WEIGHTS = LossWeights(alpha=0.15, lam=0.05, beta=0.01)
TOY_STAGE2_WEIGHTS = LossWeights(alpha=0.15, lam=0.1, beta=0.01)


@pytest.fixture(scope="session")
def toy_sources(tmp_path_factory):
    root = tmp_path_factory.mktemp("sources")
    ann = write_sources(root)
    return root, ann


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory, toy_sources):
    src, ann = toy_sources
    out = tmp_path_factory.mktemp("dataset")
    build_dataset(src, ann, out, count=16, seed=TOY_DATASET_SEED)
    return out


@pytest.fixture(scope="session")
def toy_model_config():
    return ModelConfig(**TOY_MODEL)


@pytest.fixture(scope="session")
def untrained_bundle(toy_model_config):
    return ModelBundle.create(toy_model_config, seed=5).eval()


@pytest.fixture(scope="session")
def untrained_weights_path(tmp_path_factory, untrained_bundle):
    path = tmp_path_factory.mktemp("weights") / "untrained.ihw"
    untrained_bundle.to_archive(stage=0, step=0).save(path)
    return path


@pytest.fixture(scope="session")
def trained_state(toy_dataset, toy_model_config):
    """Two-stage toy training run; the expensive session fixture."""
    torch.manual_seed(TOY_SEED)
    state = new_state(toy_model_config, seed=TOY_SEED)
    s1 = StageConfig(stage=1, dataset=str(toy_dataset), steps=TOY_STAGE1_STEPS,
                     lr=2e-4, batch_size=8, resolution=64, seed=TOY_SEED,
                     checkpoint_every=10**9, weights=TOY_STAGE1_WEIGHTS)
    s2 = StageConfig(stage=2, dataset=str(toy_dataset), steps=TOY_STAGE2_STEPS,
                     lr=1e-4, batch_size=8, resolution=64, seed=TOY_SEED,
                     checkpoint_every=10**9, weights=TOY_STAGE2_WEIGHTS)
    started = time.perf_counter()
    state = train_stage(state, s1)
    stage1_history = list(state.history)
    state = train_stage(state, s2)
    state.train_seconds = time.perf_counter() - started
    state.stage1_history = stage1_history  # kept for the loss-trend check
    return state


@pytest.fixture(scope="session")
def trained_bundle(trained_state):
    return trained_state.bundle.eval()


@pytest.fixture(scope="session")
def probe():
    return probe_composite()


@pytest.fixture
def rng():
    return np.random.default_rng(20240813)
