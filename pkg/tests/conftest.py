import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from app.schemas.config import (  # noqa: E402
    BridgeConfig,
    ExperimentConfig,
    ModelConfig,
    OptimizerConfig,
    TaskConfig,
    TrainingConfig,
)

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="Run long experiment tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running experiment test (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    """Seeded generator shared by a single test."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model_config():
    """Small attentive GRU with a short output cap."""
    return ModelConfig(embed_dim=4, hidden_dim=5, max_len=4, beam=3, init_scale=0.3)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def experiment_config(tmp_path):
    """A copy-task experiment small enough to train in seconds."""
    return ExperimentConfig(
        name="test",
        seed=11,
        output_dir=str(tmp_path / "run"),
        task=TaskConfig(
            synth_kind="copy",
            data_dir=str(tmp_path / "data"),
            vocab_size=5,
            min_len=2,
            max_len=3,
            n_train=12,
            n_dev=4,
            n_test=4,
            noise=0.0,
            seed=3,
        ),
        model=ModelConfig(embed_dim=4, hidden_dim=6, max_len=5, beam=2, init_scale=0.2),
        bridge=BridgeConfig(tau=0.8, K=3),
        optimizer=OptimizerConfig(),
        training=TrainingConfig(
            epochs=2, batch_size=4, eval_every=2, patience=50, pretrain_epochs=1, bridge_pretrain_epochs=1, lm_epochs=1
        ),
    )
