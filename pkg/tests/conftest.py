"""Shared pytest fixtures: tiny deterministic datasets, parameters and run settings."""

import pytest

from adversary.pgd import PgdConfig
from data.dataset import Dataset
from data.synthetic import SyntheticConfig, generate_synthetic
from model.params import ModelParams, init_params
from tests.helpers import TINY_D, TINY_HEADS, TINY_HIDDEN
from trainer.training import TrainConfig


@pytest.fixture
def tiny_config() -> SyntheticConfig:
    return SyntheticConfig(num_videos=8, T=10, n=2, d=TINY_D, fps=10, ramp_len=3)


@pytest.fixture
def tiny_dataset(tiny_config: SyntheticConfig) -> Dataset:
    return generate_synthetic(tiny_config, seed=0)


@pytest.fixture
def tiny_test_dataset(tiny_config: SyntheticConfig) -> Dataset:
    return generate_synthetic(tiny_config, seed=0, split="test")


@pytest.fixture
def tiny_params() -> ModelParams:
    return init_params(TINY_D, TINY_HIDDEN, TINY_HEADS, seed=0)


@pytest.fixture
def other_params() -> ModelParams:
    return init_params(TINY_D, TINY_HIDDEN, TINY_HEADS, seed=1)


@pytest.fixture
def tiny_train_config() -> TrainConfig:
    return TrainConfig(
        learning_rate=1e-2,
        batch_size=4,
        epochs=2,
        seed=0,
        hidden=TINY_HIDDEN,
        heads=TINY_HEADS,
        pgd=PgdConfig(epsilon=0.05, alpha=0.01, iterations=2),
    )
