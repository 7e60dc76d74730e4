import numpy as np
import pytest
import torch

from movos.network import MotionOptionNet, NetworkConfig
from movos.synthetic import SynthConfig, generate_synthetic_dataset

TINY_CONFIG = NetworkConfig(channels=(4, 8, 12, 16))


@pytest.fixture
def tiny_model():
    torch.manual_seed(0)
    return MotionOptionNet(TINY_CONFIG)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def mini_dataset():
    """Small synthetic dataset shared by read-only tests."""
    gen = np.random.default_rng(11)
    return generate_synthetic_dataset(
        SynthConfig(n_sequences=2, frames_per_seq=4, resolution=32, n_sod=6), gen)
