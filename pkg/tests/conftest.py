from __future__ import annotations

import pytest

from torsopose.evaluation import build_samples
from torsopose.geometry import default_rig
from torsopose.simulator import NOISE_PROFILES, GenerationConfig, simulate


@pytest.fixture(scope="session")
def rig():
    return default_rig()


@pytest.fixture(scope="session")
def clean_dataset(rig):
    return simulate(GenerationConfig(200, seed=5, rate=5, noise=NOISE_PROFILES["none"]), rig)


@pytest.fixture(scope="session")
def noisy_dataset(rig):
    return simulate(GenerationConfig(120, seed=6, rate=5, noise=NOISE_PROFILES["moderate"]),
                    rig)


@pytest.fixture(scope="session")
def clean_samples(clean_dataset, rig):
    return build_samples(clean_dataset, "3d", rig)[0]


@pytest.fixture(scope="session")
def noisy_samples_2d(noisy_dataset, rig):
    return build_samples(noisy_dataset, "2d", rig)[0]
