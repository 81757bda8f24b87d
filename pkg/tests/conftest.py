"""Shared fixtures: clean mains cycles, labeled blobs and a small synthetic scenario."""

import numpy as np
import pytest

from waveshape_nilm.learn import Dataset, split
from waveshape_nilm.signal import CyclePair, Waveform, sine_cycle
from waveshape_nilm.simulate import ScenarioConfig, generate_scenario

N = 256
V_PEAK = 170.0


@pytest.fixture
def v_cycle():
    return sine_cycle(V_PEAK, N)


@pytest.fixture
def resistive_cycle(v_cycle):
    return CyclePair(v=v_cycle, i=sine_cycle(5.0, N))


@pytest.fixture
def inductive_cycle(v_cycle):
    return CyclePair(v=v_cycle, i=sine_cycle(5.0, N, phase=-np.pi / 6))


def tiled(cycle: np.ndarray, count: int) -> Waveform:
    return Waveform(np.tile(cycle, count))


@pytest.fixture
def blobs():
    """Three well separated Gaussian classes in 4-D, 30 points each."""
    rng = np.random.default_rng(3)
    centers = np.array([[0, 0, 0, 0], [6, 6, 0, 0], [0, 6, 6, 6]], dtype=float)
    X = np.concatenate([c + rng.normal(0.0, 0.5, size=(30, 4)) for c in centers])
    y = np.repeat([0, 1, 2], 30)
    return Dataset(X=X, y=y)


@pytest.fixture
def blob_split(blobs):
    return split(blobs, (0.5, 0.2, 0.3), seed=1)


def small_scenario_config(**changes) -> ScenarioConfig:
    """Three-appliance noise-free scenario of 72 s with a dense event rate."""
    values = dict(bank_size=3, duration=0.02, events_per_hour_mean=4000.0, seed=11)
    values.update(changes)
    return ScenarioConfig(**values)


@pytest.fixture(scope="session")
def scenario():
    return generate_scenario(small_scenario_config())
