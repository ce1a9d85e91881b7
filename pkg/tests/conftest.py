import math

import numpy as np
import pytest

from cosine_basis import CosineBasis
from hawkes_core import CosineToyKernel, EventSequence, ExpToyKernel, HawkesModel, ObservationWindow, simulate_hawkes
from run_config import BasisSettings, SamplerConfig

PI_WINDOW = ObservationWindow(0.0, math.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def exp_model():
    return HawkesModel(10.0, ExpToyKernel())


@pytest.fixture
def cos_model():
    return HawkesModel(10.0, CosineToyKernel())


@pytest.fixture
def small_basis():
    return CosineBasis(K=8)


@pytest.fixture
def quick_config():
    return SamplerConfig(iterations=12, burn_in=4, basis=BasisSettings(K=8), grid_points=64)


def simulate_group(model, count, seed):
    streams = np.random.SeedSequence(seed).spawn(count)
    return [simulate_hawkes(model, PI_WINDOW, np.random.default_rng(s))[0] for s in streams]


def seq(*times, end=math.pi):
    return EventSequence.from_times(times, end=end)
