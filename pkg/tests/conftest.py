import math
import warnings

import numpy as np
import pytest

from qdtimebin.analysis import two_pulse_run
from qdtimebin.model import PulsePair, SystemParams
from qdtimebin.regression import CorrelatorEngine, G3Request, g3


@pytest.fixture(scope="session")
def params():
    return SystemParams()


@pytest.fixture(scope="session")
def pulses():
    return PulsePair()


@pytest.fixture(scope="session")
def run1(params, pulses):
    """The standard two-pulse run from |m,0>."""
    return two_pulse_run(params, pulses)


@pytest.fixture(scope="session")
def engine(params, pulses):
    return CorrelatorEngine(params, pulses)


@pytest.fixture(scope="session")
def g3_full(params, pulses, engine):
    return g3(G3Request.default(pulses, T=14 * math.pi), params, pulses, engine=engine)


@pytest.fixture(scope="session")
def g3_fast(params, pulses):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return g3(G3Request.default(pulses, T=14 * math.pi, fast=True), params, pulses)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_density(rng, n, rank=None):
    rank = rank or n
    a = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)
