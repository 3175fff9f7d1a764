import numpy as np
import pytest

from chainlab.potential import Potential
from chainlab.thermo import ThermoModel


@pytest.fixture(scope="session")
def pot_harmonic():
    return Potential.harmonic()


@pytest.fixture(scope="session")
def pot_kappa():
    return Potential.mollified_kappa(0.2, 0.1)


@pytest.fixture(scope="session")
def th_harmonic(pot_harmonic):
    return ThermoModel(pot_harmonic, beta=1.0)


@pytest.fixture(scope="session")
def th_kappa(pot_kappa):
    return ThermoModel(pot_kappa, beta=1.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
