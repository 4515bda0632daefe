from __future__ import annotations

import logging

import pytest

from fracdiff.services.inverse_objective import ResidualModel, make_observations
from fracdiff.services.spectral_forward import FractionalTriple, ParameterBox, example1_expansion
from fracdiff.services.trust_region_solver import TrustRegionConfig

EXAMPLE1_A_STAR = FractionalTriple(0.4, 0.6, 1.2)
EXAMPLE1_START = FractionalTriple(0.05, 0.1, 1.7)


@pytest.fixture
def a_star() -> FractionalTriple:
    return EXAMPLE1_A_STAR


@pytest.fixture
def box() -> ParameterBox:
    return ParameterBox()


@pytest.fixture
def expansion():
    return example1_expansion()


@pytest.fixture
def clean_observations(expansion, a_star):
    return make_observations(expansion, a_star, m=50, horizon=1.0, delta=0.0, seed=0)


@pytest.fixture
def noisy_observations(expansion, a_star):
    return make_observations(expansion, a_star, m=50, horizon=1.0, delta=0.5, seed=3)


@pytest.fixture
def clean_model(clean_observations, expansion, box) -> ResidualModel:
    return ResidualModel(clean_observations, expansion, box, lam=1e-7)


@pytest.fixture
def solver_config() -> TrustRegionConfig:
    return TrustRegionConfig(max_iters=60)


@pytest.fixture
def example1_start() -> FractionalTriple:
    return EXAMPLE1_START


@pytest.fixture(autouse=True)
def _restore_logging():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    logging.disable(logging.NOTSET)
    root.handlers[:] = handlers
    root.setLevel(level)
