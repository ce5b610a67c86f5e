import numpy as np
import pytest

from cpppkit.model import BayesianModel
from cpppkit.newcomb import NewcombModel, load_newcomb


class StandardNormalTarget(BayesianModel):
    """One-dimensional standard normal posterior with a throwaway predictive."""

    param_names = ("x",)

    def log_posterior(self, theta, data):
        x = float(theta[0])
        return -0.5 * x * x

    def simulate_predictive(self, theta, rng):
        return np.array([rng.normal(float(theta[0]), 1.0)])

    def discrepancy(self, data, theta):
        return float(np.asarray(data, dtype=float).ravel()[0])

    def initial_point(self, data):
        return np.zeros(1)


class ConstantDiscrepancyModel(StandardNormalTarget):
    """Discrepancy ignores the data entirely, so every difference is zero."""

    def discrepancy(self, data, theta):
        return 1.0


@pytest.fixture(scope="session")
def newcomb_data():
    return load_newcomb()


@pytest.fixture(scope="session")
def newcomb_model():
    return NewcombModel()


@pytest.fixture
def standard_normal_target():
    return StandardNormalTarget()


@pytest.fixture
def constant_discrepancy_model():
    return ConstantDiscrepancyModel()
