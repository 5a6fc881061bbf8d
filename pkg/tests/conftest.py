"""Shared fixtures for the test suite."""

import numpy as np
import pytest

from presim.geometry import SiteGeometry
from presim.spectrum import KnotSet, SpectralModel


@pytest.fixture(scope="session")
def model():
    """Spectral model with the default knots (hourly cutoff)."""
    return SpectralModel(KnotSet.default())


@pytest.fixture(scope="session")
def geometry3():
    """Three irregularly spaced sites, ~20-60 km apart."""
    return SiteGeometry(
        np.array([36.10, 36.45, 36.80]), np.array([-97.20, -96.90, -97.45])
    )


def random_params(model, rng, scale=0.4):
    """A random parameter vector with moderate coefficient sizes."""
    return model.unpack(rng.normal(scale=scale, size=model.n_params))


@pytest.fixture
def rand_params():
    return random_params
