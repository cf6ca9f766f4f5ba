"""Shared fixtures, the hypothesis profile and the ``--runslow`` switch."""

import hypothesis
import numpy as np
import pytest

from cavsolve.config import FLUID_MATERIAL, TABLE1_STRETCHES, TABLE1_VOLUME
from cavsolve.fem import BoundaryData
from cavsolve.material import MaterialModel
from cavsolve.mesh import build_annulus

hypothesis.settings.register_profile("ci", max_examples=25, deadline=None)
hypothesis.settings.register_profile("dev", max_examples=10, deadline=None)
hypothesis.settings.load_profile("ci")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def sequential_elements(monkeypatch):
    monkeypatch.setenv("CAVSOLVE_THREADS", "1")


@pytest.fixture
def fluid():
    return MaterialModel.stress_free(**FLUID_MATERIAL)


@pytest.fixture
def stretch():
    return BoundaryData(*TABLE1_STRETCHES)


@pytest.fixture
def volume():
    return TABLE1_VOLUME


@pytest.fixture
def coarse_mesh():
    return build_annulus(0.1, 4, 16)


@pytest.fixture
def small_mesh():
    return build_annulus(0.1, 8, 48)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_admissible(mesh, boundary, rng, scale=0.005):
    """A x plus a small random perturbation of the free nodes; det stays positive."""
    values = mesh.nodes @ boundary.matrix.T
    free = mesh.free_nodes
    values[free] += scale * mesh.eps * rng.standard_normal((len(free), 2))
    return values


def polygon_area(points):
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

