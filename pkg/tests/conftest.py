"""Shared fixtures: meshes and assembled problems."""
import numpy as np
import pytest
import structlog

from app.models.mesh import Mesh
from app.pipelines.experiments import ProblemSetup
from app.pipelines.mesh_generator import named_grid


@pytest.fixture(scope="session")
def coarse_mesh():
    return named_grid("coarse")


@pytest.fixture(scope="session")
def medium_mesh():
    return named_grid("medium")


@pytest.fixture(scope="session")
def fine_mesh():
    return named_grid("fine")


@pytest.fixture(scope="session")
def coarse_setup(coarse_mesh):
    """k = 1, c0 = 5, g = 1 on the coarse quarter disk."""
    return ProblemSetup.build(coarse_mesh, 5.0)


@pytest.fixture
def unit_square():
    """Two triangles, every vertex on the boundary."""
    return Mesh(
        vertices=np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
        triangles=np.array([[0, 1, 2], [0, 2, 3]]),
        boundary_edges=np.array([[0, 1], [1, 2], [2, 3], [3, 0]]),
        label="square",
    )


@pytest.fixture
def reference_triangle():
    return Mesh(
        vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        triangles=np.array([[0, 1, 2]]),
        boundary_edges=np.array([[0, 1], [1, 2], [2, 0]]),
        label="triangle",
    )


@pytest.fixture(autouse=True)
def reset_logging():
    """CLI runs bind structlog to the captured stderr of a single test."""
    yield
    structlog.reset_defaults()
