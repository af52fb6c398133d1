"""Shared fixtures: solved reference fields are expensive, build them once."""
import numpy as np
import pytest

from stefanlab.field import SpaceTimeGrid
from stefanlab import examples as ex


@pytest.fixture(scope="session")
def radial_example():
    """Radial d=2 solve to extinction, embedded on a 2D grid (criterion 5 setup)."""
    n = 129
    dx = 1.0 / (n - 1)
    grid = SpaceTimeGrid(1, (n,), 9000, dx, dx * dx / 2.0, (0.0,), 0.0)
    return ex.make_radial(2, lambda r: 0.1 * np.maximum(1 - r**2, 0.0) ** 2, grid,
                          embed_box_radius=0.75)


@pytest.fixture(scope="session")
def glued_example():
    """Two glued copies of a 1D radial base (criterion 12 setup)."""
    nx = 2201
    dxg = 1.6 / (nx - 1)
    dtg = 1.2e-6
    grid = SpaceTimeGrid(1, (nx,), int(np.ceil(2.6e-3 / dtg)), dxg, dtg, (-0.2,), 0.0)
    return ex.make_glued(ex.GluingPlan(2), grid, base_nodes=513)


@pytest.fixture(scope="session")
def tychonoff_example():
    grid = SpaceTimeGrid(1, (257,), 513, 1.0 / 256, 1.0 / 1024, (-0.5,), -0.25)
    return ex.make_tychonoff(1e-3, 8, grid)


@pytest.fixture(scope="session")
def planar_example():
    grid = SpaceTimeGrid(1, (257,), 1001, 2.0 / 256, 0.0005, (-1.0,), 0.0)
    return ex.make_planar(0.25, grid)
