import numpy as np
import pytest

from nematicflow import GridSpec, make_grid
from nematicflow.mesh import director_field, face_field, fill_cell_neumann, fill_face_no_slip, scalar_field


@pytest.fixture
def grid32():
    return make_grid(GridSpec(32, 32, 1.0, 1.0, 2))


@pytest.fixture
def grid16():
    return make_grid(GridSpec(16, 16, 1.0, 1.0, 2))


def random_face(grid, rng):
    u = face_field(grid)
    u.x[2:-2, 1:-1] = rng.standard_normal((grid.nx - 1, grid.ny))
    u.y[1:-1, 2:-2] = rng.standard_normal((grid.nx, grid.ny - 1))
    fill_face_no_slip(u)
    return u


def random_scalar(grid, rng, zero_mean=False):
    p = scalar_field(grid)
    p[1:-1, 1:-1] = rng.standard_normal((grid.nx, grid.ny))
    if zero_mean:
        p[1:-1, 1:-1] -= p[1:-1, 1:-1].mean()
    fill_cell_neumann(p)
    return p


def random_director(grid, rng, unit=False):
    d = director_field(grid)
    d[:, 1:-1, 1:-1] = rng.standard_normal((grid.m, grid.nx, grid.ny))
    if unit:
        d[:, 1:-1, 1:-1] /= np.sqrt(np.sum(d[:, 1:-1, 1:-1] ** 2, axis=0))
    fill_cell_neumann(d)
    return d


def smooth_unit_director(grid, wiggle=0.1):
    """Wall-compatible circle-valued field plus a compatible bump."""
    d = director_field(grid)
    x = grid.xc()[:, None] / grid.lx
    y = grid.yc()[None, :] / grid.ly
    theta = 0.5 * np.pi * (1.0 - np.cos(np.pi * x))
    d[0] = np.cos(theta) + wiggle * np.cos(np.pi * y)
    d[1] = np.sin(theta) + 0.0 * y
    if grid.m == 3:
        d[2] = wiggle * np.cos(np.pi * x) * np.cos(np.pi * y)
    d /= np.sqrt(np.sum(d * d, axis=0))
    fill_cell_neumann(d)
    return d


def fitted_order(hs, errs):
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
