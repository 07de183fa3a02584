"""Shared fixtures: grids, conductivity presets, and cached bundles."""

import numpy as np
import pytest

from hiplab.elliptic import Conductivity
from hiplab.forward import build_bundle
from hiplab.mesh import Grid, ScalarField


def bump_values(grid, a=0.2, x0=0.45, y0=0.55, r=0.03):
    X, Y = grid.coords()
    return 1.0 + a * np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / r)


def sigma_preset(grid, name):
    X, _ = grid.coords()
    if name == "const":
        values = np.ones(grid.shape)
    elif name == "bump":
        values = bump_values(grid)
    elif name == "expx":
        values = np.exp(X)
    else:
        raise KeyError(name)
    return Conductivity.certify(ScalarField(grid, values))


def linear_x(grid):
    X, _ = grid.coords()
    return ScalarField(grid, X.copy())


@pytest.fixture(scope="session")
def grid32():
    return Grid(32)


@pytest.fixture(scope="session")
def grid64():
    return Grid(64)


@pytest.fixture(scope="session")
def bundle_cache():
    """Memoized (n, sigma preset, p) -> LinearizationBundle factory."""
    cache = {}

    def get(n, preset, p):
        key = (n, preset, p)
        if key not in cache:
            grid = Grid(n)
            cache[key] = build_bundle(sigma_preset(grid, preset), linear_x(grid), p)
        return cache[key]

    return get
