"""
Orbimag -- Shared test fixtures.
Small grids and wells that keep every solve on the dense path.
"""

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.eigensolve import SolveOptions, dense_spectrum
from core.model import PhysicalParams, bump_potential, make_grid, sample_potential
from core.operators import hamiltonian_single_atom, observables


@pytest.fixture
def opts():
    return SolveOptions(tol=1e-9, seed=0)


@pytest.fixture
def params():
    return PhysicalParams(kappa=1.0)


@pytest.fixture
def small_grid():
    """20 x 20 Dirichlet box, spacing 0.4 (400 nodes)."""
    return make_grid(2, 4.0, 20)


@pytest.fixture
def deep_well():
    """Anisotropic bump deep enough for several simple bound states."""
    return bump_potential(depth=10.0, radius=2.0, aspect=0.75)


@pytest.fixture
def atom(small_grid, deep_well):
    """(grid, H, full dense spectrum, observables) for the deep well."""
    H = hamiltonian_single_atom(small_grid, sample_potential(deep_well, small_grid))
    full = dense_spectrum(H, SolveOptions(tol=1e-9))
    return small_grid, H, full, observables(small_grid)
