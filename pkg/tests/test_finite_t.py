"""
Orbimag -- Finite-Temperature Formula Tests
Perturbative level corrections, the level table, Zeeman ladders and the
Boltzmann moment.

Run with: pytest tests/test_finite_t.py -v
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.eigensolve import SolveOptions, dense_spectrum
from core.finite_t import (
    LevelData, boltzmann_moment, level_corrections, level_table, load_level_table,
    perturbative_sampler, save_level_table, zeeman_levels,
)
from core.model import harmonic_potential, make_grid, sample_potential
from core.operators import hamiltonian_magnetic, observables, zeeman_terms
from core.safety import ConfigError
from core.susceptibility import feshbach_second_order
from core.thermo import helmholtz_susceptibility, vanvleck_finite_T


@pytest.fixture
def pair():
    """Two degenerate levels with opposite moments."""
    return [LevelData(0.0, 1.0, 0.0, "up"), LevelData(0.0, -1.0, 0.0, "down")]


class TestLevelData:

    def test_energy(self):
        lv = LevelData(-1.0, 0.5, 0.25)
        assert lv.energy(2.0) == pytest.approx(-1.0 + 1.0 + 1.0)

    def test_sampler(self, pair):
        sample = perturbative_sampler(pair)
        assert list(sample(0.3)) == pytest.approx([0.3, -0.3])

    def test_sampler_empty(self):
        with pytest.raises(ConfigError):
            perturbative_sampler([])


# ---------------------------------------------------------------------------
# Corrections from the spectrum
# ---------------------------------------------------------------------------

class TestCorrections:

    def test_ground_state(self, atom, opts):
        grid, H, full, obs = atom
        lv = level_corrections(full, 1, H, obs, opts)
        assert lv.E == pytest.approx(full.value(1))
        # real eigenvector: no linear shift
        assert abs(lv.E1) < 1e-10
        # lambda(b) = E + b E1 + b^2 E2, so lambda'' = 2 E2
        assert 2.0 * lv.E2 == pytest.approx(feshbach_second_order(full, 1, H, obs, opts), rel=1e-8)
        assert lv.label == "l=1"

    def test_table_round_trip(self, atom, opts, tmp_path):
        grid, H, full, obs = atom
        table = level_table(full, 2, H, obs, opts)
        path = save_level_table(table, tmp_path / "levels.json")
        assert load_level_table(path) == table

    def test_table_feeds_vanvleck(self, atom, opts):
        grid, H, full, obs = atom
        table = level_table(full, 1, H, obs, opts)
        # one level, E1 = 0: the average reduces to -2 E2
        assert vanvleck_finite_T(table, 5.0) == pytest.approx(-2.0 * table[0].E2, rel=1e-8)

    def test_linear_coefficient_sign(self):
        # b0 = 0.3 splits the oscillator p pair; level 2 carries L3 = +1
        opts = SolveOptions(tol=1e-10)
        grid = make_grid(2, 5.0, 32)
        field = sample_potential(harmonic_potential(1.0), grid)
        b0 = 0.3
        H = hamiltonian_magnetic(grid, field, b0)
        spec = dense_spectrum(H, opts)
        lv = level_corrections(spec, 2, H, observables(grid), opts)
        phi = spec.vector(2)
        w1, w2 = zeeman_terms(grid)
        assert lv.E1 == pytest.approx(float(np.real(np.vdot(phi, w1 @ phi))), abs=1e-10)
        assert lv.E1 == pytest.approx(-0.5, rel=5e-2)
        # Hellmann-Feynman at b0: d lambda / db = <W1> + 2 b0 <W2>
        step = 1e-4
        up = dense_spectrum(hamiltonian_magnetic(grid, field, b0 + step), opts).value(2)
        down = dense_spectrum(hamiltonian_magnetic(grid, field, b0 - step), opts).value(2)
        slope = lv.E1 + 2.0 * b0 * float(np.real(np.vdot(phi, w2 @ phi)))
        assert (up - down) / (2.0 * step) == pytest.approx(slope, abs=1e-6)


# ---------------------------------------------------------------------------
# Ladders & moments
# ---------------------------------------------------------------------------

class TestMoment:

    def test_zeeman_sorted(self, pair):
        rows = zeeman_levels(pair, 0.2)
        assert [r["label"] for r in rows] == ["down", "up"]
        assert rows[0]["shift"] == pytest.approx(-0.2)

    def test_quadratic_level(self):
        c, B = 0.3, 0.2
        sample = perturbative_sampler([LevelData(-1.0, 0.0, c)])
        assert boltzmann_moment(sample, 2.0, B) == pytest.approx(-2.0 * c * B, rel=1e-8)

    def test_curie_pair(self, pair):
        beta, B = 2.0, 0.1
        m = boltzmann_moment(perturbative_sampler(pair), beta, B)
        assert m == pytest.approx(math.tanh(beta * B), rel=1e-8)

    def test_zero_field_pair_has_no_moment(self, pair):
        assert boltzmann_moment(perturbative_sampler(pair), 4.0, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_helmholtz_matches_single_level(self):
        lv = LevelData(-1.0, 0.0, 0.4)
        chi = helmholtz_susceptibility(perturbative_sampler([lv]), 3.0)
        assert chi == pytest.approx(-0.8, rel=1e-8)

    def test_rejects_bad_beta(self, pair):
        with pytest.raises(ConfigError):
            boltzmann_moment(perturbative_sampler(pair), 0.0, 0.1)
