"""
Orbimag -- Thermodynamics Tests
Occupations, density and its inversion, the Fermi energy limit, the
finite-volume pressure and the classical reference formulas.

Run with: pytest tests/test_thermo.py -v
"""

import json
import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.bands import BandStructure, band_edges_and_gaps, brillouin_samples
from core.eigensolve import dense_spectrum
from core.model import (
    LatticeConfig, PhysicalParams, bump_potential, cell_grid, make_grid, sample_potential,
)
from core.operators import hamiltonian_single_atom
from core.safety import BracketFailure, ConfigError, NotInsulating, TailTooLarge
from core.susceptibility import atomic_susceptibility
from core.thermo import (
    ThermoQuery, ThermoResult, aitken, atomic_fermi_energy, classical_references, density,
    fermi_dirac, fermi_energy, fermi_energy_from_lattice, finite_volume_pressure,
    finite_volume_susceptibility, fugacity_to_mu, helmholtz_susceptibility,
    invert_chemical_potential, vanvleck_finite_T, weyl_tail,
)

CELL = 2.0 * math.pi


def _bands(rows):
    ks = brillouin_samples(CELL, 4, 1)
    return BandStructure(R=CELL, dim=1, n_k=4, k_samples=ks, bands=np.asarray(rows, dtype=float))


@pytest.fixture
def insulator():
    """Two bands mirrored about -1.9, so mu sits exactly at the gap midpoint."""
    return _bands([[-3.0, -0.8], [-2.9, -0.9], [-2.8, -1.0], [-2.9, -0.9]])


# ---------------------------------------------------------------------------
# Occupations & queries
# ---------------------------------------------------------------------------

class TestOccupation:

    def test_half_at_mu(self):
        assert fermi_dirac(3.0, -1.0, -1.0) == pytest.approx(0.5)

    def test_three_quarters(self):
        # e^{beta(mu - E)} = 3
        assert fermi_dirac(1.0, math.log(3.0), 0.0) == pytest.approx(0.75)

    def test_no_overflow(self):
        occ = fermi_dirac(1e4, 0.0, np.array([-10.0, 10.0]))
        assert occ[0] == 1.0 and occ[1] == 0.0

    def test_fugacity_to_mu(self):
        assert fugacity_to_mu(math.e, 2.0) == pytest.approx(0.5)

    def test_query_needs_exactly_one(self):
        with pytest.raises(ConfigError):
            ThermoQuery(beta=1.0)
        with pytest.raises(ConfigError):
            ThermoQuery(beta=1.0, mu=-1.0, rho0=0.1)
        assert ThermoQuery(beta=1.0, rho0=0.1).mu is None

    def test_result_round_trip(self, tmp_path):
        res = ThermoResult(beta=4.0, density=0.1, mu_solution=-1.9, mu_schedule=[-1.8, -1.9])
        path = res.save(tmp_path / "thermo.json")
        assert ThermoResult.from_dict(json.loads(path.read_text())) == res


# ---------------------------------------------------------------------------
# Density & inversion
# ---------------------------------------------------------------------------

class TestDensity:

    def test_filled_band(self, insulator):
        assert density(insulator, 40.0, -1.9) == pytest.approx(1.0 / CELL, rel=1e-12)

    def test_top_band_occupied(self, insulator):
        with pytest.raises(TailTooLarge):
            density(insulator, 40.0, -0.5)
        assert density(insulator, 40.0, -0.5, tail_tol=None) > 1.0 / CELL

    def test_inversion(self, insulator):
        rho0 = 1.0 / CELL
        mu = invert_chemical_potential(insulator, 40.0, rho0)
        assert density(insulator, 40.0, mu) == pytest.approx(rho0, rel=1e-10)
        assert mu == pytest.approx(-1.9, abs=1e-9)

    def test_inversion_deep_gap(self, insulator):
        # occupations of both bands sit below rounding at the midpoint
        for beta in (200.0, 1000.0):
            mu = invert_chemical_potential(insulator, beta, 1.0 / CELL)
            assert mu == pytest.approx(-1.9, abs=1e-12)

    def test_ceiling(self, insulator):
        with pytest.raises(BracketFailure):
            invert_chemical_potential(insulator, 40.0, 2.0 / CELL)

    def test_needs_more_bands(self, insulator):
        with pytest.raises(BracketFailure):
            invert_chemical_potential(insulator, 40.0, 1.8 / CELL)


# ---------------------------------------------------------------------------
# Fermi energy
# ---------------------------------------------------------------------------

class TestFermiEnergy:

    def test_aitken_geometric(self):
        assert aitken(1.0, 1.5, 1.75) == pytest.approx(2.0)

    def test_aitken_constant(self):
        assert aitken(-1.0, -1.0, -1.0) == -1.0

    def test_aitken_ignores_rounding_noise(self):
        x0 = -1.9
        x1, x2 = x0 + 1e-14, x0 + 1.99e-14
        assert aitken(x0, x1, x2) == x2

    def test_aitken_rejects_growing_steps(self):
        assert aitken(0.0, 1.0, 3.0) == 3.0

    def test_gap_midpoint_limit(self, insulator):
        fe = fermi_energy(insulator, 1.0 / CELL, [40.0, 60.0, 80.0], workers=1)
        assert fe.estimate == pytest.approx(-1.9, abs=1e-9)
        assert fe.gap_midpoint == pytest.approx(-1.9)
        assert fe.deviation < 1e-9
        assert fe.betas == [40.0, 60.0, 80.0]
        assert fe.densities == pytest.approx([1.0 / CELL] * 3, rel=1e-10)

    def test_fractional_filling(self, insulator):
        with pytest.raises(NotInsulating, match="not an integer"):
            fermi_energy(insulator, 0.5 / CELL, [40.0])

    def test_closed_gap(self):
        # every k sorted; band 1 tops out at -2.6, above the band 2 bottom at -2.7
        metal = _bands([[-3.0, -2.7], [-2.9, -2.65], [-2.6, -2.5], [-2.9, -2.65]])
        with pytest.raises(NotInsulating, match="No open gap"):
            fermi_energy(metal, 1.0 / CELL, [40.0])

    def test_positive_limit(self, insulator):
        shifted = _bands(insulator.bands + 5.0)
        with pytest.raises(NotInsulating, match="continuum"):
            fermi_energy(shifted, 1.0 / CELL, [40.0, 60.0, 80.0])

    def test_empty_schedule(self, insulator):
        with pytest.raises(ConfigError):
            fermi_energy(insulator, 1.0 / CELL, [])

    def test_atomic_fermi_energy(self):
        lam = [-3.0, -1.0, -0.5]
        assert atomic_fermi_energy(lam, 1, 3) == pytest.approx(-2.0)
        assert atomic_fermi_energy(lam, 3, 3) == pytest.approx(-0.25)
        with pytest.raises(ConfigError):
            atomic_fermi_energy(lam, 0, 3)

    def test_from_lattice_adds_bands(self, opts):
        lattice = LatticeConfig(R=5.0, site_extent=2.0)
        grid = cell_grid(lattice, 0.5)
        bs, fe = fermi_energy_from_lattice(lattice, bump_potential(10.0, 2.0, 0.75), 1, 1, 4,
                                           grid, [20.0, 40.0, 80.0], opts, workers=1)
        assert bs.n_bands >= 2
        gap = band_edges_and_gaps(bs).gap_above(1)
        assert gap["lower"] < fe.estimate < gap["upper"]


# ---------------------------------------------------------------------------
# Finite volume
# ---------------------------------------------------------------------------

class TestFiniteVolume:

    @pytest.fixture
    def box(self):
        return make_grid(2, 2.0, 10)

    def test_weyl_tail_positive_and_decreasing(self, box):
        a = weyl_tail(box, 1.0, 0.0, 10.0)
        b = weyl_tail(box, 1.0, 0.0, 20.0)
        assert a > b > 0.0

    def test_pressure_all_levels(self, box):
        field = sample_potential(bump_potential(5.0, 1.0), box)
        lam = dense_spectrum(hamiltonian_single_atom(box, field)).eigenvalues
        expected = np.sum(np.log1p(np.exp(2.0 * (-1.0 - lam)))) / (2.0 * box.volume)
        p = finite_volume_pressure(box, field, 2.0, -1.0, n_levels=box.n_nodes)
        assert p == pytest.approx(expected, rel=1e-9)

    def test_pressure_tail_guard(self):
        g = make_grid(2, 3.0, 16)
        with pytest.raises(TailTooLarge):
            finite_volume_pressure(g, None, 1.0, 5.0, n_levels=4)

    def test_pressure_needs_box(self):
        with pytest.raises(ConfigError):
            finite_volume_pressure(make_grid(2, 2.0, 10, "periodic"), None, 1.0, 0.0)

    def test_susceptibility_scales_with_kappa(self, box, opts):
        field = sample_potential(bump_potential(5.0, 1.0), box)
        one = finite_volume_susceptibility(box, field, 2.0, -1.0, n_levels=box.n_nodes,
                                           params=PhysicalParams(1.0), opts=opts, workers=1)
        two = finite_volume_susceptibility(box, field, 2.0, -1.0, n_levels=box.n_nodes,
                                           params=PhysicalParams(2.0), opts=opts, workers=1)
        assert np.isfinite(one)
        assert two == pytest.approx(2.0 * one, rel=1e-9)

    def test_pressure_even_in_field(self, box, opts):
        field = sample_potential(bump_potential(5.0, 1.0, aspect=0.75), box)
        up = finite_volume_pressure(box, field, 2.0, -1.0, 0.05, box.n_nodes, opts)
        down = finite_volume_pressure(box, field, 2.0, -1.0, -0.05, box.n_nodes, opts)
        assert abs(up - down) <= 10.0 * opts.tol

    def test_pressure_fugacity_derivative_is_density(self, box, opts):
        # z dP/dz = rho / beta with rho = (1/|Lambda|) sum_j f(lambda_j)
        beta, z = 2.0, math.exp(-2.0)
        field = sample_potential(bump_potential(5.0, 1.0), box)
        lam = dense_spectrum(hamiltonian_single_atom(box, field)).eigenvalues
        rho = float(np.sum(fermi_dirac(beta, fugacity_to_mu(z, beta), lam))) / box.volume
        dz = 1e-4 * z
        p_up, p_down = (finite_volume_pressure(box, field, beta, fugacity_to_mu(z + s, beta), 0.0,
                                               box.n_nodes, opts)
                        for s in (dz, -dz))
        assert (p_up - p_down) / (2.0 * dz) == pytest.approx(rho / (beta * z), rel=1e-6)

    def test_deep_well_matches_atomic_susceptibility(self, small_grid, deep_well, params, opts):
        # one level below mu, the next at least 30/beta above it
        report = atomic_susceptibility(small_grid, deep_well, 1, params, opts, workers=1)
        field = sample_potential(deep_well, small_grid)
        lam = dense_spectrum(hamiltonian_single_atom(small_grid, field)).eigenvalues
        assert lam[1] - lam[0] > 1.5
        mu = float(0.5 * (lam[0] + lam[1]))
        chi = finite_volume_susceptibility(small_grid, field, 40.0, mu,
                                           n_levels=small_grid.n_nodes, params=params,
                                           opts=opts, workers=1)
        # |Lambda| chi = -kappa lambda_1''
        assert small_grid.volume * chi == pytest.approx(report.chi_total, rel=2e-3)


# ---------------------------------------------------------------------------
# Finite-temperature & classical formulas
# ---------------------------------------------------------------------------

class TestClassical:

    def test_pauli_langevin_ratio(self):
        ref = classical_references(n=1.0, r2_mean=3.0, N=1.0, M=0.0, beta=1.0,
                                   r2_per_electron=[3.0])
        assert ref["pauli"] / ref["langevin"] == pytest.approx(2.0 / 3.0)
        assert ref["helmholtz_route"] is None

    def test_curie(self):
        ref = classical_references(n=1.0, r2_mean=1.0, N=1.0, M=2.0, beta=0.5)
        assert ref["curie"] == pytest.approx(0.5 * 4.0 / 3.0)

    def test_negative_input_rejected(self):
        with pytest.raises(ConfigError):
            classical_references(n=-1.0, r2_mean=1.0, N=1.0, M=0.0, beta=1.0)

    def test_helmholtz_quadratic_level(self):
        # F(B) = N c B^2 for one level E(B) = c B^2
        assert helmholtz_susceptibility(lambda B: [0.5 * B * B], 3.0, N=2.0) == pytest.approx(-2.0)

    def test_helmholtz_single_level(self):
        E, E1, E2 = -1.0, 0.7, 0.3
        chi = helmholtz_susceptibility(lambda B: [E + B * E1 + B * B * E2], 2.0)
        assert chi == pytest.approx(-2.0 * E2, rel=1e-8)

    def test_helmholtz_route_in_references(self):
        ref = classical_references(n=1.0, r2_mean=1.0, N=1.0, M=0.0, beta=1.0,
                                   energy_fn=lambda B: [0.25 * B * B])
        assert ref["helmholtz_route"] == pytest.approx(-0.5)

    def test_vanvleck_finite_T_single_level(self):
        assert vanvleck_finite_T([(0.0, 0.0, 0.3)], 2.0) == pytest.approx(-0.6)

    def test_vanvleck_finite_T_curie_pair(self):
        levels = [(0.0, 1.0, 0.0), (0.0, -1.0, 0.0)]
        assert vanvleck_finite_T(levels, 4.0) == pytest.approx(4.0)

    def test_vanvleck_finite_T_high_levels_suppressed(self):
        levels = [(0.0, 0.0, 0.3), (50.0, 10.0, 0.0)]
        assert vanvleck_finite_T(levels, 2.0) == pytest.approx(-0.6, rel=1e-12)

    def test_vanvleck_finite_T_empty(self):
        with pytest.raises(ConfigError):
            vanvleck_finite_T([], 1.0)
