"""
Orbimag -- Contour Formula Tests
Riesz traces and the resolvent-kernel susceptibility against spectral sums.

Run with: pytest tests/test_contour.py -v
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.contour import (
    contour_kernel_susceptibility, kernel_check, riesz_trace, riesz_weight,
)
from core.eigensolve import ContourSpec, SolveOptions, default_contour, dense_spectrum, rectangle_contour
from core.model import PhysicalParams, bump_potential, make_grid, sample_potential
from core.operators import hamiltonian_single_atom
from core.safety import ConfigError, ContourError
from core.susceptibility import larmor_term, vanvleck_sum_over_states


# ---------------------------------------------------------------------------
# Riesz traces
# ---------------------------------------------------------------------------

class TestRieszTrace:

    def test_weight(self):
        assert riesz_weight(1.0, 0)(3.0) == 1.0
        assert riesz_weight(0.0, 1)(3.0) == -3.0
        with pytest.raises(ConfigError):
            riesz_weight(0.0, 2)

    def test_counts_enclosed(self, atom, opts):
        grid, H, full, _ = atom
        c = default_contour(full, 2, nodes=256)
        assert riesz_trace(H, c, w=0, theta=1.0, opts=opts).real == pytest.approx(2.0, abs=1e-8)

    def test_sum_of_enclosed(self, atom, opts):
        grid, H, full, _ = atom
        c = default_contour(full, 2, nodes=256)
        value = riesz_trace(H, c, w=1, theta=0.0, opts=opts)
        assert value.real == pytest.approx(-(full.value(1) + full.value(2)), rel=1e-9)
        assert abs(value.imag) < 1e-9

    def test_rectangle_agrees(self, atom, opts):
        grid, H, full, _ = atom
        c = rectangle_contour(full, 1, nodes=128)
        assert riesz_trace(H, c, w=1, opts=opts).real == pytest.approx(-full.value(1), rel=1e-7)

    def test_stochastic_counts(self, opts):
        g = make_grid(2, 3.0, 12)
        H = hamiltonian_single_atom(g, sample_potential(bump_potential(10.0, 2.0, 0.75), g))
        full = dense_spectrum(H, opts)
        c = default_contour(full, 1, nodes=16)
        est = riesz_trace(H, c, w=0, theta=1.0, opts=opts, spectral=full,
                          method="stochastic", probes=256, workers=1)
        # Hutchinson estimate of a rank-one projector trace
        assert abs(est.real - 1.0) < 0.5

    def test_stochastic_needs_spectral(self, atom, opts):
        grid, H, full, _ = atom
        with pytest.raises(ConfigError):
            riesz_trace(H, default_contour(full, 1), method="stochastic", opts=opts)

    def test_unknown_method(self, atom, opts):
        grid, H, full, _ = atom
        with pytest.raises(ConfigError):
            riesz_trace(H, default_contour(full, 1), method="magic", opts=opts)

    def test_contour_through_spectrum(self, atom, opts):
        grid, H, full, _ = atom
        lam = full.eigenvalues
        c = ContourSpec("circle", complex(lam[0]), float(lam[1] - lam[0]))
        with pytest.raises(ContourError):
            riesz_trace(H, c, opts=opts)


# ---------------------------------------------------------------------------
# Kernel susceptibility
# ---------------------------------------------------------------------------

class TestKernelSusceptibility:

    @pytest.fixture
    def small_atom(self, opts):
        g = make_grid(2, 3.0, 14)
        H = hamiltonian_single_atom(g, sample_potential(bump_potential(10.0, 2.0, 0.75), g))
        return g, H, dense_spectrum(H, opts)

    def _spectral_chi(self, g, full, n0, params):
        from core.operators import observables
        obs = observables(g)
        return larmor_term(full, n0, obs, params) + vanvleck_sum_over_states(full, n0, obs, params)[0]

    @pytest.mark.parametrize("n0", [1, 2])
    def test_direct_kernel_matches_spectral(self, small_atom, opts, params, n0):
        g, H, full = small_atom
        c = default_contour(full, n0, nodes=256)
        chi = contour_kernel_susceptibility(H, c, params, kernel="direct", opts=opts, workers=1)
        assert chi == pytest.approx(self._spectral_chi(g, full, n0, params), rel=1e-7)

    def test_direct_null_weight(self, small_atom, opts, params):
        g, H, full = small_atom
        c = default_contour(full, 1, nodes=96)
        chi = contour_kernel_susceptibility(H, c, params, "direct", opts=opts)
        null = contour_kernel_susceptibility(H, c, params, "direct", weight="one", opts=opts)
        assert abs(null) < 1e-8 * max(1.0, abs(chi))

    def test_kappa_scales(self, small_atom, opts):
        g, H, full = small_atom
        c = default_contour(full, 1)
        one = contour_kernel_susceptibility(H, c, PhysicalParams(1.0), "direct", opts=opts)
        three = contour_kernel_susceptibility(H, c, PhysicalParams(3.0), "direct", opts=opts)
        assert three == pytest.approx(3.0 * one, rel=1e-12)

    def test_gauge_kernel_finite(self, small_atom, opts, params):
        g, H, full = small_atom
        chi = contour_kernel_susceptibility(H, default_contour(full, 1), params, "gauge", opts=opts)
        assert np.isfinite(chi)

    @pytest.mark.slow
    def test_gauge_kernel_converges_to_direct(self, opts, params):
        u = bump_potential(10.0, 2.0, 0.75)
        gaps = []
        for points in (16, 28):
            g = make_grid(2, 3.5, points)
            H = hamiltonian_single_atom(g, sample_potential(u, g))
            c = default_contour(dense_spectrum(H, opts), 1)
            gauge = contour_kernel_susceptibility(H, c, params, "gauge", opts=opts)
            direct = contour_kernel_susceptibility(H, c, params, "direct", opts=opts)
            gaps.append(abs(gauge - direct))
        assert gaps[1] < gaps[0]

    @pytest.mark.slow
    def test_gauge_null_and_error_shrink_with_grid(self, opts, params):
        u = bump_potential(10.0, 2.0, 0.75)
        runs = [kernel_check(make_grid(2, 4.0, points), u, 1, nodes=32, kernels=("gauge",),
                             params=params, opts=opts)["kernels"]["gauge"]
                for points in (32, 48)]
        coarse, fine = runs
        # spacing ratio 1.5, so an h^2 artifact drops by 2.25
        assert abs(fine["null"]) <= 0.5 * abs(coarse["null"]) or abs(fine["null"]) < 1e-9
        assert abs(fine["error"]) < abs(coarse["error"])

    def test_rejects_unknown_kernel(self, small_atom, opts):
        g, H, full = small_atom
        with pytest.raises(ConfigError):
            contour_kernel_susceptibility(H, default_contour(full, 1), kernel="peierls", opts=opts)

    def test_rejects_unknown_weight(self, small_atom, opts):
        g, H, full = small_atom
        with pytest.raises(ConfigError):
            contour_kernel_susceptibility(H, default_contour(full, 1), weight="xi2", opts=opts)


class TestKernelCheck:

    def test_summary(self, opts, params):
        g = make_grid(2, 3.0, 14)
        summary = kernel_check(g, bump_potential(10.0, 2.0, 0.75), 1, nodes=96,
                               kernels=("direct",), params=params, opts=opts, workers=1)
        assert summary["rank_defect"] < 1e-8
        assert summary["trace_sum_error"] < 1e-8
        assert abs(summary["kernels"]["direct"]["error"]) < 1e-7 * abs(summary["chi_spectral"])

    def test_rectangle_shape(self, opts, params):
        g = make_grid(2, 3.0, 12)
        summary = kernel_check(g, bump_potential(10.0, 2.0, 0.75), 1, shape="rectangle",
                               nodes=128, kernels=(), params=params, opts=opts)
        assert summary["contour"]["shape"] == "rectangle"
        assert summary["rank"] == pytest.approx(1.0, abs=1e-6)
