"""
Orbimag — Atomic Susceptibility
Larmor and Van Vleck terms of a single atom, the discrete/continuum split
of the Van Vleck term, finite-field eigenvalue curvature and the reduced-
resolvent second-order formula, cross-checked against one another.

Conventions: hbar = m = 1, kappa = (q/c)^2, H(b) = H + b W1 + b^2 W2 with
W1 = -L3/2 and W2 = |x_perp|^2 / 8 in the symmetric gauge about the origin.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from core.eigensolve import SolveOptions, SpectralData, deflated_solve, lowest_eigenpairs
from core.jobs import map_ordered
from core.model import Grid, PhysicalParams, box_grid, sample_potential
from core.operators import (
    HermitianOperator, ObservableSet, hamiltonian_magnetic, hamiltonian_single_atom, observables,
)
from core.safety import (
    MAX_PROBE_LEVELS, ConfigError, LevelTrackingLost, check_positive, check_probe,
)

logger = logging.getLogger(__name__)

TRACKING_OVERLAP = 0.9
IDENTITY_RTOL = 1e-3


# ─── Larmor ─────────────────────────────────────────────────────────

def _check_levels(spectral: SpectralData, n0: int) -> None:
    if n0 < 0:
        raise ConfigError(f"Occupation n0 must be >= 0. Got {n0}")
    if n0 == 0:
        return
    spectral.require_bound(n0)
    spectral.require_simple(n0)


def larmor_levels(spectral: SpectralData, n0: int, obs: ObservableSet,
                  params: PhysicalParams | None = None) -> list[float]:
    params = params or PhysicalParams()
    _check_levels(spectral, n0)
    return [-0.25 * params.kappa * obs.xperp2_expectation(spectral.vector(l))
            for l in range(1, n0 + 1)]


def larmor_term(spectral: SpectralData, n0: int, obs: ObservableSet,
                params: PhysicalParams | None = None) -> float:
    """-kappa/4 * sum over l <= n0 of <Phi_l, (X1^2 + X2^2) Phi_l>.

    Not divided by any cell volume.

    Raises:
        InsufficientBoundStates: Fewer than n0 negative levels.
        DegeneracyDetected: A level up to n0 is not simple.
    """
    return float(sum(larmor_levels(spectral, n0, obs, params)))


# ─── Van Vleck ──────────────────────────────────────────────────────

def reduced_resolvent_form(H: HermitianOperator, spectral: SpectralData, level: int,
                           obs: ObservableSet, opts: SolveOptions | None = None) -> float:
    """<L3 Phi_l, R_l L3 Phi_l> with R_l the reduced resolvent at lambda_l."""
    phi = spectral.vector(level)
    rhs = obs.L3.apply(phi)
    rhs = rhs - phi * np.vdot(phi, rhs)
    psi = deflated_solve(H, spectral.value(level), phi, rhs, opts)
    return float(np.real(np.vdot(rhs, psi)))


def vanvleck_term(spectral: SpectralData, n0: int, H: HermitianOperator, obs: ObservableSet,
                  params: PhysicalParams | None = None, opts: SolveOptions | None = None,
                  workers=None) -> tuple[float, list[float]]:
    """kappa/2 * sum over l <= n0 of <L3 Phi_l, R_l L3 Phi_l>.

    Returns:
        (total, per-level summands). Summands of excited levels include
        negative couplings to occupied levels below them; those cancel
        pairwise in the total.
    """
    params = params or PhysicalParams()
    opts = opts or SolveOptions()
    _check_levels(spectral, n0)
    forms = map_ordered(lambda l: reduced_resolvent_form(H, spectral, l, obs, opts),
                        range(1, n0 + 1), workers)
    per_level = [0.5 * params.kappa * q for q in forms]
    total = float(sum(per_level))
    if total < -10.0 * opts.tol:
        logger.warning("Van Vleck total %.3e is negative beyond solver tolerance", total)
    return total, per_level


def _l3_matrix(spectral: SpectralData, obs: ObservableSet) -> np.ndarray:
    v = spectral.eigenvectors
    return v.conj().T @ obs.L3.apply(v)


def vanvleck_sum_over_states(spectral_full: SpectralData, n0: int, obs: ObservableSet,
                             params: PhysicalParams | None = None) -> tuple[float, list[float]]:
    """kappa/2 * sum_l sum_{m != l} |<Phi_m, L3 Phi_l>|^2 / (lambda_m - lambda_l).

    Oracle form; spectral_full must hold the whole grid spectrum.
    """
    params = params or PhysicalParams()
    if not spectral_full.is_complete:
        raise ConfigError("Sum over states needs the full spectrum (use dense_spectrum)")
    _check_levels(spectral_full, n0)
    m2 = np.abs(_l3_matrix(spectral_full, obs)) ** 2
    lam = spectral_full.eigenvalues
    per_level = []
    for l in range(n0):
        gaps = np.delete(lam - lam[l], l)
        per_level.append(0.5 * params.kappa * float(np.sum(np.delete(m2[:, l], l) / gaps)))
    return float(sum(per_level)), per_level


def vanvleck_discrete_levels(spectral: SpectralData, n0: int, tau: int, obs: ObservableSet,
                             params: PhysicalParams | None = None) -> list[float]:
    """Per-level couplings to the unoccupied bound levels n0 < m <= tau."""
    params = params or PhysicalParams()
    if tau < n0:
        raise ConfigError(f"tau={tau} cannot be below n0={n0}")
    if tau > spectral.count:
        raise ConfigError(f"Need {tau} eigenpairs for the discrete split, have {spectral.count}")
    if n0 == tau:
        return [0.0] * n0
    v = spectral.eigenvectors[:, :tau]
    m = v[:, n0:].conj().T @ obs.L3.apply(v[:, :n0])
    lam = spectral.eigenvalues
    out = []
    for l in range(n0):
        gaps = lam[n0:tau] - lam[l]
        out.append(0.5 * params.kappa * float(np.sum(np.abs(m[:, l]) ** 2 / gaps)))
    return out


def vanvleck_split(spectral_full: SpectralData, n0: int, tau: int, obs: ObservableSet,
                   params: PhysicalParams | None = None,
                   total: float | None = None) -> tuple[float, float]:
    """Split the Van Vleck term into bound-state and non-bound-state parts.

    The discrete part couples occupied levels to unoccupied bound levels
    only; the continuum part is the remainder, with the grid's non-bound
    eigenvectors standing in for scattering states. `total` defaults to
    the sum-over-states value on spectral_full.

    Returns:
        (discrete, continuum); discrete is exactly 0 when n0 == tau.
    """
    _check_levels(spectral_full, n0)
    if tau > spectral_full.count_negative:
        raise ConfigError(f"tau={tau} exceeds the {spectral_full.count_negative} bound states")
    discrete = float(sum(vanvleck_discrete_levels(spectral_full, n0, tau, obs, params)))
    if total is None:
        total, _ = vanvleck_sum_over_states(spectral_full, n0, obs, params)
    return discrete, float(total) - discrete


# ─── Curvature ──────────────────────────────────────────────────────

@dataclass(frozen=True)
class BFieldProbe:
    """Finite-difference field steps b = +-h_b * 2^j for j < levels."""
    h_b: float = 1e-2
    levels: int = 2

    def __post_init__(self):
        check_positive("h_b", self.h_b)
        if not 1 <= self.levels <= MAX_PROBE_LEVELS:
            raise ConfigError(f"Richardson levels must be in [1, {MAX_PROBE_LEVELS}]. Got {self.levels}")
        check_probe(self.steps)

    @property
    def magnitudes(self) -> list[float]:
        return [self.h_b * 2 ** j for j in range(self.levels)]

    @property
    def steps(self) -> list[float]:
        mags = self.magnitudes
        return sorted([-m for m in mags] + mags)


@dataclass
class CurvatureResult:
    """d^2 lambda_l / db^2 at b=0 plus the diagnostics behind it."""
    level: int
    value: float
    evenness: float
    differences: list = field(default_factory=list)
    min_overlap: float = 1.0


def richardson(differences: list[float]) -> float:
    """Extrapolate second differences at h, 2h, 4h, ... (error ~ h^2)."""
    table = list(differences)
    for m in range(1, len(table)):
        factor = 4.0 ** m
        table = [(factor * table[i] - table[i + 1]) / (factor - 1.0) for i in range(len(table) - 1)]
    return table[0]


def _track(grid: Grid, field_values, level: int, b_path: list[float], phi0: np.ndarray,
           opts: SolveOptions, gauge_center) -> tuple[list[float], float]:
    count = min(level + 2, grid.n_nodes)
    phi, lams, worst = phi0, [], 1.0
    for b in b_path:
        spec = lowest_eigenpairs(hamiltonian_magnetic(grid, field_values, b, gauge_center), count, opts)
        overlaps = np.abs(spec.eigenvectors.conj().T @ phi)
        j = int(np.argmax(overlaps))
        if overlaps[j] < TRACKING_OVERLAP:
            raise LevelTrackingLost(
                f"Level {level} lost at b={b}: best eigenvector overlap {overlaps[j]:.3f}"
            )
        worst = min(worst, float(overlaps[j]))
        lams.append(float(spec.eigenvalues[j]))
        phi = spec.eigenvectors[:, j]
    return lams, worst


def eigenvalue_curvature(grid: Grid, potential_field, level: int,
                         probe: BFieldProbe | None = None, opts: SolveOptions | None = None,
                         spectral: SpectralData | None = None,
                         gauge_center=None) -> CurvatureResult:
    """Second derivative of lambda_l(b) at b = 0 by finite differences.

    lambda_l is followed outward from b=0 along +b and -b, matching each
    step to the eigenvector with the largest overlap on the previous one.
    Central second differences at each step size are Richardson-combined.

    Raises:
        LevelTrackingLost: Overlap fell below 0.9.
        DegeneracyDetected: lambda_l is not simple at b = 0.
    """
    probe = probe or BFieldProbe()
    opts = opts or SolveOptions()
    if spectral is None:
        spectral = lowest_eigenpairs(hamiltonian_single_atom(grid, potential_field),
                                     min(level + 2, grid.n_nodes), opts)
    spectral.require_simple(level)
    lam0 = spectral.value(level)
    phi0 = spectral.vector(level)

    mags = probe.magnitudes
    plus, ov_p = _track(grid, potential_field, level, mags, phi0, opts, gauge_center)
    minus, ov_m = _track(grid, potential_field, level, [-m for m in mags], phi0, opts, gauge_center)
    diffs = [(p - 2.0 * lam0 + q) / (h * h) for p, q, h in zip(plus, minus, mags)]
    evenness = max(abs(p - q) for p, q in zip(plus, minus))
    value = richardson(diffs)
    logger.debug("curvature level %d: %.10g (evenness %.2e)", level, value, evenness)
    return CurvatureResult(level, float(value), float(evenness), diffs, min(ov_p, ov_m))


def feshbach_second_order(spectral: SpectralData, level: int, H: HermitianOperator,
                          obs: ObservableSet, opts: SolveOptions | None = None) -> float:
    """-2 <W Phi_l, R_l W Phi_l> + <Phi_l, |a|^2 Phi_l> with W = L3/2, |a|^2 = r^2/4."""
    spectral.require_simple(level)
    form = reduced_resolvent_form(H, spectral, level, obs, opts)
    return -0.5 * form + 0.25 * obs.xperp2_expectation(spectral.vector(level))


# ─── Reports ────────────────────────────────────────────────────────

@dataclass
class LevelTerms:
    """One occupied level's contributions."""
    l: int
    lambda_l: float
    larmor_l: float
    vv_l: float
    vv_discrete_l: float
    curvature_l: float | None = None
    feshbach_l: float | None = None
    evenness_l: float | None = None


@dataclass
class SusceptibilityReport:
    """Atomic susceptibility with all terms and cross-checks."""
    n0: int
    tau: int
    chi_larmor: float
    chi_vanvleck: float
    chi_vv_discrete: float
    chi_vv_continuum: float
    chi_total: float
    chi_curvature: float | None = None
    per_level: list = field(default_factory=list)
    cell_volume: float | None = None
    kappa: float = 1.0
    levels: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def identity_defect(self) -> float | None:
        """|chi_total - chi_curvature| / |chi_total|."""
        if self.chi_curvature is None or self.chi_total == 0.0:
            return None
        return abs(self.chi_total - self.chi_curvature) / abs(self.chi_total)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["identity_defect"] = self.identity_defect
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SusceptibilityReport":
        d = {k: v for k, v in d.items() if k != "identity_defect"}
        d["per_level"] = [LevelTerms(**row) for row in d.get("per_level", [])]
        return cls(**d)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "SusceptibilityReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def bound_spectrum(H: HermitianOperator, opts: SolveOptions | None = None,
                   start: int = 8) -> SpectralData:
    """Eigenpairs up to the first level above -edge_margin (all bound states)."""
    opts = opts or SolveOptions()
    count = min(start, H.dimension)
    while True:
        spec = lowest_eigenpairs(H, count, opts)
        if spec.count_negative < spec.count or count == H.dimension:
            return spec
        count = min(2 * count, H.dimension)


def atomic_susceptibility(grid: Grid, potential, n0: int, params: PhysicalParams | None = None,
                          opts: SolveOptions | None = None, probe: BFieldProbe | None = None,
                          curvature: bool = True, workers=None,
                          spectral: SpectralData | None = None) -> SusceptibilityReport:
    """Larmor, Van Vleck (with split) and curvature cross-check for one atom.

    The occupied levels must be simple; tau counts every negative grid
    eigenvalue. A relative identity defect above 1e-3 is logged and
    recorded in notes. A precomputed `spectral` (e.g. from the cache) must
    hold every bound level of the same operator plus one above.
    """
    params = params or PhysicalParams()
    opts = opts or SolveOptions()
    field_values = sample_potential(potential, grid)
    H = hamiltonian_single_atom(grid, field_values)
    if spectral is None:
        spectral = bound_spectrum(H, opts, start=max(8, n0 + 2))
    tau = spectral.count_negative
    _check_levels(spectral, n0)
    obs = observables(grid)

    larmor_l = larmor_levels(spectral, n0, obs, params)
    vv_total, vv_l = vanvleck_term(spectral, n0, H, obs, params, opts, workers)
    disc_l = vanvleck_discrete_levels(spectral, n0, tau, obs, params)
    discrete = float(sum(disc_l))

    rows = [LevelTerms(l, spectral.value(l), larmor_l[l - 1], vv_l[l - 1], disc_l[l - 1])
            for l in range(1, n0 + 1)]
    chi_larmor = float(sum(larmor_l))
    report = SusceptibilityReport(
        n0=n0, tau=tau, chi_larmor=chi_larmor, chi_vanvleck=vv_total,
        chi_vv_discrete=discrete, chi_vv_continuum=vv_total - discrete,
        chi_total=chi_larmor + vv_total, per_level=rows, kappa=params.kappa,
        levels=[float(v) for v in spectral.eigenvalues[:tau + 1]],
    )

    if curvature and n0 > 0:
        curves = map_ordered(
            lambda l: eigenvalue_curvature(grid, field_values, l, probe, opts, spectral),
            range(1, n0 + 1), workers)
        feshbach = map_ordered(lambda l: feshbach_second_order(spectral, l, H, obs, opts),
                               range(1, n0 + 1), workers)
        for row, c, f in zip(rows, curves, feshbach):
            row.curvature_l = c.value
            row.evenness_l = c.evenness
            row.feshbach_l = f
        report.chi_curvature = -params.kappa * float(sum(c.value for c in curves))
        defect = report.identity_defect
        if defect is not None and defect > IDENTITY_RTOL:
            msg = f"curvature identity defect {defect:.2e} above {IDENTITY_RTOL:g}"
            logger.warning(msg)
            report.notes.append(msg)
    return report


def continuum_box_sensitivity(potential, spacing: float, half_widths, n0: int,
                              params: PhysicalParams | None = None,
                              opts: SolveOptions | None = None, dim: int = 2,
                              workers=None) -> list[dict]:
    """Recompute the Van Vleck split on growing boxes.

    The continuum part depends on how well the box's non-bound states
    approximate scattering states; its drift across rows measures that.
    """
    rows = []
    for hw in half_widths:
        grid = box_grid(hw, spacing, dim)
        rep = atomic_susceptibility(grid, potential, n0, params, opts, curvature=False,
                                    workers=workers)
        rows.append({
            "half_width": float(hw),
            "chi_vanvleck": rep.chi_vanvleck,
            "chi_vv_discrete": rep.chi_vv_discrete,
            "chi_vv_continuum": rep.chi_vv_continuum,
            "tau": rep.tau,
        })
        logger.debug("box half_width=%g: continuum part %.6g", hw, rep.chi_vv_continuum)
    return rows
