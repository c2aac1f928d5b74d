"""
Orbimag — Thermodynamics
Grand-canonical Fermi gas on top of the band and box spectra: occupation
factors, density, chemical-potential inversion at fixed filling, the
zero-temperature Fermi energy, finite-volume pressure and its field
curvature, plus the historical finite-temperature and classical formulas.

Public interfaces take the chemical potential mu; the fugacity
z = exp(beta * mu) only appears inside log(1 + z e^{-beta E}).
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import expit, logsumexp

from core.bands import BandStructure, band_edges_and_gaps, band_structure
from core.eigensolve import SolveOptions, lowest_eigenpairs
from core.jobs import map_ordered
from core.model import Grid, PhysicalParams
from core.operators import hamiltonian_magnetic
from core.susceptibility import BFieldProbe, richardson
from core.safety import (
    BracketFailure, ConfigError, ConvergenceFailure, NotInsulating, TailTooLarge,
    check_finite, check_positive, is_integer_like,
)

logger = logging.getLogger(__name__)

TAIL_TOL = 1e-12
DENSITY_RTOL = 1e-10
MAX_BRACKET_STEPS = 64


# ─── Queries ────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ThermoQuery:
    """Inverse temperature plus exactly one of mu / rho0."""
    beta: float
    mu: float | None = None
    rho0: float | None = None
    n0: int | None = None

    def __post_init__(self):
        check_positive("beta", self.beta)
        if (self.mu is None) == (self.rho0 is None):
            raise ConfigError("Set exactly one of mu and rho0")
        if self.rho0 is not None:
            check_positive("rho0", self.rho0)


@dataclass
class ThermoResult:
    """Outcome of a thermo run at one R."""
    beta: float
    density: float
    mu_solution: float
    fermi_energy: float | None = None
    gap_midpoint: float | None = None
    pressure: float | None = None
    susceptibility_fv: float | None = None
    mu_schedule: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ThermoResult":
        return cls(**d)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


def fugacity_to_mu(z: float, beta: float) -> float:
    check_positive("z", z)
    return math.log(z) / beta


# ─── Bulk density ───────────────────────────────────────────────────

def fermi_dirac(beta: float, mu: float, E):
    """e^{beta(mu-E)} / (1 + e^{beta(mu-E)}), overflow-free via expit."""
    check_positive("beta", beta)
    return expit(beta * (mu - np.asarray(E, dtype=float)))


def density(bs: BandStructure, beta: float, mu: float, tail_tol: float | None = TAIL_TOL) -> float:
    """rho_R(beta, mu) = (1/|Omega_R|) * k-average of sum_j f_FD(E_j(k)).

    Raises:
        TailTooLarge: The highest computed band is still occupied above
            tail_tol (pass None to skip the check).
    """
    occ = fermi_dirac(beta, mu, bs.bands)
    if tail_tol is not None:
        top = float(np.max(occ[:, -1]))
        if top > tail_tol:
            raise TailTooLarge(
                f"Band {bs.n_bands} still has occupation {top:.3e} at mu={mu:.6g}, "
                f"beta={beta:g}; compute more bands"
            )
    return float(np.sum(occ)) / (bs.n_samples * bs.cell_volume)


def _log_occupation_split(bs: BandStructure, beta: float, mu: float, m: int) -> tuple[float, float]:
    """log of (particles above band m, holes in bands 1..m), summed over k.

    sum_j f_j = m N_k - holes + particles exactly, for any split m.
    """
    x = beta * (mu - bs.bands)
    log_particles = logsumexp(-np.logaddexp(0.0, -x[:, m:])) if m < bs.n_bands else -math.inf
    log_holes = logsumexp(-np.logaddexp(0.0, x[:, :m])) if m > 0 else -math.inf
    return float(log_particles), float(log_holes)


def _split_excess(bs: BandStructure, beta: float, mu: float, m: int, rho0: float) -> float:
    log_p, log_h = _log_occupation_split(bs, beta, mu, m)
    per_cell = (math.exp(log_p) - math.exp(log_h)) / bs.n_samples
    return (m + per_cell) / bs.cell_volume - rho0


def invert_chemical_potential(bs: BandStructure, beta: float, rho0: float) -> float:
    """mu with density(mu) = rho0 to |residual| <= 1e-10 * rho0.

    Root of the strictly increasing map mu -> density, bracketed from the
    band extrema and widened in steps of ~10/beta as needed. At integer
    filling m the root solves log(particles above m) = log(holes below m),
    which keeps full relative precision deep inside a gap where the plain
    occupation sum is flat to rounding.

    Raises:
        BracketFailure: rho0 is not reachable with the computed bands.
    """
    check_positive("rho0", rho0)
    check_positive("beta", beta)
    ceiling = bs.n_bands / bs.cell_volume
    if rho0 >= ceiling:
        raise BracketFailure(
            f"rho0={rho0:.6g} is at or above the {bs.n_bands}-band ceiling {ceiling:.6g}"
        )
    filling = rho0 * bs.cell_volume
    m = min(max(int(round(filling)), 0), bs.n_bands)
    balanced = 0 < m < bs.n_bands and is_integer_like(filling, 1e-8)

    def excess(mu):
        return _split_excess(bs, beta, mu, m, rho0)

    def imbalance(mu):
        log_p, log_h = _log_occupation_split(bs, beta, mu, m)
        return log_p - log_h

    root_fn = imbalance if balanced else excess

    step = max(10.0 / beta, 1e-3)
    lo, hi = float(bs.bands.min()) - step, float(bs.bands[:, -1].min())
    for _ in range(MAX_BRACKET_STEPS):
        if root_fn(lo) < 0:
            break
        lo -= step
        step *= 2.0
    else:
        raise BracketFailure(f"Could not bracket rho0={rho0:.6g} from below")
    if root_fn(hi) < 0:
        raise BracketFailure(
            f"rho0={rho0:.6g} needs mu inside band {bs.n_bands}; compute more bands"
        )

    mu = brentq(root_fn, lo, hi, xtol=1e-15, rtol=4.0 * np.finfo(float).eps, maxiter=500)
    resid = abs(excess(mu))
    if resid > DENSITY_RTOL * rho0:
        raise ConvergenceFailure(f"Density residual {resid:.3e} at mu={mu:.12g}")
    density(bs, beta, mu)  # tail check at the solution
    return float(mu)


# ─── Fermi energy ───────────────────────────────────────────────────

@dataclass
class FermiEnergyResult:
    """Zero-temperature limit of mu(beta) at fixed filling."""
    estimate: float
    gap_midpoint: float
    deviation: float
    betas: list = field(default_factory=list)
    mus: list = field(default_factory=list)
    densities: list = field(default_factory=list)


def aitken(x0: float, x1: float, x2: float, resolution: float = 1e-12) -> float:
    """Aitken delta-squared limit of three iterates.

    Returns x2 unchanged when the steps are below `resolution` (relative to
    max(1, |x2|)) or do not shrink geometrically with one sign.
    """
    d1, d2 = x1 - x0, x2 - x1
    scale = resolution * max(abs(x2), 1.0)
    if max(abs(d1), abs(d2)) <= scale:
        return x2
    ratio = d2 / d1 if d1 != 0.0 else math.inf
    if not 0.0 < ratio < 1.0:
        return x2
    return x2 - d2 * d2 / (d2 - d1)


def fermi_energy(bs: BandStructure, rho0: float, beta_schedule,
                 workers=None) -> FermiEnergyResult:
    """Extrapolate mu(beta) along an increasing beta schedule.

    The filling n0 = rho0 * |Omega_R| must be an integer with an open gap
    above band n0; mu converges to that gap's midpoint like e^{-beta gap/2}.

    Raises:
        NotInsulating: Fractional filling, closed gap, or a non-negative
            limit.
    """
    betas = sorted(float(b) for b in beta_schedule)
    if not betas:
        raise ConfigError("beta_schedule is empty")
    filling = rho0 * bs.cell_volume
    if not is_integer_like(filling, 1e-8):
        raise NotInsulating(f"Filling {filling:.6g} per cell is not an integer; mu lands in a band")
    n0 = int(round(filling))
    gap = band_edges_and_gaps(bs).gap_above(n0)
    if gap is None:
        raise NotInsulating(f"No open gap above band {n0} (sampled edges overlap)")

    mus = map_ordered(lambda b: invert_chemical_potential(bs, b, rho0), betas, workers)
    estimate = aitken(*mus[-3:]) if len(mus) >= 3 else mus[-1]
    if not estimate < 0:
        raise NotInsulating(f"Fermi energy {estimate:.6g} is not below the continuum edge 0")
    return FermiEnergyResult(
        estimate=float(estimate), gap_midpoint=gap["midpoint"],
        deviation=abs(float(estimate) - gap["midpoint"]), betas=betas, mus=list(mus),
        densities=[density(bs, b, m) for b, m in zip(betas, mus)],
    )


def fermi_energy_from_lattice(lattice, potential, n0: int, n_bands: int, n_k: int, grid: Grid,
                              beta_schedule, opts: SolveOptions | None = None, workers=None,
                              max_bands: int | None = None):
    """Band structure plus Fermi energy, doubling n_bands until the top band is empty.

    Returns:
        (BandStructure, FermiEnergyResult)

    Raises:
        TailTooLarge: Still occupied at max_bands (default: grid size).
    """
    max_bands = min(max_bands or grid.n_nodes, grid.n_nodes)
    n_bands = min(max(n_bands, n0 + 1), max_bands)
    rho0 = n0 / lattice.cell_volume(grid.dim)
    while True:
        bs = band_structure(lattice, potential, n_bands, n_k, grid, opts, workers)
        try:
            return bs, fermi_energy(bs, rho0, beta_schedule, workers)
        except TailTooLarge:
            if n_bands >= max_bands:
                raise
            n_bands = min(2 * n_bands, max_bands)
            logger.debug("R=%g: top band occupied, retrying with %d bands", lattice.R, n_bands)


def atomic_fermi_energy(lambdas, n0: int, tau: int) -> float:
    """(lambda_n0 + lambda_{n0+1}) / 2 for n0 < tau, lambda_tau / 2 for n0 = tau."""
    lam = np.asarray(lambdas, dtype=float)
    if not 1 <= n0 <= tau:
        raise ConfigError(f"Need 1 <= n0 <= tau. Got n0={n0}, tau={tau}")
    if n0 == tau:
        return 0.5 * float(lam[tau - 1])
    return 0.5 * float(lam[n0 - 1] + lam[n0])


# ─── Finite volume ──────────────────────────────────────────────────

def weyl_tail(grid: Grid, beta: float, mu: float, e_max: float) -> float:
    """Upper estimate of the pressure from levels above e_max.

    Uses Weyl's law N(E) = |Lambda| w_d (2E)^{d/2} / (2 pi)^d and
    log(1 + x) <= x.
    """
    d = grid.dim
    ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    vol = grid.volume

    def weight(E):
        dn = vol * ball * d * (2.0 * E) ** (d / 2 - 1) / (2.0 * math.pi) ** d
        return dn * math.exp(beta * (mu - E))

    lo = max(e_max, 0.0)
    integral, _ = quad(weight, lo, math.inf, limit=200)
    return integral / (beta * vol)


def _pressure_from_levels(levels: np.ndarray, beta: float, mu: float, volume: float) -> float:
    return float(np.sum(np.logaddexp(0.0, beta * (mu - levels)))) / (beta * volume)


def finite_volume_pressure(grid: Grid, potential_field, beta: float, mu: float, b: float = 0.0,
                           n_levels: int = 64, opts: SolveOptions | None = None,
                           tail_tol: float = TAIL_TOL, gauge_center=None) -> float:
    """P = (1/(beta |Lambda|)) sum_j log(1 + e^{beta(mu - lambda_j(b))}).

    Raises:
        TailTooLarge: Levels above the computed ones could add more than
            tail_tol.
    """
    check_positive("beta", beta)
    check_finite("mu", mu)
    if grid.is_periodic:
        raise ConfigError("Finite-volume pressure needs a Dirichlet box")
    n_levels = min(n_levels, grid.n_nodes)
    H = hamiltonian_magnetic(grid, potential_field, b, gauge_center)
    levels = lowest_eigenpairs(H, n_levels, opts).eigenvalues
    if n_levels < grid.n_nodes:
        tail = weyl_tail(grid, beta, mu, float(levels[-1]))
        if tail > tail_tol:
            raise TailTooLarge(
                f"Pressure tail estimate {tail:.3e} above {tail_tol:.1e} with {n_levels} levels "
                f"(highest {levels[-1]:.6g}); raise n_levels"
            )
    return _pressure_from_levels(levels, beta, mu, grid.volume)


def finite_volume_susceptibility(grid: Grid, potential_field, beta: float, mu: float,
                                 probe=None, n_levels: int = 64,
                                 params: PhysicalParams | None = None,
                                 opts: SolveOptions | None = None, workers=None) -> float:
    """kappa * d^2 P / db^2 at b = 0, central differences Richardson-combined."""
    probe = probe or BFieldProbe()
    params = params or PhysicalParams()
    opts = opts or SolveOptions()
    mags = probe.magnitudes
    bs = [0.0] + [s * m for m in mags for s in (1.0, -1.0)]
    p = map_ordered(lambda b: finite_volume_pressure(grid, potential_field, beta, mu, b,
                                                     n_levels, opts), bs, workers)
    p0, rest = p[0], p[1:]
    diffs, odd = [], 0.0
    for i, h in enumerate(mags):
        plus, minus = rest[2 * i], rest[2 * i + 1]
        diffs.append((plus - 2.0 * p0 + minus) / (h * h))
        odd = max(odd, abs(plus - minus))
    if odd > 10.0 * opts.tol:
        logger.warning("Pressure is not even in b: |P(b) - P(-b)| = %.3e", odd)
    return params.kappa * richardson(diffs)


# ─── Finite-temperature & classical formulas ────────────────────────

def _level_triplet(level):
    if hasattr(level, "E"):
        return float(level.E), float(level.E1), float(level.E2)
    E, E1, E2 = level
    return float(E), float(E1), float(E2)


def vanvleck_finite_T(levels, beta: float) -> float:
    """Boltzmann average of beta E1_j^2 - 2 E2_j, weights e^{-beta(E_j - E_0)}."""
    check_positive("beta", beta)
    rows = np.array([_level_triplet(lv) for lv in levels], dtype=float)
    if rows.size == 0:
        raise ConfigError("vanvleck_finite_T needs at least one level")
    E, E1, E2 = rows.T
    logw = -beta * (E - E.min())
    w = np.exp(logw - logsumexp(logw))
    return float(np.sum((beta * E1 ** 2 - 2.0 * E2) * w))


def helmholtz_susceptibility(energy_fn, beta: float, N: float = 1.0, h: float = 1e-3) -> float:
    """-d^2 F / dB^2 at B = 0 with F(B) = -(1/beta) log sum_j e^{-N beta E_j(B)}.

    energy_fn maps B to the level array E_j(B).
    """
    check_positive("beta", beta)
    check_positive("h", h)

    def free_energy(B):
        return -logsumexp(-N * beta * np.asarray(energy_fn(B), dtype=float)) / beta

    f0 = free_energy(0.0)
    diffs = [(free_energy(s) - 2.0 * f0 + free_energy(-s)) / (s * s) for s in (h, 2.0 * h)]
    return -richardson(diffs)


def classical_references(n: float, r2_mean: float, N: float, M: float, beta: float,
                         r2_per_electron=(), kappa: float = 1.0, energy_fn=None,
                         h: float = 1e-3) -> dict:
    """Langevin, Pauli and Curie susceptibilities plus the Helmholtz route.

    Returns:
        {"langevin", "pauli", "curie", "helmholtz_route"} (the last is None
        without energy_fn).
    """
    for name, v in (("n", n), ("r2_mean", r2_mean), ("N", N), ("beta", beta)):
        check_finite(name, v)
        if v < 0:
            raise ConfigError(f"'{name}' must be nonnegative. Got {v}")
    r2 = np.asarray(r2_per_electron, dtype=float)
    return {
        "langevin": -n * kappa * r2_mean / 4.0,
        "pauli": -N * kappa * float(np.sum(r2)) / 6.0,
        "curie": N * beta * M * M / 3.0,
        "helmholtz_route": None if energy_fn is None else helmholtz_susceptibility(energy_fn, beta, N, h),
    }
