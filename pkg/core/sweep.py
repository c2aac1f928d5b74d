"""
Orbimag — Asymptotics Sweep
R-sweeps comparing the scaled bulk susceptibility |Omega_R| * chi_R with the
single-atom value, together with the Fermi-energy and band-localization
trends, and the exponential fit of the remainder.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from core.bands import band_edges_and_gaps
from core.eigensolve import SolveOptions
from core.jobs import map_ordered
from core.model import (
    PhysicalParams, ScalarField, box_grid, cell_grid, lattice_for,
)
from core.safety import ConfigError, NoiseFloor, OrbimagError
from core.susceptibility import BFieldProbe, atomic_susceptibility
from core.thermo import (
    atomic_fermi_energy, fermi_energy_from_lattice, finite_volume_susceptibility,
)

logger = logging.getLogger(__name__)

DEFAULT_ALPHA_GRID = tuple(float(a) for a in np.round(np.linspace(0.1, 1.5, 141), 10))
NOISE_FACTOR = 3.0
MIN_FIT_ROWS = 4


@dataclass
class SweepConfig:
    """Everything one sweep needs. Spacing is held fixed across R."""
    R_values: list
    n0: int
    potential: object
    spacing: float
    beta_schedule: list = field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0])
    probe: BFieldProbe = field(default_factory=BFieldProbe)
    opts: SolveOptions = field(default_factory=SolveOptions)
    params: PhysicalParams = field(default_factory=PhysicalParams)
    dim: int = 2
    n_k: int = 8
    n_bands: int | None = None
    box_multiple: int = 2
    n_levels: int = 256
    atomic_half_width: float | None = None
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    noise_factor: float = NOISE_FACTOR
    noise_check: bool = True

    def __post_init__(self):
        R = [float(r) for r in self.R_values]
        if not R:
            raise ConfigError("R_values is empty")
        if any(b <= a for a, b in zip(R, R[1:])):
            raise ConfigError(f"R_values must be strictly ascending. Got {R}")
        for r in R:
            lattice_for(self.potential, r)
        if self.n0 < 1:
            raise ConfigError(f"n0 must be >= 1. Got {self.n0}")
        if self.box_multiple not in (1, 2, 3):
            raise ConfigError(f"box_multiple must be 1, 2 or 3. Got {self.box_multiple}")
        self.R_values = R


@dataclass
class SweepRow:
    """One R of a sweep. remainder = chi_bulk_scaled - chi_atomic."""
    R: float
    cell_volume: float
    chi_bulk_scaled: float
    chi_atomic: float
    remainder: float
    fermi_energy: float
    fermi_remainder: float
    band_localization: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepRow":
        return cls(**d)


@dataclass
class ExponentialFit:
    """log|remainder| ~ intercept - c * R^alpha."""
    c: float
    alpha: float
    r_squared: float
    intercept: float
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SweepResult:
    rows: list
    tau: int
    chi_atomic: float
    atomic_fermi_energy: float
    noise_floor: float | None = None
    fit: ExponentialFit | None = None
    fit_error: str | None = None

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "tau": self.tau,
            "chi_atomic": self.chi_atomic,
            "atomic_fermi_energy": self.atomic_fermi_energy,
            "noise_floor": self.noise_floor,
            "fit": None if self.fit is None else self.fit.to_dict(),
            "fit_error": self.fit_error,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


# ─── Pieces ─────────────────────────────────────────────────────────

def box_field(potential, R: float, multiple: int, spacing: float, dim: int = 2) -> ScalarField:
    """multiple^d wells on the lattice R Z^d, centered in a Dirichlet box of side multiple*R.

    Centers sit at R * (i - (multiple - 1)/2) per axis, so for even
    multiples the lattice is offset by R/2 from the box center.
    """
    grid = box_grid(multiple * R / 2.0, spacing, dim)
    offsets = R * (np.arange(multiple) - (multiple - 1) / 2.0)
    values = np.zeros(grid.n_nodes)
    for center in np.array(np.meshgrid(*([offsets] * dim), indexing="ij")).reshape(dim, -1).T:
        values += potential.moved(tuple(center))(grid.coords)
    return ScalarField(grid, values)


def atomic_reference(config: SweepConfig, spacing: float | None = None, workers=None):
    """Single-atom report on a box sized for the largest R."""
    spacing = spacing or config.spacing
    hw = config.atomic_half_width or config.R_values[-1]
    grid = box_grid(hw, spacing, config.dim)
    return atomic_susceptibility(grid, config.potential, config.n0, config.params, config.opts,
                                 config.probe, curvature=False, workers=workers)


def bulk_scaled(config: SweepConfig, R: float, mu: float, spacing: float | None = None,
                workers=None) -> float:
    """|Omega_R| * chi of a finite box at the gap-pinned mu and the largest beta."""
    spacing = spacing or config.spacing
    fld = box_field(config.potential, R, config.box_multiple, spacing, config.dim)
    chi = finite_volume_susceptibility(fld.grid, fld, max(config.beta_schedule), mu, config.probe,
                                       config.n_levels, config.params, config.opts, workers)
    return R ** config.dim * chi


def sweep_point(config: SweepConfig, R: float, chi_atomic: float, atomic_levels, tau: int,
                workers=None) -> SweepRow:
    """Bands, Fermi energy and scaled susceptibility at one R."""
    try:
        lattice = lattice_for(config.potential, R)
        grid = cell_grid(lattice, config.spacing, config.dim)
        n_bands = config.n_bands or tau + 1
        bs, fe = fermi_energy_from_lattice(lattice, config.potential, config.n0, n_bands,
                                           config.n_k, grid, config.beta_schedule, config.opts,
                                           workers)
        gaps = band_edges_and_gaps(bs, atomic_levels)
        scaled = bulk_scaled(config, R, fe.estimate, workers=workers)
    except OrbimagError as exc:
        raise type(exc)(f"R={R:g}: {exc}") from exc
    e_atomic = atomic_fermi_energy(atomic_levels, config.n0, tau)
    logger.debug("R=%g: scaled chi %.8g, Fermi energy %.8g", R, scaled, fe.estimate)
    return SweepRow(
        R=R, cell_volume=lattice.cell_volume(config.dim), chi_bulk_scaled=scaled,
        chi_atomic=chi_atomic, remainder=scaled - chi_atomic, fermi_energy=fe.estimate,
        fermi_remainder=abs(fe.estimate - e_atomic), band_localization=gaps.localization,
    )


def noise_floor(config: SweepConfig, first: SweepRow, workers=None) -> float:
    """factor * |remainder(h) - remainder(2h)| at the smallest R."""
    coarse = 2.0 * config.spacing
    chi_atomic = atomic_reference(config, coarse, workers).chi_total
    scaled = bulk_scaled(config, first.R, first.fermi_energy, coarse, workers)
    return config.noise_factor * abs((scaled - chi_atomic) - first.remainder)


# ─── Fit ────────────────────────────────────────────────────────────

def fit_exponential_remainder(rows, alpha_grid=DEFAULT_ALPHA_GRID,
                              floor: float = 0.0) -> ExponentialFit:
    """Least squares of log|remainder| against intercept - c * R^alpha per alpha.

    alpha is picked on the grid by smallest squared residual.

    Raises:
        NoiseFloor: Fewer than 4 rows have |remainder| above the floor.
    """
    R = np.array([r.R for r in rows], dtype=float)
    rem = np.abs(np.array([r.remainder for r in rows], dtype=float))
    keep = rem > max(floor, 0.0)
    if int(np.sum(keep)) < MIN_FIT_ROWS:
        raise NoiseFloor(
            f"Only {int(np.sum(keep))} of {len(rows)} remainders above the noise floor "
            f"{floor:.3e}; need {MIN_FIT_ROWS}"
        )
    R, y = R[keep], np.log(rem[keep])
    best = None
    for alpha in alpha_grid:
        A = np.column_stack([np.ones_like(R), -(R ** alpha)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        sse = float(np.sum((y - A @ coef) ** 2))
        if best is None or sse < best[0]:
            best = (sse, float(alpha), coef)
    sse, alpha, (intercept, c) = best
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - sse / ss_tot if ss_tot > 0 else 1.0
    return ExponentialFit(c=float(c), alpha=alpha, r_squared=r2, intercept=float(intercept),
                          n_points=int(R.size))


# ─── Driver ─────────────────────────────────────────────────────────

def run_sweep(config: SweepConfig, workers=None) -> SweepResult:
    """Atomic reference once, then one row per R (ascending), then the fit.

    A NoiseFloor from the fit is recorded in the result, not raised.
    """
    atomic = atomic_reference(config, workers=workers)
    full = atomic.levels
    chi_atomic = atomic.chi_total
    tau = atomic.tau
    e_atomic = atomic_fermi_energy(full, config.n0, tau)

    rows = map_ordered(lambda R: sweep_point(config, R, chi_atomic, full, tau, workers),
                       config.R_values, workers)

    result = SweepResult(rows=rows, tau=tau, chi_atomic=chi_atomic, atomic_fermi_energy=e_atomic)
    floor = 0.0
    if config.noise_check:
        floor = noise_floor(config, rows[0], workers)
        result.noise_floor = floor
    try:
        result.fit = fit_exponential_remainder(rows, config.alpha_grid, floor)
    except NoiseFloor as exc:
        logger.warning("Remainder fit skipped: %s", exc)
        result.fit_error = str(exc)
    return result

