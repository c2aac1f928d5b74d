"""
Orbimag — Bloch Bands
Band functions E_{R,l}(k) of the periodic operator on a uniform Brillouin
grid, band edges and gaps, the integrated density of states, and the
tight-binding localization diagnostics.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from core.eigensolve import SolveOptions, lowest_eigenpairs
from core.jobs import map_ordered
from core.model import Grid, LatticeConfig
from core.operators import bloch_hamiltonian
from core.safety import ConfigError, SolverError

logger = logging.getLogger(__name__)

MIN_NK = 4
EDGE_RTOL = 1e-6


def brillouin_samples(R: float, n_k: int, dim: int) -> np.ndarray:
    """Uniform half-open zone grid (2 pi / R)(i / n_k - 1/2), i < n_k, per axis.

    Returns:
        Array (n_k**dim, dim).
    """
    if n_k < MIN_NK:
        raise ConfigError(f"Need at least {MIN_NK} k-points per axis. Got {n_k}")
    axis = (2.0 * math.pi / R) * (np.arange(n_k) / n_k - 0.5)
    return np.array(list(product(axis, repeat=dim)), dtype=float)


# ─── Band structure ─────────────────────────────────────────────────

@dataclass
class BandStructure:
    """Sorted band energies, one row per k sample."""
    R: float
    dim: int
    n_k: int
    k_samples: np.ndarray
    bands: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.bands, axis=1) < 0):
            raise ConfigError("Band energies must be sorted ascending at every k")

    @property
    def n_bands(self) -> int:
        return int(self.bands.shape[1])

    @property
    def n_samples(self) -> int:
        return int(self.bands.shape[0])

    @property
    def cell_volume(self) -> float:
        return self.R ** self.dim

    def band(self, l: int) -> np.ndarray:
        """E_{R,l} over the samples (l is 1-based)."""
        return self.bands[:, l - 1]

    def edges(self, l: int) -> tuple[float, float]:
        e = self.band(l)
        return float(e.min()), float(e.max())

    def width(self, l: int) -> float:
        lo, hi = self.edges(l)
        return hi - lo

    def _mirror_index(self) -> np.ndarray:
        step = 2.0 * math.pi / (self.R * self.n_k)
        idx = np.rint(self.k_samples / step).astype(int) + self.n_k // 2
        mirrored = (self.n_k - idx) % self.n_k
        return np.ravel_multi_index(tuple(mirrored.T), (self.n_k,) * self.dim)

    def time_reversal_defect(self) -> float:
        """max |E(k) - E(-k)| over the sample set (closed under k -> -k)."""
        return float(np.max(np.abs(self.bands - self.bands[self._mirror_index()])))

    def to_dict(self) -> dict:
        return {
            "R": self.R, "dim": self.dim, "n_k": self.n_k,
            "k_samples": self.k_samples.tolist(), "bands": self.bands.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BandStructure":
        return cls(R=float(d["R"]), dim=int(d["dim"]), n_k=int(d["n_k"]),
                   k_samples=np.asarray(d["k_samples"], dtype=float),
                   bands=np.asarray(d["bands"], dtype=float))


def band_structure(lattice: LatticeConfig, potential, n_bands: int, n_k: int, grid: Grid,
                   opts: SolveOptions | None = None, workers=None) -> BandStructure:
    """Lowest n_bands eigenvalues of h_R(k) at every Brillouin sample.

    Bands are labeled by sorted order at each k; crossings show up as
    kinks, not relabelings.

    Raises:
        SolverError: Annotated with the offending k.
    """
    opts = opts or SolveOptions()
    if n_bands < 1:
        raise ConfigError(f"n_bands must be >= 1. Got {n_bands}")
    ks = brillouin_samples(lattice.R, n_k, grid.dim)

    def solve_at(k):
        try:
            spec = lowest_eigenpairs(bloch_hamiltonian(lattice, potential, tuple(k), grid),
                                     n_bands, opts)
        except SolverError as exc:
            raise type(exc)(f"k={tuple(np.round(k, 12))}: {exc}") from exc
        logger.debug("k=%s: lowest %.10g", tuple(np.round(k, 6)), spec.eigenvalues[0])
        return spec.eigenvalues

    bands = np.array(map_ordered(solve_at, ks, workers))
    return BandStructure(R=lattice.R, dim=grid.dim, n_k=n_k, k_samples=ks, bands=bands)


def refine_band_edges(lattice: LatticeConfig, potential, n_bands: int, grid: Grid,
                      n_k: int = MIN_NK, max_n_k: int = 64, opts: SolveOptions | None = None,
                      workers=None) -> tuple[BandStructure, list[dict]]:
    """Double n_k until no edge moves more than 1e-6 * |E_1 min|.

    Sampled extrema only bracket the true ones from inside; the history
    records how far they moved per doubling.

    Returns:
        (finest BandStructure, [{"n_k", "movement", "converged"}, ...])
    """
    bs = band_structure(lattice, potential, n_bands, n_k, grid, opts, workers)
    history = []
    while 2 * n_k <= max_n_k:
        n_k *= 2
        finer = band_structure(lattice, potential, n_bands, n_k, grid, opts, workers)
        moved = max(max(abs(a - b) for a, b in zip(bs.edges(l), finer.edges(l)))
                    for l in range(1, n_bands + 1))
        tol = EDGE_RTOL * max(abs(finer.edges(1)[0]), 1e-12)
        history.append({"n_k": n_k, "movement": moved, "converged": moved < tol})
        bs = finer
        if moved < tol:
            break
    if not history or not history[-1]["converged"]:
        logger.warning("Band edges still moving at n_k=%d", n_k)
    return bs, history


# ─── Gaps & localization ────────────────────────────────────────────

@dataclass
class GapReport:
    """Sampled band edges, open gaps and per-band localization deviations.

    Edges come from samples, so each band interval is a lower bound on the
    true one.
    """
    band_edges: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    localization: list = field(default_factory=list)
    atomic_levels: list = field(default_factory=list)

    def gap_above(self, l: int) -> dict | None:
        for g in self.gaps:
            if g["below"] == l:
                return g
        return None

    def isolated(self, upto: int) -> bool:
        """Bands 1..upto+1 pairwise disjoint."""
        top = min(upto + 1, len(self.band_edges))
        return all(self.band_edges[i][1] < self.band_edges[i + 1][0] for i in range(top - 1))

    def contains_atomic(self, l: int) -> bool:
        lo, hi = self.band_edges[l - 1]
        return lo < self.atomic_levels[l - 1] < hi

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GapReport":
        return cls(band_edges=[tuple(e) for e in d["band_edges"]], gaps=list(d["gaps"]),
                   localization=list(d["localization"]),
                   atomic_levels=list(d.get("atomic_levels", [])))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


def band_edges_and_gaps(bs: BandStructure, atomic_levels=None) -> GapReport:
    """Edges, open gaps and max_k | sqrt|E_l(k)| - sqrt|lambda_l| | per bound band.

    atomic_levels are the single-atom eigenvalues (SpectralData.eigenvalues
    or a plain sequence); only the negative ones get a localization entry.
    """
    edges = [bs.edges(l) for l in range(1, bs.n_bands + 1)]
    gaps = []
    for l in range(1, bs.n_bands):
        lower, upper = edges[l - 1][1], edges[l][0]
        if upper > lower:
            gaps.append({"below": l, "lower": lower, "upper": upper, "width": upper - lower,
                         "midpoint": 0.5 * (lower + upper)})

    lam = [] if atomic_levels is None else [float(v) for v in np.asarray(atomic_levels).ravel()]
    bound = [v for v in lam if v < 0.0]
    loc = []
    for l, lam_l in enumerate(bound[:bs.n_bands], start=1):
        dev = np.max(np.abs(np.sqrt(np.abs(bs.band(l))) - math.sqrt(abs(lam_l))))
        loc.append(float(dev))
    return GapReport(band_edges=edges, gaps=gaps, localization=loc, atomic_levels=lam)


def ids_from_bands(bs: BandStructure, E: float) -> float:
    """Integrated density of states N_R(E) per unit volume.

    Uniform k quadrature: each (band, k) sample at or below E counts
    1 / n_samples of a state per cell.
    """
    count = int(np.sum(bs.bands <= E))
    return count / (bs.n_samples * bs.cell_volume)


# ─── Localization rate ──────────────────────────────────────────────

@dataclass
class LocalizationFit:
    """Slope of log(deviation) against R and the decay rate it should match."""
    slope: float
    intercept: float
    r_squared: float
    rate_theory: float

    @property
    def rate(self) -> float:
        return -self.slope

    @property
    def relative_error(self) -> float:
        return abs(self.rate - self.rate_theory) / self.rate_theory


def decay_rate(lambda_l: float) -> float:
    """sqrt(2 |lambda|): the bound-state decay rate for a kinetic term -Laplacian/2."""
    return math.sqrt(2.0 * abs(lambda_l))


def fit_localization_rate(R_values, deviations, lambda_l: float,
                          divide_r: bool = False) -> LocalizationFit:
    """Least-squares line through (R, log deviation).

    With divide_r the 1/R prefactor is removed first (fits log(R * dev)).

    Raises:
        ConfigError: Fewer than 3 points or a non-positive deviation.
    """
    R = np.asarray(R_values, dtype=float)
    dev = np.asarray(deviations, dtype=float)
    if R.size < 3 or R.size != dev.size:
        raise ConfigError(f"Need >= 3 matching (R, deviation) pairs. Got {R.size} and {dev.size}")
    if np.any(dev <= 0):
        raise ConfigError("Deviations must be positive to take logs")
    y = np.log(dev * R) if divide_r else np.log(dev)
    slope, intercept = np.polyfit(R, y, 1)
    resid = y - (slope * R + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return LocalizationFit(float(slope), float(intercept), r2, decay_rate(lambda_l))
