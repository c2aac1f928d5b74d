"""
Orbimag — Physical Model
Grids, physical parameters, single-site potentials, periodic potential
assembly and the symmetric-gauge vector potential.

Units: hbar = m = 1. The field enters as the cyclotron parameter b = (q/c)B
and the susceptibility prefactor (q/c)^2 is carried as PhysicalParams.kappa.

Node layout: cell-centered, origin at the domain center, C-order ravel with
axis 0 slowest. Node i on an axis sits at -half_width + (i + 1/2) * spacing.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from itertools import product

import numpy as np

from core.safety import ConfigError, check_finite, check_positive, preflight_grid

logger = logging.getLogger(__name__)


class Boundary(str, Enum):
    """Boundary condition of a grid."""
    DIRICHLET = "dirichlet"  # Box, wavefunction vanishes on the faces
    PERIODIC = "periodic"    # Torus, one Wigner-Seitz cell with a Bloch phase


# ─── Parameters ─────────────────────────────────────────────────────

@dataclass(frozen=True)
class PhysicalParams:
    """Dimensionless prefactor kappa = (q/c)^2. Mass and hbar are fixed at 1."""
    kappa: float = 1.0

    MASS = 1.0
    HBAR = 1.0

    def __post_init__(self):
        check_positive("kappa", self.kappa)


# ─── Grid ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Grid:
    """Finite-difference discretization descriptor.

    For periodic grids the cell is [-half_width, half_width)^dim, i.e. the
    lattice constant is 2 * half_width, and k is the Bloch wavevector.
    """
    dim: int
    half_width: float
    points: int
    bc: Boundary = Boundary.DIRICHLET
    k: tuple[float, ...] = ()

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def n_nodes(self) -> int:
        return self.points ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def volume(self) -> float:
        """|Lambda| of the box (or |Omega| of the cell when periodic)."""
        return (2.0 * self.half_width) ** self.dim

    @property
    def is_periodic(self) -> bool:
        return self.bc == Boundary.PERIODIC

    @cached_property
    def axis(self) -> np.ndarray:
        h = self.spacing
        ax = -self.half_width + (np.arange(self.points) + 0.5) * h
        ax.flags.writeable = False
        return ax

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape (n_nodes, dim)."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts.flags.writeable = False
        return pts

    def coordinate(self, axis: int) -> np.ndarray:
        """Coordinate x_{axis+1} at every node."""
        return self.coords[:, axis]

    def with_k(self, k) -> "Grid":
        return replace(self, k=tuple(float(v) for v in k))


def make_grid(dim: int, half_width: float, points: int,
              bc: Boundary | str = Boundary.DIRICHLET, k=None) -> Grid:
    """Build a grid.

    Args:
        dim: 2 or 3.
        half_width: Half the side length per axis.
        points: Nodes per axis (>= 8).
        bc: "dirichlet" or "periodic".
        k: Bloch wavevector for periodic grids (defaults to 0). Must lie in
           the half-open first Brillouin zone of the cell.

    Raises:
        ConfigError: On invalid sizes or an out-of-zone k.
    """
    check_positive("half_width", half_width)
    preflight_grid(dim, points)
    try:
        bc = Boundary(bc)
    except ValueError:
        raise ConfigError(f"Unknown boundary condition: {bc!r}")

    if k is None:
        k = (0.0,) * dim if bc == Boundary.PERIODIC else ()
    k = tuple(float(v) for v in k)
    if k:
        if bc != Boundary.PERIODIC:
            raise ConfigError("Bloch phase k only applies to periodic grids")
        if len(k) != dim:
            raise ConfigError(f"k must have {dim} components. Got {len(k)}")
        check_finite("k", k)
        zone = math.pi / half_width  # 2*pi/R with R = 2*half_width
        if any(not (-zone / 2 <= v < zone / 2) for v in k):
            raise ConfigError(
                f"k={k} outside the first Brillouin zone [-{zone / 2:.6g}, {zone / 2:.6g})"
            )
    return Grid(dim=dim, half_width=float(half_width), points=int(points), bc=bc, k=k)


def box_grid(half_width: float, spacing: float, dim: int = 2) -> Grid:
    """Dirichlet box with an even node count at (about) the given spacing."""
    points = 2 * max(1, round(half_width / spacing))
    return make_grid(dim, half_width, points, Boundary.DIRICHLET)


def cell_grid(lattice: "LatticeConfig", spacing: float, dim: int = 2, k=None) -> Grid:
    """Periodic Wigner-Seitz cell grid; points per axis scale with R.

    Even node counts keep the well center on the same sub-node offset as
    box_grid, so cell and box discretizations of one well coincide.
    """
    points = 2 * max(1, round(lattice.R / (2.0 * spacing)))
    if abs(points * spacing - lattice.R) > 1e-9 * lattice.R:
        logger.warning("R=%g is not an even multiple of spacing %g; using %d points",
                       lattice.R, spacing, points)
    return make_grid(dim, lattice.R / 2.0, points, Boundary.PERIODIC, k=k)


# ─── Potentials ─────────────────────────────────────────────────────

class PotentialKind(str, Enum):
    BUMP = "bump"
    TRUNCATED_WELL = "truncated_well"
    HARMONIC = "harmonic"


def _center_of(center, dim: int) -> np.ndarray:
    c = np.zeros(dim)
    if center is not None:
        src = np.asarray(center, dtype=float)[:dim]
        c[: src.size] = src
    return c


@dataclass(frozen=True)
class SingleSitePotential:
    """Compactly supported attractive well.

    The x2 semi-axis is radius * aspect; aspect != 1 breaks the rotational
    symmetry that would otherwise pair m = +1/-1 states into degenerate
    levels.
    """
    kind: PotentialKind
    depth: float
    radius: float
    center: tuple[float, ...] = (0.0, 0.0, 0.0)
    aspect: float = 1.0

    compact = True

    @property
    def extent(self) -> float:
        """Largest distance from the center at which u can be nonzero."""
        return self.radius * max(1.0, self.aspect)

    def scaled_distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        d = pts - _center_of(self.center, pts.shape[1])
        d[:, 1] = d[:, 1] / self.aspect
        return np.sqrt(np.sum(d * d, axis=1)) / self.radius

    def __call__(self, points: np.ndarray) -> np.ndarray:
        s = self.scaled_distance(points)
        out = np.zeros_like(s)
        inside = s < 1.0
        s2 = s[inside] ** 2
        if self.kind == PotentialKind.BUMP:
            out[inside] = -self.depth * np.exp(1.0 - 1.0 / (1.0 - s2))
        else:
            out[inside] = -self.depth * (1.0 - s2) ** 2
        return out

    def moved(self, center) -> "SingleSitePotential":
        return replace(self, center=tuple(float(v) for v in center))


@dataclass(frozen=True)
class HarmonicTrap:
    """u(x) = omega^2 |x|^2 / 2. Oracle only: neither compact nor attractive."""
    omega: float
    center: tuple[float, ...] = (0.0, 0.0, 0.0)

    kind = PotentialKind.HARMONIC
    compact = False
    extent = math.inf

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        d = pts - _center_of(self.center, pts.shape[1])
        return 0.5 * self.omega ** 2 * np.sum(d * d, axis=1)

    def moved(self, center) -> "HarmonicTrap":
        return replace(self, center=tuple(float(v) for v in center))


def _well_args(depth, radius, aspect, center):
    check_positive("depth", depth)
    check_positive("radius", radius)
    check_positive("aspect", aspect)
    center = tuple(float(v) for v in (center if center is not None else (0.0, 0.0, 0.0)))
    check_finite("center", center)
    return float(depth), float(radius), float(aspect), center


def bump_potential(depth: float, radius: float, aspect: float = 1.0,
                   center=None) -> SingleSitePotential:
    """Smooth bump well: -depth * exp(1 - 1/(1 - s^2)) for s < 1, else 0.

    s is the (aspect-scaled) distance from the center in units of radius.
    C-infinity with compact support.

    Raises:
        ConfigError: On non-positive depth, radius or aspect.
    """
    depth, radius, aspect, center = _well_args(depth, radius, aspect, center)
    return SingleSitePotential(PotentialKind.BUMP, depth, radius, center, aspect)


def truncated_well_potential(depth: float, radius: float, aspect: float = 1.0,
                             center=None) -> SingleSitePotential:
    """C1 polynomial well: -depth * (1 - s^2)^2 for s < 1, else 0."""
    depth, radius, aspect, center = _well_args(depth, radius, aspect, center)
    return SingleSitePotential(PotentialKind.TRUNCATED_WELL, depth, radius, center, aspect)


def harmonic_potential(omega: float, center=None) -> HarmonicTrap:
    check_positive("omega", omega)
    center = tuple(float(v) for v in (center if center is not None else (0.0, 0.0, 0.0)))
    return HarmonicTrap(float(omega), center)


POTENTIALS = {
    "bump": {
        "fn": bump_potential,
        "params": {"depth": 5.0, "radius": 2.0, "aspect": 0.75},
        "description": "Smooth compactly supported well (default)",
    },
    "truncated_well": {
        "fn": truncated_well_potential,
        "params": {"depth": 5.0, "radius": 2.0, "aspect": 0.75},
        "description": "C1 polynomial well -depth*(1-s^2)^2",
    },
    "harmonic": {
        "fn": harmonic_potential,
        "params": {"omega": 1.0},
        "description": "Harmonic trap, Fock-Darwin oracle (not compact, not for lattices)",
    },
}


def make_potential(kind: str, **params):
    """Build a potential from the registry, filling in defaults.

    Raises:
        ConfigError: On an unknown kind or unexpected parameters.
    """
    if kind not in POTENTIALS:
        raise ConfigError(
            f"Unknown potential kind: {kind!r}. Available: {', '.join(sorted(POTENTIALS))}"
        )
    entry = POTENTIALS[kind]
    allowed = set(entry["params"]) | {"center"}
    extra = set(params) - allowed
    if extra:
        raise ConfigError(f"Unexpected parameters for {kind}: {', '.join(sorted(extra))}")
    merged = {**entry["params"], **params}
    return entry["fn"](**merged)


def list_potentials() -> list[dict]:
    return [
        {"name": name, "params": entry["params"], "description": entry["description"]}
        for name, entry in POTENTIALS.items()
    ]


# ─── Lattice & fields ───────────────────────────────────────────────

@dataclass(frozen=True)
class LatticeConfig:
    """Square/cubic lattice R*Z^d.

    copies is the number of images summed per side of each axis (0 = the
    site alone). site_extent is the support radius of the single-site
    potential; the tight-binding regime requires R > 2 * site_extent.
    """
    R: float
    copies: int = 1
    site_extent: float = 0.0

    def __post_init__(self):
        check_positive("R", self.R)
        if self.copies < 0:
            raise ConfigError(f"copies must be >= 0. Got {self.copies}")
        if not self.R > 2.0 * self.site_extent:
            raise ConfigError(
                f"Lattice constant R={self.R} must exceed twice the well extent "
                f"({2.0 * self.site_extent}) so neighboring supports are disjoint"
            )

    def cell_volume(self, dim: int) -> float:
        return self.R ** dim

    def images(self, dim: int) -> np.ndarray:
        rng = range(-self.copies, self.copies + 1)
        return self.R * np.array(list(product(rng, repeat=dim)), dtype=float)


def lattice_for(potential, R: float, copies: int = 1) -> LatticeConfig:
    """LatticeConfig checked against the potential's support."""
    if not potential.compact:
        raise ConfigError(f"{potential.kind.value} potential is not compactly supported")
    return LatticeConfig(R=float(R), copies=int(copies), site_extent=potential.extent)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One real value per grid node."""
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != (self.grid.n_nodes,):
            raise ConfigError(
                f"Field has shape {self.values.shape}, grid has {self.grid.n_nodes} nodes"
            )
        self.values.flags.writeable = False


def sample_potential(u, grid: Grid) -> ScalarField:
    """Sample a single potential on the grid (no images)."""
    return ScalarField(grid, np.asarray(u(grid.coords), dtype=float).copy())


def sample_periodic_potential(u, lattice: LatticeConfig, grid: Grid) -> ScalarField:
    """V_R(x) = sum over included images of u(x - R*v).

    Exact on the window because u has compact support and the images left
    out are farther than u's extent from every node.

    Raises:
        ConfigError: Non-compact u, overlapping supports, or a periodic grid
            whose cell does not match R.
    """
    if not u.compact:
        raise ConfigError(f"{u.kind.value} potential cannot be periodized")
    if not lattice.R > 2.0 * u.extent:
        raise ConfigError(
            f"Lattice constant R={lattice.R} must exceed twice the well extent ({2.0 * u.extent})"
        )
    if grid.is_periodic and abs(2.0 * grid.half_width - lattice.R) > 1e-9 * lattice.R:
        raise ConfigError(
            f"Periodic grid cell {2.0 * grid.half_width} does not match R={lattice.R}"
        )
    pts = grid.coords
    values = np.zeros(grid.n_nodes)
    for shift in lattice.images(grid.dim):
        values += u(pts - shift)
    return ScalarField(grid, values)


def vector_potential_field(grid: Grid, center=None) -> np.ndarray:
    """Symmetric gauge a(x) = (-(x2 - c2), x1 - c1, 0) / 2 at every node.

    Returns:
        Array (n_nodes, dim).
    """
    c = _center_of(center, grid.dim)
    pts = grid.coords
    a = np.zeros((grid.n_nodes, grid.dim))
    a[:, 0] = -0.5 * (pts[:, 1] - c[1])
    a[:, 1] = 0.5 * (pts[:, 0] - c[0])
    return a
