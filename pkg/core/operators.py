"""
Orbimag — Discrete Operators
Finite-difference Hermitian operators: single-atom H, magnetic H(b), the
Bloch fiber h(k) and the observables L3 and X1^2 + X2^2.

Stencils are second order and centered. Dirichlet faces sit half a spacing
beyond the outermost nodes (odd reflection), which keeps the Laplacian
symmetric and second-order accurate on cell-centered grids. First
differences use a zero ghost so they stay exactly skew-symmetric.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from core.model import Grid, ScalarField, sample_periodic_potential, vector_potential_field
from core.safety import ConfigError, check_dense

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12


# ─── Operator container ─────────────────────────────────────────────

class HermitianOperator:
    """Hermitian linear operator backed by a sparse stencil (or small dense) matrix.

    Application is read-only, so one instance can be applied from many
    threads at once.
    """

    def __init__(self, matrix, name: str = "H", grid: Grid | None = None,
                 potential: np.ndarray | None = None, meta: dict | None = None):
        if sp.issparse(matrix):
            matrix = matrix.tocsr()
        else:
            matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ConfigError(f"Operator must be square. Got shape {matrix.shape}")
        self.matrix = matrix
        self.name = name
        self.grid = grid
        self.potential = potential
        self.meta = dict(meta or {})

    @classmethod
    def from_dense(cls, array, name: str = "H") -> "HermitianOperator":
        return cls(np.asarray(array), name=name)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def dtype(self):
        return self.matrix.dtype

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.matrix)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    __matmul__ = apply

    def as_linear_operator(self) -> spla.LinearOperator:
        return spla.aslinearoperator(self.matrix)

    def to_dense(self) -> np.ndarray:
        """Dense materialization (dimension <= DENSE_LIMIT)."""
        check_dense(self.dimension, self.name)
        return self.matrix.toarray() if self.is_sparse else np.array(self.matrix)

    def lower_bound(self) -> float:
        """Gershgorin lower bound on the spectrum."""
        m = self.matrix
        if self.is_sparse:
            diag = m.diagonal().real
            off = np.asarray(abs(m).sum(axis=1)).ravel() - np.abs(m.diagonal())
        else:
            diag = np.diag(m).real
            off = np.abs(m).sum(axis=1) - np.abs(np.diag(m))
        return float(np.min(diag - off))

    def hermiticity_defect(self, n_pairs: int = 32, seed: int = 0) -> float:
        """max |<v,Hw> - conj(<w,Hv>)| / (|v||w|) over random pairs."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_pairs):
            v = rng.standard_normal(self.dimension) + 1j * rng.standard_normal(self.dimension)
            w = rng.standard_normal(self.dimension) + 1j * rng.standard_normal(self.dimension)
            lhs = np.vdot(v, self.apply(w))
            rhs = np.conj(np.vdot(w, self.apply(v)))
            scale = np.linalg.norm(v) * np.linalg.norm(w)
            worst = max(worst, abs(lhs - rhs) / scale)
        return worst

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"HermitianOperator({self.name}, n={self.dimension}, {kind}, {self.dtype})"


# ─── 1D stencils ────────────────────────────────────────────────────

def _second_difference(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    if not periodic:
        # Odd reflection about the face: ghost = -u_edge
        main[0] = main[-1] = -3.0
        return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h ** 2
    mat = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    mat[0, n - 1] = 1.0
    mat[n - 1, 0] = 1.0
    return mat.tocsr() / h ** 2


def _first_difference(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    off = np.ones(n - 1)
    mat = sp.diags([-off, off], [-1, 1], format="lil")
    if periodic:
        mat[0, n - 1] = -1.0
        mat[n - 1, 0] = 1.0
    return mat.tocsr() / (2.0 * h)


def _along_axis(op_1d: sp.spmatrix, axis: int, grid: Grid) -> sp.csr_matrix:
    """Embed a 1D operator acting on `axis` into the full tensor grid."""
    mats = [sp.identity(grid.points, format="csr")] * grid.dim
    mats[axis] = op_1d
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def laplacian(grid: Grid) -> sp.csr_matrix:
    """Second-order (5-point in 2D, 7-point in 3D) Laplacian."""
    d2 = _second_difference(grid.points, grid.spacing, grid.is_periodic)
    return sum(_along_axis(d2, ax, grid) for ax in range(grid.dim)).tocsr()


def gradient(grid: Grid) -> list[sp.csr_matrix]:
    """Centered first differences D_k, one real skew-symmetric matrix per axis."""
    d1 = _first_difference(grid.points, grid.spacing, grid.is_periodic)
    return [_along_axis(d1, ax, grid) for ax in range(grid.dim)]


# ─── Hamiltonians ───────────────────────────────────────────────────

def _field_values(grid: Grid, potential_field: ScalarField | None) -> np.ndarray:
    if potential_field is None:
        return np.zeros(grid.n_nodes)
    if potential_field.grid != grid:
        raise ConfigError("Potential field was sampled on a different grid")
    return np.asarray(potential_field.values)


def hamiltonian_single_atom(grid: Grid, potential_field: ScalarField | None) -> HermitianOperator:
    """H = -Laplacian/2 + V on a Dirichlet box. Real symmetric.

    Raises:
        ConfigError: Periodic grid or mismatched field.
    """
    if grid.is_periodic:
        raise ConfigError("Single-atom operator needs a Dirichlet grid")
    v = _field_values(grid, potential_field)
    mat = (-0.5 * laplacian(grid) + sp.diags(v)).tocsr()
    return HermitianOperator(mat, name="H_P", grid=grid, potential=v, meta={"b": 0.0})


def zeeman_terms(grid: Grid, gauge_center=None) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Field pieces of H(b) = H + b*W1 + b^2*W2.

    W1 = i a.D (Hermitian, equals -L3/2 for a gauge centered at the origin)
    and W2 = |a|^2 / 2 (diagonal).
    """
    a = vector_potential_field(grid, gauge_center)
    grads = gradient(grid)
    w1 = 1j * (sp.diags(a[:, 0]) @ grads[0] + sp.diags(a[:, 1]) @ grads[1])
    w2 = sp.diags(0.5 * np.sum(a * a, axis=1))
    return w1.tocsr(), w2.tocsr()


def hamiltonian_magnetic(grid: Grid, potential_field: ScalarField | None, b: float,
                         gauge_center=None) -> HermitianOperator:
    """H(b) = (-i grad - b a)^2 / 2 + V expanded as

        -Laplacian/2 + i b a.D + (b^2/2)|a|^2 + V.

    a is divergence-free and a_k does not depend on x_k, so diag(a_k) and
    D_k commute and the cross term is exactly Hermitian. Complex Hermitian
    for b != 0; b = 0 gives the single-atom matrix.
    """
    base = hamiltonian_single_atom(grid, potential_field)
    if b == 0.0:
        return base
    w1, w2 = zeeman_terms(grid, gauge_center)
    mat = (base.matrix + b * w1 + (b * b) * w2).tocsr()
    return HermitianOperator(mat, name="H_P(b)", grid=grid, potential=base.potential,
                             meta={"b": float(b), "gauge_center": gauge_center})


def fold_to_zone(k, R: float) -> tuple[tuple[float, ...], bool]:
    """Fold k into the half-open zone (2*pi/R) * [-1/2, 1/2)^d.

    Returns:
        (folded k, whether any component moved)
    """
    width = 2.0 * math.pi / R
    k = np.asarray(k, dtype=float)
    folded = (k + width / 2.0) % width - width / 2.0
    moved = not np.allclose(folded, k, rtol=0, atol=1e-14)
    return tuple(float(v) for v in folded), moved


def bloch_hamiltonian(lattice, potential, k, grid: Grid) -> HermitianOperator:
    """Bloch fiber h(k) = (-i grad + k)^2 / 2 + V_R on the periodic cell,
    expanded as -Laplacian/2 - i k.D + |k|^2/2 + V_R.

    Out-of-zone k is folded back into the first Brillouin zone (bands are
    periodic in k); the operator's meta["folded"] records that it happened.
    """
    if not grid.is_periodic:
        raise ConfigError("Bloch fiber needs a periodic grid")
    if len(k) != grid.dim:
        raise ConfigError(f"k must have {grid.dim} components. Got {len(k)}")
    k, moved = fold_to_zone(k, lattice.R)
    if moved:
        logger.warning("k folded back into the first Brillouin zone: %s", k)
    cell = grid.with_k(k)
    if potential is None:
        v = np.zeros(cell.n_nodes)
    else:
        v = np.asarray(sample_periodic_potential(potential, lattice, cell).values)
    mat = -0.5 * laplacian(cell) + sp.diags(v + 0.5 * float(np.dot(k, k)))
    if any(k):
        grads = gradient(cell)
        mat = mat - 1j * sum(kc * g for kc, g in zip(k, grads))
    return HermitianOperator(mat.tocsr(), name="h_R(k)", grid=cell, potential=v,
                             meta={"k": k, "folded": moved})


# ─── Observables ────────────────────────────────────────────────────

@dataclass
class ObservableSet:
    """L3 = -i(x1 D2 - x2 D1), Xperp2 = x1^2 + x2^2, and the gradient D_k."""
    L3: HermitianOperator
    Xperp2: HermitianOperator
    gradient: list = field(default_factory=list)

    def xperp2_expectation(self, phi: np.ndarray) -> float:
        d = self.Xperp2.matrix.diagonal().real
        return float(np.sum(d * np.abs(phi) ** 2))

    def l3_expectation(self, phi: np.ndarray) -> complex:
        return complex(np.vdot(phi, self.L3.apply(phi)))


def observables(grid: Grid, center=None) -> ObservableSet:
    """Angular momentum and transverse radius observables on a Dirichlet grid."""
    if grid.is_periodic:
        raise ConfigError("Observables need a Dirichlet grid")
    c = np.zeros(2) if center is None else np.asarray(center, dtype=float)[:2]
    x1 = grid.coordinate(0) - c[0]
    x2 = grid.coordinate(1) - c[1]
    grads = gradient(grid)
    l3 = -1j * (sp.diags(x1) @ grads[1] - sp.diags(x2) @ grads[0])
    xperp2 = sp.diags(x1 ** 2 + x2 ** 2)
    return ObservableSet(
        L3=HermitianOperator(l3.tocsr(), name="L3", grid=grid),
        Xperp2=HermitianOperator(xperp2.tocsr(), name="Xperp2", grid=grid),
        gradient=grads,
    )


# ─── Convergence study ──────────────────────────────────────────────

def free_box_levels(grid: Grid, count: int = 2) -> np.ndarray:
    """Continuum Dirichlet levels pi^2 (n1^2 + ... + nd^2) / (2 L^2), sorted."""
    L = 2.0 * grid.half_width
    n = np.arange(1, count + 2)
    mesh = np.meshgrid(*([n] * grid.dim), indexing="ij")
    levels = sum(m.ravel() ** 2 for m in mesh) * math.pi ** 2 / (2.0 * L ** 2)
    return np.sort(levels)[:count]


def box_convergence(dim: int, half_width: float, points_ladder, count: int = 2) -> list[dict]:
    """Free-box eigenvalue error for each resolution in the ladder.

    Returns one dict per resolution with keys points, spacing, error.
    Errors should fall about 4x per doubling of points.
    """
    from core.eigensolve import lowest_eigenpairs, SolveOptions
    from core.model import make_grid

    rows = []
    for points in points_ladder:
        grid = make_grid(dim, half_width, points)
        spec = lowest_eigenpairs(hamiltonian_single_atom(grid, None), count, SolveOptions())
        err = float(np.max(np.abs(spec.eigenvalues - free_box_levels(grid, count))))
        rows.append({"points": points, "spacing": grid.spacing, "error": err})
    return rows
