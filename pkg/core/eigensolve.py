"""
Orbimag — Eigensolvers
Low-end eigenpairs, the dense oracle, deflated solves for reduced
resolvents, and resolvent applications at complex shifts.

The sparse path is shift-invert Lanczos (ARPACK via scipy eigsh) with the
shift placed below a Gershgorin bound, followed by a Rayleigh-Ritz pass
that re-orthonormalizes the returned block. Deflated and shifted systems
are indefinite, so they go through MINRES / GMRES.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from core.operators import HermitianOperator
from core.safety import (
    ConfigError, ContourError, ConvergenceFailure, DegeneracyDetected,
    InsufficientBoundStates, NotOrthogonal, check_dense,
)

logger = logging.getLogger(__name__)

SMALL_DENSE = 400          # Below this node count the dense path is faster
ORTHO_TOL = 1e-10
REFINEMENT_ROUNDS = 3


# ─── Data types ─────────────────────────────────────────────────────

@dataclass(frozen=True)
class SolveOptions:
    """Solver knobs.

    degeneracy_gap defaults to 1e-6 * |lambda_1| and edge_margin to
    10 * tol when left as None.
    """
    tol: float = 1e-10
    max_iter: int = 20000
    seed: int = 0
    degeneracy_gap: float | None = None
    edge_margin: float | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive. Got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1. Got {self.max_iter}")
        if self.degeneracy_gap is not None and not self.degeneracy_gap > 0:
            raise ConfigError(f"degeneracy_gap must be positive. Got {self.degeneracy_gap}")

    def gap_for(self, lambda_1: float) -> float:
        if self.degeneracy_gap is not None:
            return self.degeneracy_gap
        return 1e-6 * max(abs(lambda_1), 1e-12)

    @property
    def margin(self) -> float:
        return self.edge_margin if self.edge_margin is not None else 10.0 * self.tol


@dataclass
class SpectralData:
    """Sorted eigenvalues with orthonormal eigenvectors (columns).

    Levels are labeled 1..count in increasing order; `vector(l)` and
    `value(l)` take that 1-based label.
    """
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    count_negative: int
    degenerate_pairs: list = field(default_factory=list)
    degeneracy_gap: float = 0.0

    @property
    def count(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def dimension(self) -> int:
        return int(self.eigenvectors.shape[0])

    @property
    def is_complete(self) -> bool:
        return self.count == self.dimension

    def value(self, level: int) -> float:
        return float(self.eigenvalues[level - 1])

    def vector(self, level: int) -> np.ndarray:
        return self.eigenvectors[:, level - 1]

    def gram_defect(self) -> float:
        v = self.eigenvectors
        return float(np.max(np.abs(v.conj().T @ v - np.eye(v.shape[1]))))

    def require_bound(self, n0: int) -> None:
        """Raises InsufficientBoundStates unless n0 negative levels exist."""
        if n0 > self.count_negative:
            raise InsufficientBoundStates(
                f"Occupation n0={n0} exceeds the {self.count_negative} bound states found "
                f"(at least n0 eigenvalues below 0 are required)"
            )

    def require_simple(self, upto: int) -> None:
        """Raises DegeneracyDetected if a level <= upto touches a flagged pair.

        The pair (upto, upto+1) is included: the reduced resolvent at
        lambda_upto needs the gap above it.
        """
        for i, j in self.degenerate_pairs:
            if i <= upto:
                raise DegeneracyDetected(
                    f"Levels {i} and {j} are closer than {self.degeneracy_gap:.3g} "
                    f"({self.value(i):.12g} vs {self.value(j):.12g}); simple eigenvalues are required"
                )


# ─── Eigenpairs ─────────────────────────────────────────────────────

def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column real positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    pivots = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(pivots) / pivots)[None, :]


def _rayleigh_ritz(H: HermitianOperator, vecs: np.ndarray):
    q, _ = np.linalg.qr(vecs)
    small = q.conj().T @ H.apply(q)
    small = 0.5 * (small + small.conj().T)
    w, c = la.eigh(small)
    return w, q @ c


def _finish(H: HermitianOperator, vals: np.ndarray, vecs: np.ndarray,
            opts: SolveOptions) -> SpectralData:
    order = np.argsort(vals)
    vals = np.asarray(vals[order], dtype=float)
    vecs = _fix_phases(vecs[:, order])
    if H.is_real:
        vecs = vecs.real.copy()

    residuals = np.linalg.norm(H.apply(vecs) - vecs * vals[None, :], axis=0)
    bound = opts.tol * np.maximum(1.0, np.abs(vals))
    if np.any(residuals > bound):
        worst = int(np.argmax(residuals / bound))
        raise ConvergenceFailure(
            f"Eigenpair {worst + 1} residual {residuals[worst]:.3e} exceeds "
            f"{bound[worst]:.3e} for {H.name}"
        )

    gap = opts.gap_for(vals[0])
    pairs = [(i + 1, i + 2) for i in range(vals.size - 1) if vals[i + 1] - vals[i] < gap]
    if pairs:
        logger.warning("%s: near-degenerate level pairs %s (gap < %.3g)", H.name, pairs, gap)

    return SpectralData(
        eigenvalues=vals,
        eigenvectors=vecs,
        residuals=residuals,
        count_negative=int(np.sum(vals < -opts.margin)),
        degenerate_pairs=pairs,
        degeneracy_gap=gap,
    )


def dense_spectrum(H: HermitianOperator, opts: SolveOptions | None = None) -> SpectralData:
    """Full Hermitian eigendecomposition (oracle path).

    Raises:
        DenseLimitError: Dimension above DENSE_LIMIT.
    """
    opts = opts or SolveOptions()
    a = H.to_dense()
    w, v = la.eigh(0.5 * (a + a.conj().T))
    return _finish(H, w, v, opts)


def lowest_eigenpairs(H: HermitianOperator, count: int,
                      opts: SolveOptions | None = None) -> SpectralData:
    """The `count` smallest eigenpairs.

    Shift-invert Lanczos from a seeded start vector, so results are
    deterministic for a given SolveOptions.seed. Consecutive eigenvalues
    closer than the degeneracy gap are flagged (not rejected); callers that
    need simple levels use SpectralData.require_simple.

    Raises:
        ConfigError: count < 1 or count > dimension.
        ConvergenceFailure: ARPACK hit max_iter or residuals miss tol.
    """
    opts = opts or SolveOptions()
    n = H.dimension
    if count < 1:
        raise ConfigError(f"Eigenpair count must be >= 1. Got {count}")
    if count > n:
        raise ConfigError(f"Requested {count} eigenpairs from a {n}-dimensional operator")

    if not H.is_sparse or n <= SMALL_DENSE or count >= n - 1:
        full = dense_spectrum(H, opts)
        return _finish(H, full.eigenvalues[:count], full.eigenvectors[:, :count], opts)

    rng = np.random.default_rng(opts.seed)
    v0 = rng.standard_normal(n)
    if not H.is_real:
        v0 = v0 + 1j * rng.standard_normal(n)
    sigma = H.lower_bound() - 1.0
    try:
        vals, vecs = spla.eigsh(H.matrix.tocsc(), k=count, sigma=sigma, which="LM",
                                v0=v0, tol=0.0, maxiter=opts.max_iter)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(
            f"Lanczos did not converge for {H.name} after {opts.max_iter} iterations "
            f"({len(exc.eigenvalues)} of {count} pairs)"
        ) from exc
    vals, vecs = _rayleigh_ritz(H, vecs)
    logger.debug("%s: %d eigenpairs, lowest %.12g", H.name, count, vals.min())
    return _finish(H, vals, vecs, opts)


# ─── Deflated solve ─────────────────────────────────────────────────

class ProjectedOperator(spla.LinearOperator):
    """P (H - shift) P with P = 1 - phi phi^* (phi normalized)."""

    def __init__(self, H: HermitianOperator, shift: float, phi: np.ndarray):
        self.operator = H
        self.shift = shift
        self.phi = phi
        super().__init__(dtype=np.result_type(H.dtype, phi.dtype), shape=H.matrix.shape)

    def project(self, x: np.ndarray) -> np.ndarray:
        return x - self.phi * np.vdot(self.phi, x)

    def _matvec(self, x):
        y = self.project(np.ravel(x))
        y = self.operator.apply(y) - self.shift * y
        return self.project(y)

    def _rmatvec(self, x):
        return self._matvec(x)


def _krylov(op, rhs: np.ndarray, opts: SolveOptions, hermitian_real: bool) -> np.ndarray:
    if hermitian_real:
        x, info = spla.minres(op, rhs, rtol=opts.tol, maxiter=opts.max_iter)
    else:
        x, info = spla.gmres(op, rhs, rtol=opts.tol, atol=0.0, restart=min(200, rhs.size),
                             maxiter=opts.max_iter)
    if info > 0:
        raise ConvergenceFailure(f"Krylov solve stopped after {info} iterations without converging")
    if info < 0:
        raise ConvergenceFailure(f"Krylov solve failed (illegal input, info={info})")
    return x


def _solve_projected(op: ProjectedOperator, rhs: np.ndarray, opts: SolveOptions) -> np.ndarray:
    real_path = op.operator.is_real and not np.iscomplexobj(op.phi)
    if real_path and np.iscomplexobj(rhs):
        return (_solve_projected(op, np.ascontiguousarray(rhs.real), opts)
                + 1j * _solve_projected(op, np.ascontiguousarray(rhs.imag), opts))
    scale = np.linalg.norm(rhs)
    if scale == 0.0:
        return np.zeros_like(rhs)
    psi = np.zeros_like(rhs)
    residual = rhs
    for _ in range(REFINEMENT_ROUNDS):
        psi = op.project(psi + _krylov(op, residual, opts, real_path))
        residual = rhs - op.matvec(psi)
        if np.linalg.norm(residual) <= opts.tol * scale:
            return psi
    err = np.linalg.norm(residual) / scale
    if err > 10.0 * opts.tol:
        raise ConvergenceFailure(f"Deflated solve residual {err:.3e} above tol {opts.tol:.1e}")
    return psi


def deflated_solve(H: HermitianOperator, lambda_l: float, phi_l: np.ndarray,
                   rhs: np.ndarray, opts: SolveOptions | None = None) -> np.ndarray:
    """Reduced resolvent applied to rhs.

    Solves P(H - lambda_l)P psi = rhs with <phi_l, psi> = 0, where
    P = 1 - |phi_l><phi_l|. The Krylov operator re-projects onto the
    complement of phi_l at every application.

    Raises:
        NotOrthogonal: rhs has a component along phi_l.
        ConvergenceFailure: Residual above tolerance.
    """
    opts = opts or SolveOptions()
    phi = phi_l / np.linalg.norm(phi_l)
    overlap = abs(np.vdot(phi, rhs))
    if overlap > ORTHO_TOL * max(1.0, np.linalg.norm(rhs)):
        raise NotOrthogonal(
            f"rhs overlaps the deflated eigenvector by {overlap:.3e}; project it out first"
        )
    op = ProjectedOperator(H, float(lambda_l), phi)
    return _solve_projected(op, np.asarray(rhs), opts)


# ─── Shifted solve ──────────────────────────────────────────────────

def resolvent_apply(H: HermitianOperator, xi: complex, rhs: np.ndarray,
                    opts: SolveOptions | None = None, spectral: SpectralData | None = None,
                    margin: float | None = None) -> np.ndarray:
    """psi = (H - xi)^{-1} rhs.

    Sparse operators go through ILU-preconditioned GMRES; small dense ones
    through LU. With `spectral` given, shifts closer than `margin` to a known
    eigenvalue are refused up front.

    Raises:
        ContourError: Shift on (or too close to) the spectrum.
        ConvergenceFailure: Residual above tolerance.
    """
    opts = opts or SolveOptions()
    xi = complex(xi)
    if spectral is not None:
        margin = margin if margin is not None else 10.0 * opts.tol * max(1.0, abs(xi))
        dist = float(np.min(np.abs(spectral.eigenvalues - xi)))
        if dist < margin:
            raise ContourError(f"Shift {xi} lies {dist:.3e} from the spectrum (margin {margin:.1e})")

    rhs = np.asarray(rhs, dtype=complex)
    scale = np.linalg.norm(rhs)
    if scale == 0.0:
        return np.zeros_like(rhs)

    if H.is_sparse:
        shifted = (H.matrix - xi * sp.identity(H.dimension, format="csr")).tocsc()
        try:
            ilu = spla.spilu(shifted, drop_tol=1e-6, fill_factor=20)
            precond = spla.LinearOperator(shifted.shape, matvec=ilu.solve, dtype=complex)
        except RuntimeError:
            logger.debug("ILU failed at xi=%s, running GMRES unpreconditioned", xi)
            precond = None
        psi, info = spla.gmres(shifted, rhs, rtol=opts.tol, atol=0.0,
                               restart=min(200, H.dimension), maxiter=opts.max_iter, M=precond)
        if info != 0:
            raise ConvergenceFailure(f"GMRES at xi={xi} did not converge (info={info})")
    else:
        shifted = H.to_dense() - xi * np.eye(H.dimension)
        try:
            psi = la.solve(shifted, rhs)
        except la.LinAlgError as exc:
            raise ContourError(f"Shift {xi} is an eigenvalue (singular system)") from exc

    err = np.linalg.norm(H.apply(psi) - xi * psi - rhs) / scale
    if not math.isfinite(err) or err > 10.0 * opts.tol:
        raise ConvergenceFailure(f"Resolvent residual {err:.3e} at xi={xi}")
    return psi


# ─── Contours ───────────────────────────────────────────────────────

@dataclass(frozen=True)
class ContourSpec:
    """Closed counterclockwise contour in the complex plane.

    circle: center + radius. rectangle: corners = (lower_left, upper_right).
    """
    shape: str = "circle"
    center: complex = 0j
    radius: float = 1.0
    corners: tuple | None = None
    nodes: int = 64
    enclosed_hint: int | None = None

    def __post_init__(self):
        if self.shape not in ("circle", "rectangle"):
            raise ConfigError(f"Contour shape must be 'circle' or 'rectangle'. Got {self.shape!r}")
        if self.nodes < 4:
            raise ConfigError(f"Contour needs at least 4 nodes. Got {self.nodes}")
        if self.shape == "circle" and not self.radius > 0:
            raise ConfigError(f"Contour radius must be positive. Got {self.radius}")
        if self.shape == "rectangle":
            if self.corners is None or len(self.corners) != 2:
                raise ConfigError("Rectangle contour needs corners=(lower_left, upper_right)")
            lo, hi = (complex(c) for c in self.corners)
            if not (lo.real < hi.real and lo.imag < hi.imag):
                raise ConfigError(f"Rectangle corners out of order: {self.corners}")

    def _edges(self):
        lo, hi = (complex(c) for c in self.corners)
        return [
            (lo, complex(hi.real, lo.imag)),
            (complex(hi.real, lo.imag), hi),
            (hi, complex(lo.real, hi.imag)),
            (complex(lo.real, hi.imag), lo),
        ]

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes xi_j and weights w_j with sum w_j f(xi_j) ~ contour integral of f.

        Trapezoid on the circle (exponentially convergent for analytic f),
        Gauss-Legendre per side on the rectangle.
        """
        if self.shape == "circle":
            t = 2.0 * np.pi * np.arange(self.nodes) / self.nodes
            e = np.exp(1j * t)
            xi = complex(self.center) + self.radius * e
            w = 1j * self.radius * e * (2.0 * np.pi / self.nodes)
            return xi, w
        per_edge = max(1, self.nodes // 4)
        s, ws = np.polynomial.legendre.leggauss(per_edge)
        xs, wts = [], []
        for za, zb in self._edges():
            half = 0.5 * (zb - za)
            xs.append(0.5 * (za + zb) + half * s)
            wts.append(half * ws)
        return np.concatenate(xs), np.concatenate(wts)

    def encloses(self, values) -> np.ndarray:
        z = np.asarray(values, dtype=complex)
        if self.shape == "circle":
            return np.abs(z - complex(self.center)) < self.radius
        lo, hi = (complex(c) for c in self.corners)
        return (lo.real < z.real) & (z.real < hi.real) & (lo.imag < z.imag) & (z.imag < hi.imag)

    def distance(self, values) -> np.ndarray:
        z = np.asarray(values, dtype=complex)
        if self.shape == "circle":
            return np.abs(np.abs(z - complex(self.center)) - self.radius)
        out = np.full(z.shape, np.inf)
        for za, zb in self._edges():
            d = zb - za
            t = np.clip(((z - za) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
            out = np.minimum(out, np.abs(z - (za + t * d)))
        return out

    @property
    def right_edge(self) -> float:
        if self.shape == "circle":
            return complex(self.center).real + self.radius
        return complex(self.corners[1]).real

    def validate(self, spectral: SpectralData, tol: float) -> int:
        """Check spectral clearance and the enclosed count.

        Returns:
            Number of enclosed eigenvalues.

        Raises:
            ContourError: Contour within 10*tol of an eigenvalue, reaching past
                the computed spectrum, or enclosing a count other than the hint.
        """
        lam = spectral.eigenvalues
        dist = float(np.min(self.distance(lam)))
        if dist < 10.0 * tol:
            raise ContourError(f"Contour passes {dist:.3e} from the spectrum (needs >= {10 * tol:.1e})")
        if not spectral.is_complete and self.right_edge >= lam[-1]:
            raise ContourError(
                f"Contour reaches {self.right_edge:.6g}, beyond the highest computed "
                f"eigenvalue {lam[-1]:.6g}; enclosed count cannot be certified"
            )
        count = int(np.sum(self.encloses(lam)))
        if self.enclosed_hint is not None and count != self.enclosed_hint:
            raise ContourError(f"Contour encloses {count} eigenvalues, expected {self.enclosed_hint}")
        return count


def default_contour(spectral: SpectralData, n0: int, nodes: int = 64) -> ContourSpec:
    """Circle centered at (lambda_1 + lambda_n0)/2 reaching the midpoint of
    the gap toward lambda_{n0+1}.

    Raises:
        ContourError: The spectrum does not extend past level n0.
    """
    if n0 < 1 or spectral.count <= n0:
        raise ContourError(f"Need eigenvalues 1..{n0 + 1} to place a contour around {n0} levels")
    lam = spectral.eigenvalues
    center = 0.5 * (lam[0] + lam[n0 - 1])
    radius = 0.5 * (lam[n0 - 1] + lam[n0]) - center
    return ContourSpec("circle", complex(center, 0.0), float(radius), None, nodes, n0)


def rectangle_contour(spectral: SpectralData, n0: int, nodes: int = 64,
                      height: float | None = None) -> ContourSpec:
    """Rectangle from below lambda_1 to the gap midpoint above lambda_n0."""
    if n0 < 1 or spectral.count <= n0:
        raise ContourError(f"Need eigenvalues 1..{n0 + 1} to place a contour around {n0} levels")
    lam = spectral.eigenvalues
    gap_half = 0.5 * (lam[n0] - lam[n0 - 1])
    left = lam[0] - gap_half
    right = lam[n0 - 1] + gap_half
    height = height if height is not None else max(gap_half, 0.5 * (right - left))
    return ContourSpec("rectangle", 0j, 1.0, (complex(left, -height), complex(right, height)),
                       nodes, n0)
