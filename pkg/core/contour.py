"""
Orbimag — Contour Formulas
Riesz-projection traces and the resolvent-kernel susceptibility, evaluated
by quadrature on a closed contour around the occupied levels.

Everything here works in the eigenbasis of a dense-materializable H(0):
once U and lambda are known, the trace of any product of resolvents and
rotated operators at a node costs at most two matrix products.
"""

import logging
import math

import numpy as np
import scipy.linalg as la

from core.eigensolve import (
    ContourSpec, SolveOptions, SpectralData, default_contour, dense_spectrum,
    rectangle_contour, resolvent_apply,
)
from core.jobs import map_ordered
from core.model import PhysicalParams, vector_potential_field
from core.operators import HermitianOperator, gradient, zeeman_terms
from core.safety import DENSE_LIMIT, ConfigError, check_dense

logger = logging.getLogger(__name__)

KERNELS = ("gauge", "direct")
WEIGHTS = ("xi", "one")


def riesz_weight(theta: float, w: int):
    """g(xi) = theta - w * xi for w in {0, 1}."""
    if w not in (0, 1):
        raise ConfigError(f"Riesz weight exponent must be 0 or 1. Got {w}")
    return lambda xi: theta - w * xi


# ─── Riesz traces ───────────────────────────────────────────────────

def _exact_traces(lam: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    return np.array([np.sum(1.0 / (lam - z)) for z in nodes])


def _stochastic_traces(H: HermitianOperator, nodes: np.ndarray, spectral: SpectralData,
                       opts: SolveOptions, probes: int, workers) -> np.ndarray:
    rng = np.random.default_rng(opts.seed)
    Z = rng.choice([-1.0, 1.0], size=(H.dimension, probes)).astype(complex)

    def node_trace(z):
        acc = 0j
        for j in range(probes):
            acc += np.vdot(Z[:, j], resolvent_apply(H, z, Z[:, j], opts, spectral))
        return acc / probes

    return np.array(map_ordered(node_trace, nodes, workers))


def riesz_trace(H: HermitianOperator, contour: ContourSpec, w: int = 1, theta: float = 0.0,
                opts: SolveOptions | None = None, spectral: SpectralData | None = None,
                method: str = "auto", probes: int = 32, workers=None) -> complex:
    """(i / 2 pi) * contour integral of (theta - w xi) Tr[(H - xi)^{-1}].

    w=0, theta=1 counts the enclosed eigenvalues; w=1, theta=0 gives minus
    their sum (the residue of xi / (lambda - xi) is -lambda).

    method "exact" diagonalizes H (dimension <= DENSE_LIMIT); "stochastic"
    uses Rademacher probes through resolvent_apply and needs `spectral`
    to validate the contour. "auto" picks exact when it fits.

    Raises:
        ContourError: Contour too close to the spectrum or miscounting.
    """
    opts = opts or SolveOptions()
    weight = riesz_weight(theta, w)
    if method == "auto":
        method = "exact" if H.dimension <= DENSE_LIMIT else "stochastic"
    nodes, wts = contour.quadrature()

    if method == "exact":
        full = dense_spectrum(H, opts)
        contour.validate(full, opts.tol)
        traces = _exact_traces(full.eigenvalues, nodes)
    elif method == "stochastic":
        if spectral is None:
            raise ConfigError("Stochastic Riesz trace needs SpectralData to validate the contour")
        contour.validate(spectral, opts.tol)
        traces = _stochastic_traces(H, nodes, spectral, opts, probes, workers)
    else:
        raise ConfigError(f"Unknown trace method {method!r}. Use exact, stochastic or auto")

    value = (1j / (2.0 * math.pi)) * np.sum(wts * weight(nodes) * traces)
    logger.debug("riesz_trace(w=%d, theta=%g) = %s over %d nodes", w, theta, value, nodes.size)
    return complex(value)


# ─── Kernel susceptibility ──────────────────────────────────────────

def _eigenbasis(H: HermitianOperator):
    check_dense(H.dimension, "contour kernel operator")
    a = H.to_dense()
    lam, U = la.eigh(0.5 * (a + a.conj().T))
    return lam, U


def _rotate(U: np.ndarray, op) -> np.ndarray:
    return U.conj().T @ (op @ U)


def _direct_node_fn(H, lam, U, gauge_center):
    """Tr G[W1 G W1 - W2] G with W1, W2 the grid operator's own field pieces."""
    w1, w2 = zeeman_terms(H.grid, gauge_center)
    m2 = np.abs(_rotate(U, w1)) ** 2
    d2 = np.real(np.einsum("ij,ij->j", U.conj(), w2 @ U))

    def node(z):
        g = 1.0 / (lam - z)
        return (g * g) @ m2 @ g - np.sum(g * g * d2)

    return node


def _gauge_node_fn(H, lam, U, gauge_center):
    """Tr G[T1 T1 - T2] with kernels built from a(x_i - x_j).

    a is linear, so the Hadamard product with a_k(x_i - x_j) is the
    commutator [diag(a_k), .]. That gives T1 = W1 G - i sum_k D_k G diag(a_k)
    and reduces Tr G T2 to sum_k Tr(a_k^2 G^2) - Tr(a_k G a_k G).
    """
    grid = H.grid
    a = vector_potential_field(grid, gauge_center)
    w1, _ = zeeman_terms(grid, gauge_center)
    grads = gradient(grid)
    w1t = _rotate(U, w1)
    dts = [_rotate(U, grads[k]) for k in range(2)]
    ats = [U.conj().T @ (a[:, k][:, None] * U) for k in range(2)]
    a2d = [np.real(np.einsum("ij,i,ij->j", U.conj(), a[:, k] ** 2, U)) for k in range(2)]
    at2 = [np.abs(m) ** 2 for m in ats]

    def node(z):
        g = 1.0 / (lam - z)
        t1 = w1t * g[None, :]
        for k in range(2):
            t1 = t1 - 1j * (dts[k] @ (g[:, None] * ats[k]))
        tr_t1t1 = np.sum(g[:, None] * t1 * t1.T)
        tr_t2 = sum(np.sum(g * g * a2d[k]) - g @ at2[k] @ g for k in range(2))
        return tr_t1t1 - tr_t2

    return node


def contour_kernel_susceptibility(H: HermitianOperator, contour: ContourSpec,
                                  params: PhysicalParams | None = None, kernel: str = "gauge",
                                  weight: str = "xi", gauge_center=None,
                                  opts: SolveOptions | None = None, workers=None) -> float:
    """chi = -kappa (i/pi) * contour integral of xi Tr{G(xi)[T1 T1 - T2]}.

    kernel "gauge" builds T1[i,j] = a(x_i - x_j).(i grad G)[i,j] and
    T2[i,j] = |a(x_i - x_j)|^2 G[i,j] / 2, a discretization of the continuum
    kernels; it converges to the spectral result under grid refinement.
    kernel "direct" uses T1 = W1 G, T2 = W2 G with the exact field pieces of
    the grid H(b) and reproduces larmor + vanvleck on the same matrix up to
    quadrature error.

    weight "one" replaces xi by 1; for the direct kernel that integral vanishes
    identically, for the gauge kernel only as the grid is refined.

    Raises:
        DenseLimitError: H above DENSE_LIMIT.
        ContourError: Contour too close to the spectrum.
    """
    params = params or PhysicalParams()
    opts = opts or SolveOptions()
    if kernel not in KERNELS:
        raise ConfigError(f"Unknown kernel {kernel!r}. Choose from {KERNELS}")
    if weight not in WEIGHTS:
        raise ConfigError(f"Unknown weight {weight!r}. Choose from {WEIGHTS}")
    if H.grid is None or H.grid.is_periodic:
        raise ConfigError("Contour kernel needs an operator on a Dirichlet grid")

    lam, U = _eigenbasis(H)
    full = SpectralData(lam, U, np.zeros(lam.size), int(np.sum(lam < -opts.margin)))
    contour.validate(full, opts.tol)

    build = _gauge_node_fn if kernel == "gauge" else _direct_node_fn
    node_fn = build(H, lam, U, gauge_center)
    nodes, wts = contour.quadrature()
    traces = np.array(map_ordered(node_fn, nodes, workers))
    g = nodes if weight == "xi" else np.ones_like(nodes)
    chi = -params.kappa * (1j / math.pi) * np.sum(wts * g * traces)
    logger.debug("contour chi (%s, %s) = %s", kernel, weight, chi)
    return float(chi.real)


# ─── Consistency check ──────────────────────────────────────────────

def kernel_check(grid, potential, n0: int, shape: str = "circle", nodes: int = 64,
                 kernels=KERNELS, params: PhysicalParams | None = None,
                 opts: SolveOptions | None = None, workers=None) -> dict:
    """Contour results against the spectral ones on one dense operator.

    Returns a dict with the Riesz rank, the xi-weighted trace against the
    eigenvalue sum, the spectral chi_total, and per kernel the contour chi,
    its error and the constant-weight null integral.
    """
    from core.model import sample_potential
    from core.operators import hamiltonian_single_atom, observables
    from core.susceptibility import larmor_term, vanvleck_sum_over_states

    params = params or PhysicalParams()
    opts = opts or SolveOptions()
    H = hamiltonian_single_atom(grid, sample_potential(potential, grid))
    full = dense_spectrum(H, opts)
    full.require_bound(n0)
    full.require_simple(n0)
    build = default_contour if shape == "circle" else rectangle_contour
    contour = build(full, n0, nodes)

    rank = riesz_trace(H, contour, w=0, theta=1.0, opts=opts)
    minus_sum = riesz_trace(H, contour, w=1, theta=0.0, opts=opts)
    eig_sum = float(np.sum(full.eigenvalues[:n0]))
    obs = observables(grid)
    chi_spectral = (larmor_term(full, n0, obs, params)
                    + vanvleck_sum_over_states(full, n0, obs, params)[0])

    summary = {
        "n0": n0,
        "points": grid.points,
        "contour": {"shape": contour.shape, "nodes": contour.nodes},
        "rank": rank.real,
        "rank_defect": abs(rank.real - n0),
        "eigenvalue_sum": eig_sum,
        "trace_sum": -minus_sum.real,
        "trace_sum_error": abs(-minus_sum.real - eig_sum),
        "chi_spectral": chi_spectral,
        "kernels": {},
    }
    for kernel in kernels:
        chi = contour_kernel_susceptibility(H, contour, params, kernel, "xi", opts=opts,
                                            workers=workers)
        null = contour_kernel_susceptibility(H, contour, params, kernel, "one", opts=opts,
                                             workers=workers)
        summary["kernels"][kernel] = {"chi": chi, "error": chi - chi_spectral, "null": null}
    return summary
