"""
Orbimag — Safety & Resource Guards
Exception hierarchy and centralized preflight checks run before any solve.
Prevents runaway grid sizes, dense materialization of huge operators, and
ill-conditioned finite-field probes.
"""

import math

import numpy as np

# --- Configurable Limits ---
MIN_GRID_POINTS = 8          # Per axis
MAX_GRID_NODES = 2_000_000   # Total nodes for sparse work
DENSE_LIMIT = 4096           # Node count allowed for dense oracle paths
MIN_PROBE_STEP = 1e-4        # Smallest |b| used for finite differences
MAX_PROBE_LEVELS = 4         # Richardson levels


class OrbimagError(Exception):
    """Base class for every error raised by the lab."""
    pass


# --- Exit code 2 ---

class ConfigError(OrbimagError):
    """Invalid configuration or parameters."""
    pass


# --- Exit code 3 ---

class SolverError(OrbimagError):
    """Numerical solver failed to deliver a certified answer."""
    pass


class ConvergenceFailure(SolverError):
    """Iterative method hit max_iter or missed its residual tolerance."""
    pass


class NotOrthogonal(SolverError):
    """Right-hand side has a component along the deflated eigenvector."""
    pass


class ContourError(SolverError):
    """Contour passes too close to the spectrum or encloses the wrong count."""
    pass


class BracketFailure(SolverError):
    """Chemical potential bisection could not bracket the target density."""
    pass


class TailTooLarge(SolverError):
    """Truncated level or band sum leaves a tail above tolerance."""
    pass


class DenseLimitError(SolverError):
    """Operator too large for the dense oracle path."""
    pass


class NoiseFloor(SolverError):
    """Remainders are dominated by discretization error."""
    pass


# --- Exit code 4 ---

class GuardError(OrbimagError):
    """A physical precondition guard tripped."""
    pass


class DegeneracyDetected(GuardError):
    """Two required eigenvalues are closer than the degeneracy gap."""
    pass


class InsufficientBoundStates(GuardError):
    """Fewer negative eigenvalues than the requested occupation."""
    pass


class NotInsulating(GuardError):
    """Target filling does not put the Fermi level in a spectral gap."""
    pass


class LevelTrackingLost(GuardError):
    """Eigenvector overlap dropped while following a level in b."""
    pass


EXIT_CODES = {
    ConfigError: 2,
    SolverError: 3,
    GuardError: 4,
}


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code (1 for anything unexpected)."""
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return 1


def check_finite(name: str, value) -> None:
    """Reject NaN/Inf scalars or arrays.

    Raises:
        ConfigError: If any entry is not finite.
    """
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"NaN/Inf not allowed for '{name}': {value!r}")


def check_positive(name: str, value: float) -> None:
    check_finite(name, value)
    if value <= 0:
        raise ConfigError(f"'{name}' must be positive. Got {value}")


def preflight_grid(dim: int, points: int) -> int:
    """Validate a grid size before any allocation.

    Returns:
        Total node count.

    Raises:
        ConfigError: If the grid is too coarse or too large.
    """
    if dim not in (2, 3):
        raise ConfigError(f"Grid dimension must be 2 or 3. Got {dim}")
    if points < MIN_GRID_POINTS:
        raise ConfigError(
            f"Grid needs at least {MIN_GRID_POINTS} points per axis. Got {points}"
        )
    nodes = points ** dim
    if nodes > MAX_GRID_NODES:
        raise ConfigError(
            f"Grid has {nodes} nodes, max is {MAX_GRID_NODES}. "
            f"Use fewer points or dim=2."
        )
    return nodes


def check_dense(dimension: int, what: str = "operator") -> None:
    """Refuse dense materialization above DENSE_LIMIT.

    Raises:
        DenseLimitError: If the dimension is too large.
    """
    if dimension > DENSE_LIMIT:
        raise DenseLimitError(
            f"{what} has dimension {dimension}, dense limit is {DENSE_LIMIT}. "
            f"Use a coarser grid for oracle checks."
        )


def check_probe(steps) -> None:
    """Validate finite-difference field steps.

    Steps must be symmetric about 0 and above the conditioning floor.

    Raises:
        ConfigError: On an asymmetric or too-fine probe.
    """
    steps = np.sort(np.asarray(steps, dtype=float))
    check_finite("probe steps", steps)
    if not np.allclose(steps, -steps[::-1], rtol=0, atol=1e-15):
        raise ConfigError(f"Field probe must be symmetric about 0. Got {steps.tolist()}")
    nonzero = np.abs(steps[steps != 0])
    if nonzero.size == 0 or nonzero.min() < MIN_PROBE_STEP:
        raise ConfigError(
            f"Smallest |b| step must be >= {MIN_PROBE_STEP} (conditioning floor). "
            f"Got {nonzero.min() if nonzero.size else 0}"
        )


def is_integer_like(value: float, tol: float = 1e-9) -> bool:
    return math.isfinite(value) and abs(value - round(value)) <= tol * max(1.0, abs(value))
