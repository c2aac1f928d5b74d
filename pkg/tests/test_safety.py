"""
Orbimag -- Safety & Resource Guard Tests
Exit-code mapping, preflight limits, probe conditioning and the ordered
job fan-out.

Run with: pytest tests/test_safety.py -v
"""

import math
import os
import sys
import threading

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.jobs import map_ordered
from core.safety import (
    DENSE_LIMIT, MAX_GRID_NODES, MIN_GRID_POINTS, MIN_PROBE_STEP, BracketFailure, ConfigError,
    ContourError, DegeneracyDetected, DenseLimitError, InsufficientBoundStates, LevelTrackingLost,
    NoiseFloor, NotInsulating, OrbimagError, check_dense, check_finite, check_positive,
    check_probe, exit_code_for, is_integer_like, preflight_grid,
)


# ---------------------------------------------------------------------------
# Exit codes
# ---------------------------------------------------------------------------

class TestExitCodes:

    @pytest.mark.parametrize("exc,code", [
        (ConfigError("x"), 2),
        (ContourError("x"), 3),
        (BracketFailure("x"), 3),
        (NoiseFloor("x"), 3),
        (DenseLimitError("x"), 3),
        (DegeneracyDetected("x"), 4),
        (InsufficientBoundStates("x"), 4),
        (NotInsulating("x"), 4),
        (LevelTrackingLost("x"), 4),
        (RuntimeError("x"), 1),
    ])
    def test_mapping(self, exc, code):
        assert exit_code_for(exc) == code

    def test_common_base(self):
        for cls in (ConfigError, ContourError, NotInsulating):
            assert issubclass(cls, OrbimagError)


# ---------------------------------------------------------------------------
# Preflight
# ---------------------------------------------------------------------------

class TestPreflight:

    def test_grid_ok(self):
        assert preflight_grid(2, 64) == 64 * 64

    def test_grid_too_coarse(self):
        with pytest.raises(ConfigError, match="at least"):
            preflight_grid(2, MIN_GRID_POINTS - 1)

    def test_grid_too_large(self):
        points = int(round(MAX_GRID_NODES ** (1 / 3))) + 10
        with pytest.raises(ConfigError, match="max is"):
            preflight_grid(3, points)

    def test_grid_dimension(self):
        with pytest.raises(ConfigError):
            preflight_grid(1, 64)

    def test_dense_limit(self):
        check_dense(DENSE_LIMIT)
        with pytest.raises(DenseLimitError):
            check_dense(DENSE_LIMIT + 1, "box")

    @pytest.mark.parametrize("value", [math.nan, math.inf, [1.0, math.nan]])
    def test_check_finite(self, value):
        with pytest.raises(ConfigError, match="NaN/Inf"):
            check_finite("v", value)

    @pytest.mark.parametrize("value", [0.0, -1.0])
    def test_check_positive(self, value):
        with pytest.raises(ConfigError):
            check_positive("v", value)

    def test_integer_like(self):
        assert is_integer_like(2.0 + 1e-12)
        assert not is_integer_like(2.5)
        assert not is_integer_like(math.inf)


class TestFieldSteps:

    def test_symmetric_ok(self):
        check_probe([-0.02, -0.01, 0.01, 0.02])

    def test_asymmetric(self):
        with pytest.raises(ConfigError, match="symmetric"):
            check_probe([-0.02, 0.01])

    def test_below_floor(self):
        h = MIN_PROBE_STEP / 2
        with pytest.raises(ConfigError, match="conditioning floor"):
            check_probe([-h, h])

    def test_zero_only(self):
        with pytest.raises(ConfigError):
            check_probe([0.0])


# ---------------------------------------------------------------------------
# Job fan-out
# ---------------------------------------------------------------------------

class TestMapOrdered:

    def test_serial_order(self):
        assert map_ordered(lambda x: x * x, range(5), workers=1) == [0, 1, 4, 9, 16]

    def test_parallel_order(self):
        rng = np.random.default_rng(0)
        items = list(rng.permutation(50))
        assert map_ordered(lambda x: -x, items, workers=4) == [-x for x in items]

    def test_serial_stays_on_caller_thread(self):
        seen = map_ordered(lambda _: threading.get_ident(), range(3), workers=1)
        assert set(seen) == {threading.get_ident()}

    def test_exception_propagates(self):
        def boom(x):
            if x == 2:
                raise ConfigError("bad item")
            return x

        with pytest.raises(ConfigError, match="bad item"):
            map_ordered(boom, range(4), workers=2)
