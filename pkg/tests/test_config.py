"""
Orbimag -- Run Configuration Tests
Section validation, required sections and JSON loading.

Run with: pytest tests/test_config.py -v
"""

import json
import os
import sys

import pytest
from pydantic import ValidationError

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.config import (
    BProbeSettings, GridSettings, PotentialSettings, RunConfig, SweepSettings, ThermoSettings,
    load_config,
)
from core.model import HarmonicTrap, PotentialKind
from core.safety import ConfigError
from core.sweep import DEFAULT_ALPHA_GRID, SweepConfig

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
EXAMPLE = os.path.join(ROOT, "configs", "example.json")


def _write(tmp_path, payload, name="run.json"):
    path = tmp_path / name
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload))
    return path


class TestSections:

    def test_extra_key_forbidden(self):
        with pytest.raises(ValidationError):
            GridSettings(dim=2, half_width=3.0, points=16, spacing=0.1)

    def test_grid_bounds(self):
        with pytest.raises(ValidationError):
            GridSettings(points=4)
        with pytest.raises(ValidationError):
            GridSettings(dim=4)

    def test_grid_build(self):
        g = GridSettings(dim=2, half_width=2.0, points=16).build()
        assert g.n_nodes == 256

    def test_potential_build(self):
        u = PotentialSettings(kind="bump", depth=3.0).build()
        assert u.depth == 3.0 and u.aspect == 0.75
        trap = PotentialSettings(kind=PotentialKind.HARMONIC, omega=2.0).build()
        assert isinstance(trap, HarmonicTrap)

    def test_beta_schedule_increasing(self):
        with pytest.raises(ValidationError, match="strictly increasing"):
            ThermoSettings(beta_schedule=[4.0, 2.0])

    def test_beta_schedule_positive(self):
        with pytest.raises(ValidationError):
            ThermoSettings(beta_schedule=[0.0, 2.0])

    def test_r_values_ascending(self):
        with pytest.raises(ValidationError):
            SweepSettings(R_values=[6.0, 5.0])

    def test_field_step_floor(self):
        with pytest.raises(ValidationError):
            BProbeSettings(h_b=1e-6)
        assert BProbeSettings(h_b=0.02, levels=3).build().magnitudes == pytest.approx([0.02, 0.04, 0.08])


class TestRunConfig:

    def test_example_loads(self):
        cfg = load_config(EXAMPLE)
        assert cfg.grid.points == 64
        assert cfg.potential.kind == PotentialKind.BUMP
        assert cfg.contour.kernels == ["gauge", "direct"]

    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.physical.kappa == 1.0
        assert cfg.grid is None
        assert cfg.output.formats == ["json", "csv"]

    def test_require_names_missing(self):
        cfg = RunConfig()
        with pytest.raises(ConfigError, match="grid, potential"):
            cfg.require("grid", "potential")

    def test_sweep_config(self):
        sc = load_config(EXAMPLE).sweep_config()
        assert isinstance(sc, SweepConfig)
        assert sc.R_values == [5.0, 6.0, 7.0, 8.0, 9.0, 10.0]
        assert sc.spacing == 0.2
        assert sc.alpha_grid == DEFAULT_ALPHA_GRID
        assert sc.probe.h_b == 0.01

    def test_sweep_config_needs_sections(self):
        with pytest.raises(ConfigError, match="sweep"):
            RunConfig(potential=PotentialSettings(), lattice={"n0": 1},
                      thermo=ThermoSettings()).sweep_config()


class TestLoadConfig:

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="Cannot read"):
            load_config(tmp_path / "nope.json")

    def test_bad_json(self, tmp_path):
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(_write(tmp_path, "{grid: 1"))

    def test_not_object(self, tmp_path):
        with pytest.raises(ConfigError, match="JSON object"):
            load_config(_write(tmp_path, [1, 2]))

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError, match="Invalid config"):
            load_config(_write(tmp_path, {"magnets": {}}))

    def test_invalid_value(self, tmp_path):
        with pytest.raises(ConfigError, match="Invalid config"):
            load_config(_write(tmp_path, {"physical": {"kappa": -1.0}}))
