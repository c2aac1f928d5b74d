"""
Orbimag — Run Configuration
Pydantic models for the JSON run file. Each section validates its own
fields and builds the domain object it describes; RunConfig.require checks
that a subcommand's sections are present.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.eigensolve import SolveOptions
from core.model import PhysicalParams, PotentialKind, make_grid, make_potential
from core.safety import MAX_PROBE_LEVELS, MIN_PROBE_STEP, ConfigError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------

class PhysicalSettings(_Section):
    """Coupling constant. Units are hbar = m = 1."""
    kappa: float = Field(default=1.0, gt=0, description="(q/c)^2, multiplies every susceptibility.")

    def build(self) -> PhysicalParams:
        return PhysicalParams(kappa=self.kappa)


class GridSettings(_Section):
    """Dirichlet box for single-atom and kernel runs."""
    dim: Literal[2, 3] = Field(default=2, description="Spatial dimension.")
    half_width: float = Field(default=6.0, gt=0, description="Box is [-half_width, half_width]^d.")
    points: int = Field(default=64, ge=8, description="Nodes per axis.")

    def build(self):
        return make_grid(self.dim, self.half_width, self.points)


class PotentialSettings(_Section):
    """Single-site potential. depth/radius/aspect apply to compact wells, omega to the trap."""
    kind: PotentialKind = Field(default=PotentialKind.BUMP, description="Registry name.")
    depth: float = Field(default=5.0, gt=0)
    radius: float = Field(default=2.0, gt=0)
    aspect: float = Field(default=0.75, gt=0, description="x2 semi-axis over x1 semi-axis.")
    omega: float = Field(default=1.0, gt=0, description="Harmonic trap frequency.")

    def build(self):
        if self.kind == PotentialKind.HARMONIC:
            return make_potential(self.kind.value, omega=self.omega)
        return make_potential(self.kind.value, depth=self.depth, radius=self.radius,
                              aspect=self.aspect)


class LatticeSettings(_Section):
    """Occupation and, for periodic runs, the lattice constant and k sampling."""
    n0: int = Field(default=1, ge=1, description="Particles per cell (occupied levels).")
    R: float | None = Field(default=None, gt=0, description="Lattice constant.")
    spacing: float = Field(default=0.2, gt=0, description="Grid spacing held fixed across R.")
    n_k: int = Field(default=8, ge=4, description="Brillouin samples per axis.")
    n_bands: int | None = Field(default=None, ge=1, description="Defaults to tau + 1.")
    copies: int = Field(default=1, ge=0, description="Images summed per side of each axis.")


class SolverSettings(_Section):
    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=20000, ge=1)
    seed: int = Field(default=0, ge=0)
    degeneracy_gap: float | None = Field(default=None, gt=0,
                                         description="Defaults to 1e-6 * |lambda_1|.")
    edge_margin: float | None = Field(default=None, gt=0, description="Defaults to 10 * tol.")

    def build(self) -> SolveOptions:
        return SolveOptions(tol=self.tol, max_iter=self.max_iter, seed=self.seed,
                            degeneracy_gap=self.degeneracy_gap, edge_margin=self.edge_margin)


class ContourSettings(_Section):
    shape: Literal["circle", "rectangle"] = Field(default="circle")
    nodes: int = Field(default=64, ge=4)
    kernels: list[Literal["gauge", "direct"]] = Field(default_factory=lambda: ["gauge", "direct"])


class BProbeSettings(_Section):
    h_b: float = Field(default=1e-2, ge=MIN_PROBE_STEP, description="Smallest field step.")
    levels: int = Field(default=2, ge=1, le=MAX_PROBE_LEVELS, description="Richardson levels.")

    def build(self):
        from core.susceptibility import BFieldProbe
        return BFieldProbe(h_b=self.h_b, levels=self.levels)


class ThermoSettings(_Section):
    beta_schedule: list[float] = Field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0])
    box_multiple: Literal[1, 2, 3] = Field(default=2, description="Box side L = multiple * R.")
    n_levels: int = Field(default=256, ge=1, description="Box levels summed in the pressure.")
    mu: float | None = Field(default=None, description="Fixed mu; None pins it by the filling n0.")

    @model_validator(mode="after")
    def validate_schedule(self) -> "ThermoSettings":
        b = self.beta_schedule
        if not b or any(v <= 0 for v in b):
            raise ValueError(f"beta_schedule must be nonempty and positive. Got {b}")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise ValueError(f"beta_schedule must be strictly increasing. Got {b}")
        return self


class SweepSettings(_Section):
    R_values: list[float] = Field(min_length=1)
    alpha_grid: list[float] | None = Field(default=None, description="Defaults to 0.1..1.5 step 0.01.")
    noise_factor: float = Field(default=3.0, gt=0)
    noise_check: bool = Field(default=True)
    atomic_half_width: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def validate_r(self) -> "SweepSettings":
        R = self.R_values
        if any(v <= 0 for v in R) or any(y <= x for x, y in zip(R, R[1:])):
            raise ValueError(f"R_values must be positive and strictly ascending. Got {R}")
        return self


class OutputSettings(_Section):
    dir: str = Field(default="results")
    formats: list[Literal["json", "csv"]] = Field(default_factory=lambda: ["json", "csv"])


# ---------------------------------------------------------------------------
# Top level
# ---------------------------------------------------------------------------

class RunConfig(_Section):
    physical: PhysicalSettings = Field(default_factory=PhysicalSettings)
    grid: GridSettings | None = None
    potential: PotentialSettings | None = None
    lattice: LatticeSettings | None = None
    solver: SolverSettings = Field(default_factory=SolverSettings)
    contour: ContourSettings | None = None
    bprobe: BProbeSettings = Field(default_factory=BProbeSettings)
    thermo: ThermoSettings | None = None
    sweep: SweepSettings | None = None
    output: OutputSettings = Field(default_factory=OutputSettings)

    def require(self, *sections: str) -> None:
        """Raises ConfigError naming every missing section."""
        missing = [s for s in sections if getattr(self, s) is None]
        if missing:
            raise ConfigError(f"Config is missing required section(s): {', '.join(missing)}")

    def sweep_config(self):
        """SweepConfig assembled from the potential/lattice/thermo/sweep sections."""
        from core.sweep import DEFAULT_ALPHA_GRID, SweepConfig

        self.require("potential", "lattice", "thermo", "sweep")
        dim = self.grid.dim if self.grid else 2
        return SweepConfig(
            R_values=self.sweep.R_values,
            n0=self.lattice.n0,
            potential=self.potential.build(),
            spacing=self.lattice.spacing,
            beta_schedule=self.thermo.beta_schedule,
            probe=self.bprobe.build(),
            opts=self.solver.build(),
            params=self.physical.build(),
            dim=dim,
            n_k=self.lattice.n_k,
            n_bands=self.lattice.n_bands,
            box_multiple=self.thermo.box_multiple,
            n_levels=self.thermo.n_levels,
            atomic_half_width=self.sweep.atomic_half_width,
            alpha_grid=tuple(self.sweep.alpha_grid) if self.sweep.alpha_grid else DEFAULT_ALPHA_GRID,
            noise_factor=self.sweep.noise_factor,
            noise_check=self.sweep.noise_check,
        )


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a JSON run file.

    Raises:
        ConfigError: Unreadable file, bad JSON, or failed validation.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must be a JSON object")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}:\n{e}")
