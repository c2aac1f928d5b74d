"""
Orbimag — Finite-Temperature Formulas
Perturbative level corrections E(B) = E + B E1 + B^2 E2 computed from the
zero-field spectrum, and the Boltzmann-averaged moment they feed.
Orbital terms only; there is no spin coupling anywhere in this model.
"""

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from core.eigensolve import SolveOptions, SpectralData
from core.operators import HermitianOperator, ObservableSet
from core.safety import ConfigError, check_positive
from core.susceptibility import reduced_resolvent_form

logger = logging.getLogger(__name__)

MOMENT_STEP = 1e-4


@dataclass(frozen=True)
class LevelData:
    """Zero-field energy with its first- and second-order field coefficients."""
    E: float
    E1: float
    E2: float
    label: str = ""

    def energy(self, B: float) -> float:
        return self.E + B * self.E1 + B * B * self.E2


def level_corrections(spectral: SpectralData, level: int, H: HermitianOperator,
                      obs: ObservableSet, opts: SolveOptions | None = None) -> LevelData:
    """E1 = -<Phi, L3 Phi> / 2 and E2 = <Phi, r^2 Phi>/8 - <L3 Phi, R L3 Phi>/4.

    Coefficients of H(b) = H + b W1 + b^2 W2 with W1 = -L3/2: E1 is the
    slope of the level at b = 0, and a positive orbital moment lowers it.

    For a simple real eigenvector <Phi, L3 Phi> is purely imaginary and
    drops out of E1 (only its real part is kept).

    Raises:
        DegeneracyDetected: The level is not simple.
    """
    spectral.require_simple(level)
    phi = spectral.vector(level)
    e1 = -0.5 * float(np.real(obs.l3_expectation(phi)))
    form = reduced_resolvent_form(H, spectral, level, obs, opts)
    e2 = 0.125 * obs.xperp2_expectation(phi) - 0.25 * form
    return LevelData(E=spectral.value(level), E1=e1, E2=float(e2), label=f"l={level}")


def level_table(spectral: SpectralData, count: int, H: HermitianOperator, obs: ObservableSet,
                opts: SolveOptions | None = None) -> list[LevelData]:
    return [level_corrections(spectral, l, H, obs, opts) for l in range(1, count + 1)]


def save_level_table(levels: list[LevelData], path: str | Path) -> Path:
    path = Path(path)
    payload = {"terms": "orbital", "levels": [asdict(lv) for lv in levels]}
    path.write_text(json.dumps(payload, indent=2))
    return path


def load_level_table(path: str | Path) -> list[LevelData]:
    payload = json.loads(Path(path).read_text())
    return [LevelData(**row) for row in payload["levels"]]


def perturbative_sampler(levels: list[LevelData]):
    """B -> array of E_j + B E1_j + B^2 E2_j."""
    if not levels:
        raise ConfigError("perturbative_sampler needs at least one level")
    E = np.array([lv.E for lv in levels])
    E1 = np.array([lv.E1 for lv in levels])
    E2 = np.array([lv.E2 for lv in levels])
    return lambda B: E + B * E1 + B * B * E2


def zeeman_levels(levels: list[LevelData], b: float) -> list[dict]:
    """Level ladder at field b, sorted by perturbed energy."""
    rows = [{"label": lv.label, "E0": lv.E, "E": lv.energy(b), "shift": lv.energy(b) - lv.E}
            for lv in levels]
    return sorted(rows, key=lambda r: r["E"])


def boltzmann_moment(sampler, beta: float, B: float, step: float = MOMENT_STEP) -> float:
    """<M> = -sum_j E_j'(B) e^{-beta E_j(B)} / sum_j e^{-beta E_j(B)}.

    E_j'(B) comes from a central difference of the sampler.
    """
    check_positive("beta", beta)
    E = np.asarray(sampler(B), dtype=float)
    if E.size == 0:
        raise ConfigError("boltzmann_moment needs at least one level")
    dE = (np.asarray(sampler(B + step)) - np.asarray(sampler(B - step))) / (2.0 * step)
    logw = -beta * E
    w = np.exp(logw - logsumexp(logw))
    return float(-np.sum(dE * w))
