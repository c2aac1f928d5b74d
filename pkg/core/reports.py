"""
Orbimag — Report Writers
CSV and JSON outputs for every subcommand. Column tuples below are frozen
in the top-level VERSIONS file; floats are written with repr so reruns
produce byte-identical files.
"""

import csv
import json
import logging
from pathlib import Path

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

ATOMIC_LEVEL_COLUMNS = ("l", "lambda_l", "larmor_l", "vv_l", "vv_discrete_l", "curvature_l")
BAND_COLUMNS_2D = ("l", "k1", "k2", "E")
BAND_COLUMNS_3D = ("l", "k1", "k2", "k3", "E")
THERMO_COLUMNS = ("beta", "mu", "density", "fermi_energy_estimate")
SWEEP_COLUMNS = (
    "R", "cell_volume", "chi_bulk_scaled", "chi_atomic", "remainder",
    "fermi_energy", "fermi_remainder", "band_localization",
)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ";".join(_cell(v) for v in value)
    return str(value)


def write_csv(path: str | Path, columns: tuple, rows) -> Path:
    """One header line, then one line per row (a mapping or a sequence)."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            values = [row.get(c) for c in columns] if isinstance(row, dict) else list(row)
            w.writerow([_cell(v) for v in values])
    return path


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps({"format_version": FORMAT_VERSION, **payload}, indent=2))
    return path


def _wants(formats, kind: str) -> bool:
    return formats is None or kind in formats


# ─── Per-subcommand bundles ─────────────────────────────────────────

def write_atomic(report, out_dir: Path, formats=None) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if _wants(formats, "json"):
        written.append(write_json(out_dir / "atomic.json",
                                  {"terms": "orbital", "report": report.to_dict()}))
    if _wants(formats, "csv"):
        rows = [{"l": r.l, "lambda_l": r.lambda_l, "larmor_l": r.larmor_l, "vv_l": r.vv_l,
                 "vv_discrete_l": r.vv_discrete_l, "curvature_l": r.curvature_l}
                for r in report.per_level]
        written.append(write_csv(out_dir / "atomic_levels.csv", ATOMIC_LEVEL_COLUMNS, rows))
    return written


def band_rows(bs) -> list[list]:
    rows = []
    for l in range(1, bs.n_bands + 1):
        for k, e in zip(bs.k_samples, bs.band(l)):
            rows.append([l, *(float(v) for v in k), float(e)])
    return rows


def write_bands(bs, gaps, out_dir: Path, formats=None) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if _wants(formats, "csv"):
        cols = BAND_COLUMNS_2D if bs.dim == 2 else BAND_COLUMNS_3D
        written.append(write_csv(out_dir / "bands.csv", cols, band_rows(bs)))
    if _wants(formats, "json"):
        written.append(write_json(out_dir / "gaps.json", {"R": bs.R, "n_k": bs.n_k,
                                                           "gaps": gaps.to_dict()}))
    return written


def write_thermo(result, fermi, out_dir: Path, formats=None) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if _wants(formats, "csv"):
        rows = []
        if fermi is not None:
            rows = [{"beta": b, "mu": m, "density": d, "fermi_energy_estimate": fermi.estimate}
                    for b, m, d in zip(fermi.betas, fermi.mus, fermi.densities)]
        written.append(write_csv(out_dir / "thermo.csv", THERMO_COLUMNS, rows))
    if _wants(formats, "json"):
        written.append(write_json(out_dir / "thermo.json", {"result": result.to_dict()}))
    return written


def write_sweep(result, out_dir: Path, formats=None) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if _wants(formats, "csv"):
        written.append(write_csv(out_dir / "sweep.csv", SWEEP_COLUMNS,
                                 [r.to_dict() for r in result.rows]))
    if _wants(formats, "json"):
        written.append(write_json(out_dir / "sweep.json", result.to_dict()))
    return written


def write_kernel_check(summary: dict, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    return write_json(out_dir / "kernel_check.json", summary)
