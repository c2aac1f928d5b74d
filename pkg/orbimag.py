#!/usr/bin/env python3
"""
Orbimag — Orbital Magnetism Lab
CLI entry point. Also importable as a library.

Usage:
    python orbimag.py atomic --config configs/example.json
    python orbimag.py bands --config configs/example.json --out results/bands
    python orbimag.py thermo --config configs/example.json
    python orbimag.py sweep --config configs/example.json --serial
    python orbimag.py kernel-check --config configs/example.json --verbose
    python orbimag.py list-potentials

Exit codes: 0 success, 1 unexpected failure, 2 config error,
3 solver failure, 4 guard tripped (degeneracy, bound states, insulating).
"""

import sys
import os
import argparse
import logging
from pathlib import Path

# Add project root to path so imports work
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from core.bands import band_edges_and_gaps, band_structure, refine_band_edges
from core.cache import cache_spectral
from core.config import RunConfig, load_config
from core.contour import kernel_check
from core.finite_t import level_table, save_level_table
from core.model import cell_grid, lattice_for, list_potentials, sample_potential
from core.operators import hamiltonian_single_atom, observables
from core.reports import (
    write_atomic, write_bands, write_kernel_check, write_sweep, write_thermo,
)
from core.safety import ConfigError, OrbimagError, exit_code_for
from core.susceptibility import atomic_susceptibility, bound_spectrum
from core.sweep import box_field, run_sweep
from core.thermo import (
    ThermoResult, density, fermi_energy_from_lattice, finite_volume_pressure,
    finite_volume_susceptibility,
)

__version__ = "0.1.0"

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

logger = logging.getLogger("orbimag")


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format=LOG_FORMAT, stream=sys.stderr, force=True)


def _workers(args):
    return 1 if args.serial else None


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out or cfg.output.dir)


def _require_R(cfg: RunConfig) -> float:
    if cfg.lattice.R is None:
        raise ConfigError("lattice.R is required for this subcommand")
    return cfg.lattice.R


def _spectral_key(cfg: RunConfig, start: int) -> dict:
    return {
        "operator": "single_atom",
        "grid": cfg.grid.model_dump(mode="json"),
        "potential": cfg.potential.model_dump(mode="json"),
        "solver": cfg.solver.model_dump(mode="json"),
        "start": start,
    }


def _atomic_spectrum(cfg: RunConfig, H, n0: int):
    opts = cfg.solver.build()
    start = max(8, n0 + 2)
    return cache_spectral(_spectral_key(cfg, start), lambda: bound_spectrum(H, opts, start))


# ─── Subcommands ────────────────────────────────────────────────────

def cmd_atomic(args, cfg: RunConfig) -> int:
    cfg.require("grid", "potential", "lattice")
    grid = cfg.grid.build()
    potential = cfg.potential.build()
    n0 = cfg.lattice.n0
    opts = cfg.solver.build()
    H = hamiltonian_single_atom(grid, sample_potential(potential, grid))
    spectral = _atomic_spectrum(cfg, H, n0)

    report = atomic_susceptibility(grid, potential, n0, cfg.physical.build(), opts,
                                   cfg.bprobe.build(), workers=_workers(args), spectral=spectral)
    levels = level_table(spectral, n0, H, observables(grid), opts)

    out = _out_dir(args, cfg)
    write_atomic(report, out, cfg.output.formats)
    save_level_table(levels, out / "atomic_level_table.json")

    print(f"chi_total = {report.chi_total:.10g}  "
          f"(larmor {report.chi_larmor:.10g}, vanvleck {report.chi_vanvleck:.10g})  "
          f"tau = {report.tau}")
    if report.chi_curvature is not None:
        print(f"chi_curvature = {report.chi_curvature:.10g}  "
              f"relative defect {report.identity_defect:.2e}")
    print(f"Van Vleck split: discrete {report.chi_vv_discrete:.10g}, "
          f"continuum {report.chi_vv_continuum:.10g}")
    return 0


def cmd_bands(args, cfg: RunConfig) -> int:
    cfg.require("potential", "lattice")
    R = _require_R(cfg)
    potential = cfg.potential.build()
    dim = cfg.grid.dim if cfg.grid else 2
    lattice = lattice_for(potential, R, cfg.lattice.copies)
    grid = cell_grid(lattice, cfg.lattice.spacing, dim)
    n_bands = cfg.lattice.n_bands or cfg.lattice.n0 + 1

    bs, history = refine_band_edges(lattice, potential, n_bands, grid, n_k=cfg.lattice.n_k,
                                    max_n_k=4 * cfg.lattice.n_k,
                                    opts=cfg.solver.build(), workers=_workers(args))
    atomic_levels = None
    if cfg.grid is not None:
        agrid = cfg.grid.build()
        H = hamiltonian_single_atom(agrid, sample_potential(potential, agrid))
        atomic_levels = _atomic_spectrum(cfg, H, cfg.lattice.n0).eigenvalues
    gaps = band_edges_and_gaps(bs, atomic_levels)

    write_bands(bs, gaps, _out_dir(args, cfg), cfg.output.formats)
    print(f"R = {R:g}: {bs.n_bands} bands on {bs.n_samples} k-points "
          f"(n_k = {bs.n_k}, {len(history)} refinement steps)")
    for g in gaps.gaps:
        print(f"gap above band {g['below']}: [{g['lower']:.8g}, {g['upper']:.8g}] "
              f"width {g['width']:.6g}")
    return 0


def cmd_thermo(args, cfg: RunConfig) -> int:
    cfg.require("potential", "lattice", "thermo")
    R = _require_R(cfg)
    potential = cfg.potential.build()
    dim = cfg.grid.dim if cfg.grid else 2
    opts = cfg.solver.build()
    workers = _workers(args)
    lattice = lattice_for(potential, R, cfg.lattice.copies)
    grid = cell_grid(lattice, cfg.lattice.spacing, dim)
    n_bands = cfg.lattice.n_bands or cfg.lattice.n0 + 1
    beta = max(cfg.thermo.beta_schedule)

    fermi = None
    if cfg.thermo.mu is None:
        bs, fermi = fermi_energy_from_lattice(lattice, potential, cfg.lattice.n0, n_bands,
                                              cfg.lattice.n_k, grid, cfg.thermo.beta_schedule,
                                              opts, workers)
        mu = fermi.estimate
    else:
        mu = cfg.thermo.mu
        bs = band_structure(lattice, potential, n_bands, cfg.lattice.n_k, grid, opts, workers)

    box = box_field(potential, R, cfg.thermo.box_multiple, cfg.lattice.spacing, dim)
    pressure = finite_volume_pressure(box.grid, box, beta, mu, 0.0, cfg.thermo.n_levels, opts)
    chi_fv = finite_volume_susceptibility(box.grid, box, beta, mu, cfg.bprobe.build(),
                                          cfg.thermo.n_levels, cfg.physical.build(), opts,
                                          workers)
    result = ThermoResult(
        beta=beta, density=density(bs, beta, mu), mu_solution=mu,
        fermi_energy=None if fermi is None else fermi.estimate,
        gap_midpoint=None if fermi is None else fermi.gap_midpoint,
        pressure=pressure, susceptibility_fv=chi_fv,
        mu_schedule=[] if fermi is None else list(fermi.mus),
    )
    write_thermo(result, fermi, _out_dir(args, cfg), cfg.output.formats)
    if fermi is not None:
        print(f"R = {R:g}: Fermi energy {fermi.estimate:.10g} "
              f"(gap midpoint {fermi.gap_midpoint:.10g})")
    print(f"beta = {beta:g}, mu = {mu:.10g}: P = {pressure:.10g}, "
          f"|Omega_R| chi = {R ** dim * chi_fv:.10g}")
    return 0


def cmd_sweep(args, cfg: RunConfig) -> int:
    config = cfg.sweep_config()
    result = run_sweep(config, workers=_workers(args))
    write_sweep(result, _out_dir(args, cfg), cfg.output.formats)
    print(f"chi_atomic = {result.chi_atomic:.10g}  tau = {result.tau}  "
          f"{len(result.rows)} R values")
    for row in result.rows:
        print(f"R = {row.R:g}: remainder {row.remainder:.4e}, "
              f"Fermi remainder {row.fermi_remainder:.4e}")
    if result.fit is not None:
        print(f"fit: c = {result.fit.c:.6g}, alpha = {result.fit.alpha:.2f}, "
              f"r^2 = {result.fit.r_squared:.4f}")
    else:
        print(f"fit skipped: {result.fit_error}")
    return 0


def cmd_kernel_check(args, cfg: RunConfig) -> int:
    cfg.require("grid", "potential", "lattice", "contour")
    grid = cfg.grid.build()
    summary = kernel_check(grid, cfg.potential.build(), cfg.lattice.n0, cfg.contour.shape,
                           cfg.contour.nodes, tuple(cfg.contour.kernels),
                           cfg.physical.build(), cfg.solver.build(), _workers(args))
    write_kernel_check(summary, _out_dir(args, cfg))
    print(f"rank {summary['rank']:.6f} (n0 = {summary['n0']}), "
          f"trace error {summary['trace_sum_error']:.2e}, "
          f"chi_spectral = {summary['chi_spectral']:.10g}")
    for name, k in summary["kernels"].items():
        print(f"{name}: chi = {k['chi']:.10g}  error {k['error']:.2e}  null {k['null']:.2e}")
    return 0


def cmd_list_potentials(args, cfg=None) -> int:
    for entry in list_potentials():
        params = ", ".join(f"{k}={v}" for k, v in entry["params"].items())
        print(f"  {entry['name']:<16} {entry['description']}  ({params})")
    return 0


# ─── Entry ──────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orbimag",
        description="Orbimag — orbital magnetism of periodic and single-atom systems",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Path to the JSON run file")
    common.add_argument("--out", help="Output directory (overrides output.dir)")
    common.add_argument("--serial", action="store_true",
                        help="Run every job in one thread (bitwise reproducible)")
    common.add_argument("--verbose", action="store_true", help="DEBUG logging on stderr")

    sub = parser.add_subparsers(dest="command")
    sub.add_parser("atomic", parents=[common], help="Single-atom susceptibility report")
    sub.add_parser("bands", parents=[common], help="Bloch bands, edges and gaps at lattice.R")
    sub.add_parser("thermo", parents=[common],
                   help="Fermi energy, pressure and finite-volume susceptibility at lattice.R")
    sub.add_parser("sweep", parents=[common], help="R-sweep of the scaled bulk susceptibility")
    sub.add_parser("kernel-check", parents=[common],
                   help="Contour formulas against the spectral ones on a dense grid")
    p = sub.add_parser("list-potentials", help="List registered single-site potentials")
    p.add_argument("--verbose", action="store_true", help="DEBUG logging on stderr")
    return parser


COMMANDS = {
    "atomic": cmd_atomic,
    "bands": cmd_bands,
    "thermo": cmd_thermo,
    "sweep": cmd_sweep,
    "kernel-check": cmd_kernel_check,
    "list-potentials": cmd_list_potentials,
}


def run_cli(argv) -> int:
    """Parse argv, run one subcommand, return the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command not in COMMANDS:
        parser.print_help()
        return 2
    _configure_logging(getattr(args, "verbose", False))

    try:
        cfg = load_config(args.config) if hasattr(args, "config") else None
        return COMMANDS[args.command](args, cfg)
    except OrbimagError as e:
        print(f"Error: {e}", file=sys.stderr)
        return exit_code_for(e)
    except Exception as e:
        logger.debug("unexpected failure", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
