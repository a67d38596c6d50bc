"""Command-line interface.

    snls <subcommand> --config <path> [--seed N] [--out DIR] [--workers K]

Subcommands: simulate, ensemble, noise-stats, verify-energy, converge,
partition.  Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import diagnostics, dynamics, harness, lattice, noise as noise_mod
from .errors import ConfigurationError, SnlsError


def _load_config(args) -> harness.RunConfig:
    with open(args.config) as fh:
        rc = harness.parse_config(fh.read())
    if args.seed is not None:
        rc = replace(rc, master_seed=args.seed)
    if args.out is not None:
        rc = replace(rc, output_dir=args.out)
    if args.workers is not None:
        rc = replace(rc, workers=args.workers)
    return rc


def _cmd_simulate(args) -> int:
    rc = _load_config(args)
    out = harness.ensure_output_dir(rc)
    cfg = harness.build_solver_config(rc)
    traj = dynamics.solve(cfg)
    ledger = diagnostics.ito_ledger(traj)
    harness.emit_csv(ledger, os.path.join(out, "diagnostics.csv"))
    if rc.emit_snapshots:
        dynamics.write_trajectory(traj, os.path.join(out, "trajectory.bin"))
        if traj.noise_path is not None:
            noise_mod.write_noise_path(traj.noise_path, os.path.join(out, "noise_path.bin"))
    part = diagnostics.partition_intervals(traj, rc.eta)
    rep = diagnostics.strichartz_report(
        traj, lattice.SpacetimeInterval(0, traj.n_snapshots - 1)
    )
    lines = [
        "[simulate]",
        f"config_hash = {rc.config_hash()}",
        f"final_energy = {float(ledger.energy[-1])!r}",
        f"final_residual = {float(ledger.residual[-1])!r}",
        f"partition_J = {part.J}",
    ]
    lines += [f"{k} = {v!r}" for k, v in rep.items()]
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def _cmd_ensemble(args) -> int:
    rc = _load_config(args)
    out = harness.ensure_output_dir(rc)
    report = harness.run_ensemble(rc)
    harness.write_report(report, os.path.join(out, "ensemble_report.txt"))
    for k, v in report.aggregates.items():
        print(f"{k} = {harness._format_value(v)}")
    return 0


def _cmd_noise_stats(args) -> int:
    """Psi-only ensemble: sample the stochastic convolution and compare its
    second moment against t * ||phi||_HS^2 (the exact Ito isometry)."""
    rc = _load_config(args)
    out = harness.ensure_output_dir(rc)
    grid = harness.build_grid(rc)
    spec = harness.build_noise(rc, grid)
    n_steps = int(round(rc.t_final / rc.dt))
    h1_sq = []
    for member in range(rc.ensemble_size):
        psi = lattice.zero_field(grid)
        for j in range(n_steps):
            rng = noise_mod.step_rng(rc.master_seed, member, j)
            psi, _ = noise_mod.step_stochastic_convolution(psi, spec, rc.dt, rng)
        h1_sq.append(lattice.sobolev_norm(psi, 1.0) ** 2)
    h1_sq = np.asarray(h1_sq)
    est = float(h1_sq.mean())
    se = float(h1_sq.std(ddof=1) / np.sqrt(len(h1_sq))) if len(h1_sq) > 1 else 0.0
    target = rc.t_final * noise_mod.hs_norm(spec, 1.0) ** 2
    lines = [
        "[noise-stats]",
        f"members = {rc.ensemble_size}",
        f"E_psi_H1_sq = {est!r}",
        f"standard_error = {se!r}",
        f"ito_isometry_target = {target!r}",
        f"deviation_in_se = {abs(est - target) / se if se else 0.0!r}",
    ]
    with open(os.path.join(out, "noise_stats.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def _cmd_verify_energy(args) -> int:
    rc = _load_config(args)
    out = harness.ensure_output_dir(rc)
    study = harness.residual_refinement_study(rc, n_halvings=args.halvings)
    if study["discrepancy"]:
        harness.write_discrepancy_report(study, os.path.join(out, "ledger_discrepancy.txt"))
    for dt, lit, bal in zip(
        study["dts"], study["literal_residuals"], study["balanced_residuals"]
    ):
        print(f"dt = {dt!r}  |literal residual| = {lit!r}  |balanced residual| = {bal!r}")
    print(f"literal_non_increasing = {study['literal_non_increasing']}")
    return 0


def _cmd_converge(args) -> int:
    rc = _load_config(args)
    harness.ensure_output_dir(rc)
    if args.dts:
        dts = [float(s) for s in args.dts.split(",")]
    else:
        dts = [rc.dt * 2**j for j in range(args.levels - 1, -1, -1)]
    study = harness.convergence_study(rc, dts)
    for dt, err in zip(study["dts"][:-1], study["errors_vs_finest"]):
        print(f"dt = {dt!r}  error = {err!r}")
    print(f"observed_order = {study['observed_order']!r}")
    return 0


def _cmd_partition(args) -> int:
    rc = _load_config(args)
    traj = dynamics.read_trajectory(args.trajectory)
    part = diagnostics.partition_intervals(traj, rc.eta)
    print(f"eta = {rc.eta!r}  J = {part.J}")
    for itv, nrm, irr in zip(part.intervals, part.norms, part.irreducible):
        tag = "  [irreducible]" if irr else ""
        print(f"[{itv.start_index}, {itv.end_index}]  x1 = {nrm!r}{tag}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snls", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "simulate": _cmd_simulate,
        "ensemble": _cmd_ensemble,
        "noise-stats": _cmd_noise_stats,
        "verify-energy": _cmd_verify_energy,
        "converge": _cmd_converge,
        "partition": _cmd_partition,
    }
    for name, fn in commands.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--workers", type=int, default=None)
        p.set_defaults(func=fn)
    sub.choices["verify-energy"].add_argument("--halvings", type=int, default=3)
    sub.choices["converge"].add_argument("--dts", default=None, help="comma-separated dt list")
    sub.choices["converge"].add_argument("--levels", type=int, default=3)
    sub.choices["partition"].add_argument("--trajectory", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return 1
    except (SnlsError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
