"""Command-line entry points: run, refine, spectrum, steady."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import assemble_linearization, spectrum
from .harness import (
    RefinementAbort,
    load_config,
    refinement_study,
    run_scenario,
)
from .mesh import make_grid
from . import report


def _bool_flag(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {value!r}")


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="scenario config file")
    sub.add_argument("--out", default="out", help="output directory")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--snapshots", type=_bool_flag, default=False,
                     help="write field checkpoints at every output step")


def _load(args) -> tuple:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _print_verdicts(summary) -> None:
    for name, v in sorted(summary.verdicts.items()):
        detail = ""
        if v.measured is not None:
            detail = f" (measured {v.measured:.6g}, threshold {v.threshold:.6g})"
        print(f"  [{v.status.upper():4s}] {name}{detail}")


def cmd_run(args) -> int:
    cfg, out = _load(args)
    summary = run_scenario(cfg, out, snapshots=args.snapshots)
    report.run_figures(out)
    if (out / "steady_history.csv").exists():
        report.steady_figure(out)
    print(f"scenario {summary.scenario}: final energy {summary.final_energy:.6g}, "
          f"drift {summary.final_drift:.3g}, distance {summary.final_distance_to_equilibria:.3g}")
    _print_verdicts(summary)
    print(f"outputs in {out}")
    return 0 if summary.all_pass() else 1


def cmd_refine(args) -> int:
    cfg, out = _load(args)
    try:
        table = refinement_study(cfg, args.levels, out, dt_factor=args.dt_factor)
    except RefinementAbort as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 1
    report.refinement_figure(table, out)
    for level_summary in table.levels:
        print(f"  level {level_summary['level']}: h={level_summary['h']:.5g} "
              f"drift={level_summary['constraint_drift']:.3e} "
              f"residual={level_summary['energy_residual_integrated']:.3e} "
              f"coupling={level_summary['coupling_discrepancy']:.3e}")
    for metric, order in sorted(table.orders.items()):
        print(f"  observed order[{metric}] = {order:.2f}")
    print(f"outputs in {out}")
    return 0


def cmd_spectrum(args) -> int:
    cfg, out = _load(args)
    grid = make_grid(cfg.grid)
    op = assemble_linearization(grid, cfg.params, args.block)
    k = args.k if args.k is not None else grid.m + 2
    rep = spectrum(op, k)
    (out / "spectrum.json").write_text(json.dumps(rep.to_record(), sort_keys=True, indent=2) + "\n")
    report.spectrum_figure(rep, out)
    print(f"block {args.block}: kernel dim {rep.kernel_dim}, gap {rep.gap:.6g}")
    print(f"  eigenvalues: {', '.join(f'{v:.6g}' for v in rep.eigenvalues)}")
    print(f"outputs in {out}")
    return 0


def cmd_steady(args) -> int:
    cfg, out = _load(args)
    cfg = replace(cfg, scenario="steady_nlevp")
    summary = run_scenario(cfg, out, snapshots=args.snapshots)
    report.steady_figure(out)
    print(f"steady director flow: {summary.metrics['iterations']:.0f} iterations, "
          f"residual {summary.metrics['steady_residual']:.3e}, "
          f"max gradient {summary.metrics['steady_grad_max']:.3e}")
    _print_verdicts(summary)
    print(f"outputs in {out}")
    return 0 if summary.all_pass() else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nematicflow",
        description="Nematic liquid crystal flow scenarios on a staggered grid",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="run one scenario")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_ref = subs.add_parser("refine", help="refinement study over halved (h, dt)")
    _add_common(p_ref)
    p_ref.add_argument("--levels", type=int, default=3)
    p_ref.add_argument("--dt-factor", type=float, default=2.0,
                       help="per-level time-step reduction (4 = dt ~ h^2 rule)")
    p_ref.set_defaults(func=cmd_refine)

    p_spec = subs.add_parser("spectrum", help="spectrum of the linearization")
    _add_common(p_spec)
    p_spec.add_argument("--block", default="neumann_laplacian",
                        choices=("stokes", "neumann_laplacian", "full_diag"))
    p_spec.add_argument("--k", type=int, default=None, help="how many eigenvalues (default m+2)")
    p_spec.set_defaults(func=cmd_spectrum)

    p_st = subs.add_parser("steady", help="steady director state by gradient flow")
    _add_common(p_st)
    p_st.set_defaults(func=cmd_steady)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
