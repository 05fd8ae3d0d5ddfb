"""Command-line front end.

Subcommands::

    chpfreq run SCENARIO      simulate, write <out>/<name>_mode<k>.csv and .json
    chpfreq compare SCENARIO  run both pump modes, write <out>/<name>_compare.json
    chpfreq verify SCENARIO   run and fail unless the dispatch matches the oracle
    chpfreq check SCENARIO    validate the scenario file only

``SCENARIO`` is a path or the name of a shipped fixture. Exit codes: 0 success,
1 invalid input, 2 numerical failure (including failed verification), 3 I/O.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .dynamics import simulate
from .errors import ChpError, NumericalError
from .report import build_run_report, compare_modes, write_csv, write_json
from .scenario import fixture_names, load_scenario

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser, *, mode=True):
    p.add_argument("scenario", help=f"scenario file or shipped fixture ({', '.join(fixture_names())})")
    if mode:
        p.add_argument("--mode", type=int, choices=(1, 2), help="pump mode (default: from file)")
    p.add_argument("--dt", type=float, help="integration step in s")
    p.add_argument("--t-end", type=float, help="horizon in s")
    p.add_argument("--settle-band", type=float, help="settling band on frequency deviation")
    p.add_argument("--out", default="out", help="output directory (default: out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chpfreq", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="simulate one scenario")
    _common(run)
    run.add_argument("--verify", action="store_true", help="exit nonzero if dispatch verification fails")
    _common(sub.add_parser("compare", help="run Mode 1 and Mode 2 side by side"), mode=False)
    _common(sub.add_parser("verify", help="run and verify the dispatch against the oracle"))
    chk = sub.add_parser("check", help="validate a scenario file")
    chk.add_argument("scenario")
    return parser


def _settings(scenario, args):
    kw = {}
    if args.dt is not None:
        kw["dt"] = args.dt
    if args.t_end is not None:
        kw["t_end"] = args.t_end
    if getattr(args, "mode", None) is not None:
        kw["mode"] = args.mode
    return kw


def _cmd_run(args, verify: bool) -> int:
    sc = load_scenario(args.scenario)
    traj = simulate(sc, **_settings(sc, args))
    report = build_run_report(traj, args.settle_band)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{sc.name}_mode{report.mode}"
    csv_path = write_csv(traj, out / f"{stem}.csv")
    json_path = write_json(report.as_dict(), out / f"{stem}.json")
    disp = report.dispatch
    if "error" in disp:
        status = f"not verified ({disp['error']})"
    else:
        status = f"{'pass' if disp['passed'] else 'FAIL'} (max diff {disp['max_abs_diff']:.3g})"
    print(f"wrote {csv_path} and {json_path}")
    print(f"omega_bar = {report.omega_bar:.6g}, Tbar = {report.tbar:.6g}, dispatch: {status}")
    if verify and not report.dispatch_passed:
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_compare(args) -> int:
    sc = load_scenario(args.scenario)
    result, _ = compare_modes(sc, dt=args.dt, t_end=args.t_end, band=args.settle_band)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = write_json(result, out / f"{sc.name}_compare.json")
    print(f"wrote {path}")
    for mode, row in result["modes"].items():
        peak = max(row["max_deviation"].values(), default=0.0)
        print(
            f"mode {mode}: omega_bar = {row['omega_bar']:.6g}, max |omega| = {peak:.6g}, "
            f"C1 = {row['objective_C1']:.6g}, C2 = {row['objective_C2']:.6g}"
        )
    return EXIT_OK


def _cmd_check(args) -> int:
    sc = load_scenario(args.scenario)
    print(
        f"{sc.name}: {sc.electric.n_bus} buses, {sc.heat.n_edges} heat edges, "
        f"{sc.coupling.n_pumps} pumps, {len(sc.disturbances)} disturbances: ok"
    )
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args, verify=args.verify)
        if args.command == "verify":
            return _cmd_run(args, verify=True)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_check(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ChpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
