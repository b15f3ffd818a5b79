"""Command-line entry point: ``microgrid-euc {solve,sweep,validate,verify-oracle}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .analysis import SweepError, default_psi_grid, reference_comparison, run_case, sweep_carbon_tax
from .bnb import BnbOptions, solve_mip
from .caseio import CaseFileError, load_case, paper_case, render_report
from .formulation import PwlConfig, build_uc_mip
from .model import Schedule, validate_schedule
from .oracle import oracle_solve, random_cases

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _case(args):
    case = paper_case() if args.case == "bundled" else load_case(args.case)
    if getattr(args, "no_cap", False):
        case = case.without_cap()
    if getattr(args, "psi", None) is not None:
        case = case.with_psi(args.psi)
    return case


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _options(args) -> BnbOptions:
    if args.gap is None:
        return BnbOptions()
    return BnbOptions(abs_gap=args.gap)


def cmd_solve(args) -> int:
    case = _case(args)
    report = run_case(case, args.mode, pwl=PwlConfig(args.pwl_segments), options=_options(args))
    if report.schedule is not None or args.format == "json":
        _emit(render_report(report, args.format), args.out)
    print(f"{args.mode}: status={report.status} total=${report.total_cost:.6f} "
          f"emissions={report.emissions_kg:.6f} kg nodes={report.mip.nodes} "
          f"time={report.wall_time:.2f}s", file=sys.stderr)
    if report.status == "infeasible" and case.emission.kappa_max is not None:
        print("hint: the emission cap may be unattainable; retry with --no-cap", file=sys.stderr)
    return EXIT_OK if report.optimal else EXIT_FAIL


def cmd_sweep(args) -> int:
    case = _case(args)
    psi = default_psi_grid(args.psi_from, args.psi_to, args.psi_step)
    try:
        rows = sweep_carbon_tax(case, psi, pwl=PwlConfig(args.pwl_segments), options=_options(args))
    except SweepError as err:
        print(f"sweep aborted: {err}", file=sys.stderr)
        if case.emission.kappa_max is not None:
            print("hint: the emission cap may be unattainable; retry with --no-cap", file=sys.stderr)
        return EXIT_FAIL
    reference = reference_comparison(rows) if args.format == "json" else None
    _emit(render_report(rows, args.format, reference), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    case = _case(args)
    data = json.loads(Path(args.schedule).read_text(encoding="utf-8"))
    if "schedule" in data:  # a full run report
        data = data["schedule"]
    schedule = Schedule.from_dict(data)
    violations = validate_schedule(case, schedule, args.tol)
    for v in violations:
        print(v)
    print(f"{len(violations)} violation(s)")
    return EXIT_OK if not violations else EXIT_FAIL


def cmd_verify_oracle(args) -> int:
    failures = 0
    start = time.perf_counter()
    for i, case in enumerate(random_cases(args.seed, args.cases)):
        for mode in ("euc", "cuc"):
            ref = oracle_solve(case, mode, args.fine_k)
            inst, _ = build_uc_mip(case, mode, PwlConfig(args.fine_k))
            got = solve_mip(inst)
            diff = abs(got.objective - ref.objective)
            ok = diff <= 1e-6 * (1 + abs(ref.objective))
            failures += not ok
            print(f"case {i:3d} H={case.H} {mode}: oracle={ref.objective:.9f} bnb={got.objective:.9f} "
                  f"patterns={ref.patterns_enumerated} {'ok' if ok else 'MISMATCH'}")
    print(f"{2 * args.cases - failures}/{2 * args.cases} agree in {time.perf_counter() - start:.1f}s")
    return EXIT_OK if failures == 0 else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="microgrid-euc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def case_args(p):
        p.add_argument("--case", required=True, help="case JSON path, or 'bundled' for the shipped case")
        p.add_argument("--no-cap", action="store_true", help="drop the emission cap")

    def solver_args(p):
        p.add_argument("--pwl-segments", type=int, default=8, metavar="K")
        p.add_argument("--gap", type=float, default=None, help="absolute optimality gap ($)")

    p = sub.add_parser("solve", help="solve one mode")
    case_args(p)
    solver_args(p)
    p.add_argument("--mode", choices=("euc", "cuc"), required=True)
    p.add_argument("--psi", type=float, default=None, help="override the carbon tax rate ($/kg)")
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="carbon-tax sweep")
    case_args(p)
    solver_args(p)
    p.add_argument("--psi-from", type=float, default=0.009)
    p.add_argument("--psi-to", type=float, default=0.139)
    p.add_argument("--psi-step", type=float, default=0.010)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a schedule against a case")
    case_args(p)
    p.add_argument("--schedule", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("verify-oracle", help="compare branch-and-bound with enumeration")
    p.add_argument("--seed", type=int, default=20240611)
    p.add_argument("--cases", type=int, default=52)
    p.add_argument("--fine-k", type=int, default=8)
    p.set_defaults(func=cmd_verify_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CaseFileError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
