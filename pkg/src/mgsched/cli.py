"""Command-line entry point: solve one variant or run the benchmark suite.

Exit codes: 0 success (optimal or within-gap incumbent), 2 infeasible,
3 case parse/validation failure, 4 solver failure.  Diagnostics go to
stderr; artifacts to --out.
"""

from __future__ import annotations

import argparse
import os
import sys

from .case import CaseError, load_case
from .conic.bnb import branch_and_bound
from .conic.textio import serialize
from .model.build import BuildConfig, assemble, extract_schedule
from .report import emit_report, write_csv
from .validate import (evaluate_evp, post_islanding_metrics, relaxation_gap,
                       run_benchmark, sample_errors)

EXIT_OK, EXIT_INFEASIBLE, EXIT_PARSE, EXIT_SOLVER = 0, 2, 3, 4


def _common_flags(sp):
    sp.add_argument("--case", required=True, help="case JSON path")
    sp.add_argument("--variant", default="m3", choices=("m1", "m2", "m3"))
    sp.add_argument("--mode", default="ewdrcc", choices=("gauss", "ewdrcc"))
    sp.add_argument("--theta", type=float, default=None,
                    help="ambiguity radius override")
    sp.add_argument("--eps", type=float, default=None,
                    help="violation level override (all families)")
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--samples-in", type=int, default=100)
    sp.add_argument("--samples-out", type=int, default=10000)
    sp.add_argument("--mip-gap", type=float, default=0.02)
    sp.add_argument("--out", default="out")
    sp.add_argument("--export-program", action="store_true",
                    help="also write the assembled program in text form")
    sp.add_argument("--node-limit", type=int, default=20000)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mgsched",
        description="robust frequency-constrained microgrid scheduling")
    sub = ap.add_subparsers(dest="command", required=True)
    _common_flags(sub.add_parser("solve", help="solve one variant"))
    bench = sub.add_parser("benchmark", help="variant comparison suite")
    _common_flags(bench)
    bench.add_argument("--variants", default="m1,m2,m3",
                       help="comma-separated subset of m1,m2,m3")
    bench.add_argument("--gap-repeats", type=int, default=1,
                       help="repeat solves for the relaxation-gap table")
    return ap


def _config_dict(args) -> dict:
    keep = ("command", "case", "variant", "mode", "theta", "eps", "seed",
            "samples_in", "samples_out", "mip_gap")
    return {k: getattr(args, k) for k in keep if getattr(args, k, None)
            is not None}


def _load(args):
    try:
        return load_case(args.case)
    except FileNotFoundError:
        print(f"case file not found: {args.case}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)
    except CaseError as exc:
        print(f"case error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)


def cmd_solve(args) -> int:
    case = _load(args)
    try:
        cfg = BuildConfig(variant=args.variant, mode=args.mode,
                          theta=args.theta, eps=args.eps,
                          mip_gap=args.mip_gap)
        build = assemble(case, cfg)
    except ValueError as exc:
        print(f"build error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    os.makedirs(args.out, exist_ok=True)
    config = _config_dict(args)
    if args.export_program:
        serialize(build.prog, os.path.join(args.out, "program.txt"))
    res = branch_and_bound(build.prog, gap=args.mip_gap,
                           node_limit=args.node_limit,
                           priority=build.branch_priority(),
                           warm=build.warm_start_fixes)
    if res.status == "infeasible":
        print("status: infeasible", file=sys.stderr)
        return EXIT_INFEASIBLE
    if res.x is None:
        print(f"status: {res.status} (no incumbent)", file=sys.stderr)
        return EXIT_SOLVER
    sched = extract_schedule(build, res)
    T = case.horizon.periods
    rows = []
    for t in range(T):
        row = [t, sched.val("u", t), sched.val("pex", t),
               sched.val("qex", t), sched.val("RGU", t), sched.val("RGD", t),
               sched.val("REU", t), sched.val("RED", t)]
        for k, _g in case.active_dgs():
            row += [sched.val("x", k, t), sched.val("gp", k, t)]
        for k, _b in case.active_batteries():
            row += [sched.val("pch", k, t), sched.val("pdch", k, t),
                    sched.val("e", k, t)]
        for k, _s in case.active_renewables():
            row += [sched.val("delta", k, t)]
        rows.append(row)
    cols = ["hour", "u", "pex", "qex", "rgu", "rgd", "reu", "red"]
    for k, g in case.active_dgs():
        cols += [f"x_dg{g.node}", f"gp_dg{g.node}"]
    for k, b in case.active_batteries():
        cols += [f"pch_b{b.node}", f"pdch_b{b.node}", f"soc_b{b.node}"]
    for k, s in case.active_renewables():
        cols += [f"delta_r{s.node}"]
    write_csv(os.path.join(args.out, "schedule.csv"), cols, rows, config)
    brk = sorted(sched.cost_breakdown)
    write_csv(os.path.join(args.out, "costs.csv"),
              ["variant", "status", "total"] + brk,
              [[args.variant, res.status, sched.objective]
               + [sched.cost_breakdown[g] for g in brk]], config)
    print(f"status: {res.status}  objective: {sched.objective:.6f}  "
          f"gap: {res.gap:.2e}")
    if args.variant != "m2":
        print(f"relaxation gap: {relaxation_gap(sched):.3e}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    case = _load(args)
    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    for v in variants:
        if v not in ("m1", "m2", "m3"):
            print(f"unknown variant {v!r}", file=sys.stderr)
            return EXIT_PARSE
    rep = run_benchmark(case, variants=variants, mode=args.mode, eps=args.eps,
                        theta=args.theta, seed=args.seed,
                        samples_in=args.samples_in,
                        samples_out=args.samples_out,
                        mip_gap=args.mip_gap, gap_repeats=args.gap_repeats,
                        node_limit=args.node_limit)
    config = _config_dict(args)
    config["rocof_max"] = case.freq.rocof_max
    config["df_max"] = case.freq.df_max
    files = emit_report(rep, args.out, config)
    failures = [f"{k}: {r.status}" for k, r in rep.variants.items()
                if r.schedule is None]
    for line in failures:
        print("variant failed:", line, file=sys.stderr)
    print(f"wrote {len(files)} artifacts to {args.out}")
    if len(failures) == len(rep.variants):
        return EXIT_SOLVER
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args)
    return cmd_benchmark(args)


if __name__ == "__main__":
    raise SystemExit(main())
