"""Command-line entry point: ``firal run|theory|check|bench``.

Exit codes: 0 success, 2 invalid input or configuration, 3 solver
non-convergence.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .checks import CERTIFICATES
from .errors import ConvergenceError
from .harness import BENCH_PLAN, load_config, run_active_learning, run_bench_plan, write_record
from .strategies import KINDS
from .theory import SHIPPED_SPECS, VALIDATORS

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3


def _write_json(out: str | None, name: str, payload: dict):
    text = json.dumps(payload, indent=1)
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        (path / name).write_text(text + "\n", encoding="utf-8")
    return text


def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.strategy is not None:
        config.strategy = replace(config.strategy, kind=args.strategy)
    record = run_active_learning(config, base_dir=Path(args.config).parent)
    out = args.out or "."
    paths = write_record(record, out)
    last = record.iterations[-1]
    print(f"{config.strategy.kind}: {last['n_labeled']} labels, accuracy {last['accuracy']:.4f}, "
          f"FIR {last['fir']:.6g}")
    for p in paths.values():
        print(p)
    return EXIT_OK


def cmd_theory(args) -> int:
    kwargs = {"seed": args.seed if args.seed is not None else 0}
    if args.reps is not None:
        kwargs["reps"] = args.reps
    spec = SHIPPED_SPECS[args.spec](**kwargs)
    names = list(VALIDATORS) if args.name == "all" else [args.name]
    reports = {}
    all_passed = True
    for name in names:
        rep = VALIDATORS[name](spec)
        reports[name] = rep.to_dict()
        all_passed &= rep.passed
        for c in rep.checks:
            status = "report" if c.passed is None else ("pass" if c.passed else "FAIL")
            print(f"{name:<14} {c.name:<32} {status:<6} estimate={c.estimate:.6g} target={c.target:.6g}")
    _write_json(args.out, "theory.json", {"spec": spec.to_dict(), "reports": reports})
    return EXIT_OK if all_passed else 1


def cmd_check(args) -> int:
    seed = args.seed if args.seed is not None else 0
    names = list(CERTIFICATES) if args.name == "all" else [args.name]
    results = {name: CERTIFICATES[name](seed=seed) for name in names}
    for name, res in results.items():
        print(f"{name:<14} {'pass' if res['passed'] else 'FAIL'}  {json.dumps(res)}")
    _write_json(args.out, "checks.json", results)
    return EXIT_OK if all(r["passed"] for r in results.values()) else 1


def cmd_bench(args) -> int:
    plan = BENCH_PLAN
    if args.strategy:
        plan = tuple(
            {**g, "strategies": [s for s in g["strategies"] if s == args.strategy]}
            for g in plan if args.strategy in g["strategies"]
        )
        if not plan:
            raise ValueError(f"no benchmark group contains {args.strategy!r}")
    report = run_bench_plan(plan, reps=args.reps, seed=args.seed if args.seed is not None else 0)
    print(report.table())
    print(f"monotone in pool size: {json.dumps(report.monotone)}")
    print(f"elapsed: {report.elapsed:.1f} s")
    _write_json(args.out, "bench.json", report.to_dict())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="firal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("run", help="run the active-learning loop from a JSON config")
    p.add_argument("--config", required=True, help="JSON config (schema v1)")
    p.add_argument("--strategy", choices=KINDS, default=None, help="override the strategy kind")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("theory", help="run Monte-Carlo validators")
    p.add_argument("--name", choices=["all", *VALIDATORS], default="all")
    p.add_argument("--spec", choices=list(SHIPPED_SPECS), default="four_point")
    p.add_argument("--reps", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("check", help="submodularity, Nemhauser and trace-inequality certificates")
    p.add_argument("--name", choices=["all", *CERTIFICATES], default="all")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="time the selection strategies over pool and batch sizes")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--strategy", default=None, help="benchmark a single strategy")
    common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
