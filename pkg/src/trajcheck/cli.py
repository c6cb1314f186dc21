"""Command-line interface: compile, verify, run, serve, bench.

Exit codes: 0 success, 1 inconsistency or violation found, 2 usage or input
error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from . import bench, config as config_mod, dsl, kernel, policy as policy_mod, scenario, wire
from .monitor import BUILTIN_CATALOG

EXIT_OK = 0
EXIT_FOUND = 1
EXIT_USAGE = 2
EXIT_IO = 3

DATA_DIR = Path(__file__).with_name("data")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _data_path(arg: str) -> Path:
    """Paths that do not exist fall back to the packaged data directory."""
    p = Path(arg)
    if p.exists():
        return p
    for candidate in (DATA_DIR / p, DATA_DIR / p.name, DATA_DIR / "fixtures" / p.name):
        if candidate.exists():
            return candidate
    raise CliError(f"no such file: {arg}", EXIT_IO)


def _load_model(arg: str) -> dsl.RuleModel:
    path = _data_path(arg)
    try:
        return dsl.parse_file(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None
    except dsl.RuleModelError as exc:
        raise CliError("\n".join(f"{path}:{d}" for d in exc.diagnostics), EXIT_USAGE) from None


def _load_config(arg: Optional[str]) -> config_mod.CheckerConfig:
    if arg is None:
        return config_mod.defaults()
    try:
        return config_mod.load(arg)
    except OSError as exc:
        raise CliError(f"cannot read {arg}: {exc}", EXIT_IO) from None
    except config_mod.ConfigError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def _load_policy(arg: Optional[str]) -> policy_mod.PolicyTree:
    path = arg or os.environ.get("TRAJCHECK_POLICY")
    if not path:
        return policy_mod.default_policy()
    try:
        return policy_mod.load_policy(path, expected_catalog=BUILTIN_CATALOG)
    except OSError as exc:
        raise CliError(f"cannot read policy {path}: {exc}", EXIT_IO) from None
    except policy_mod.PolicyFormatError as exc:
        raise CliError(f"bad policy file {path}: {exc}", EXIT_IO) from None


def _int_list(text: str) -> Tuple[int, ...]:
    out: List[int] = []
    for part in text.split(","):
        lo, sep, hi = part.partition("-")
        if sep:
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _float_list(text: str) -> Tuple[float, ...]:
    return tuple(float(p) for p in text.split(","))


# -------------------------------------------------------------- commands

def cmd_compile(args) -> int:
    model = _load_model(args.rules)
    try:
        tree = policy_mod.compile_model(model, minimize=not args.no_minimize)
    except policy_mod.InconsistentModelError:
        reports = policy_mod.check_consistency(model)
        for rep in reports:
            print(rep.describe())
        print(f"refusing to compile: {len(reports)} conflicting situation(s)", file=sys.stderr)
        return EXIT_FOUND
    except policy_mod.StateSpaceTooLarge as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    try:
        policy_mod.save_policy(tree, args.output)
    except OSError as exc:
        raise CliError(f"cannot write {args.output}: {exc}", EXIT_IO) from None
    print(f"wrote {args.output}: {tree.node_count} nodes, {len(tree.leaves)} leaves, "
          f"depth {tree.depth}")
    return EXIT_OK


def cmd_verify(args) -> int:
    model = _load_model(args.rules)
    try:
        reports = policy_mod.check_consistency(model, max_reports=args.max_reports)
    except policy_mod.StateSpaceTooLarge as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    if not reports:
        print(f"consistent: {model.catalog.state_space_size} situations checked")
        return EXIT_OK
    classes = policy_mod.conflict_classes(reports)
    for (rules, reason), members in classes.items():
        print(f"{reason}: {', '.join(sorted(rules))} ({len(members)} situation(s))")
        for rep in members:
            print(f"  {rep.describe()}")
    print(f"inconsistent: {len(classes)} conflict class(es), {len(reports)} situation(s)")
    return EXIT_FOUND


def cmd_run(args) -> int:
    try:
        spec = scenario.load(scenario.resolve(args.scenario))
    except scenario.ScenarioError as exc:
        code = EXIT_IO if "no scenario" in str(exc) or "cannot read" in str(exc) else EXIT_USAGE
        raise CliError(str(exc), code) from None
    tree = _load_policy(args.policy)
    cfg = _load_config(args.config)
    trace = scenario.run(spec, tree, cfg, closed_loop=args.closed_loop)
    try:
        if args.csv:
            with open(args.csv, "w", newline="", encoding="utf-8") as fh:
                scenario.write_csv(trace, fh)
        if args.jsonl:
            with open(args.jsonl, "w", encoding="utf-8") as fh:
                scenario.write_jsonl(trace, fh)
    except OSError as exc:
        raise CliError(f"cannot write trace: {exc}", EXIT_IO) from None
    summary = scenario.summarize(trace)
    print(" ".join(f"{k}={v}" for k, v in summary.items()))
    for t, gid in trace.collisions:
        print(f"collision with guest {gid} at t={t:.3f}s")
    if args.expect_clean and trace.collided:
        return EXIT_FOUND
    return EXIT_OK


def cmd_serve(args) -> int:
    tree = _load_policy(args.policy)
    cfg = _load_config(args.config)
    print(f"serving on {args.host}:{args.port} (backend {kernel.BACKEND}, "
          f"up to {args.max_connections} connections)", flush=True)
    try:
        wire.serve((args.host, args.port), tree, cfg, args.max_connections)
    except KeyboardInterrupt:
        pass
    except OSError as exc:
        raise CliError(f"cannot serve: {exc}", EXIT_IO) from None
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        bc = bench.BenchConfig(obstacles=_int_list(args.obstacles),
                               horizons=_float_list(args.horizons),
                               trajectories=_int_list(args.trajectories),
                               repetitions=args.reps, warmup=args.warmup)
    except (ValueError, bench.BenchError) as exc:
        raise CliError(f"invalid grid: {exc}", EXIT_USAGE) from None
    tree = _load_policy(args.policy)
    cfg = _load_config(args.config)
    backend = None if args.backend == "auto" else args.backend
    try:
        kernel.backend_module(backend)
    except RuntimeError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    rows = bench.run_bench(bc, tree, cfg, backend)
    try:
        if args.csv:
            with open(args.csv, "w", newline="", encoding="utf-8") as fh:
                bench.write_csv(rows, fh, backend)
        else:
            bench.write_csv(rows, sys.stdout, backend)
        if args.gnuplot:
            Path(args.gnuplot).write_text(bench.gnuplot_script(args.csv or "bench.csv"))
    except OSError as exc:
        raise CliError(f"cannot write results: {exc}", EXIT_IO) from None
    status = EXIT_OK
    for h, (slope, intercept, r2) in bench.obstacle_fits(rows).items():
        print(f"# horizon {h:g} s: median_us = {slope:.3f} * obstacles + {intercept:.3f}, "
              f"R^2 = {r2:.4f}", file=sys.stderr)
        if args.assert_linear and r2 < 0.95:
            status = EXIT_FOUND
    return status


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trajcheck", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile a rule model into a policy file")
    c.add_argument("rules")
    c.add_argument("-o", "--output", required=True)
    c.add_argument("--no-minimize", action="store_true", help="emit the unreduced tree")
    c.set_defaults(func=cmd_compile)

    v = sub.add_parser("verify", help="check a rule model for conflicts")
    v.add_argument("rules")
    v.add_argument("--max-reports", type=int, default=policy_mod.DEFAULT_MAX_REPORTS)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("run", help="replay a scenario through the checker")
    r.add_argument("scenario", help="scenario file or shipped name such as cut_in_1")
    r.add_argument("--closed-loop", action="store_true")
    r.add_argument("--policy")
    r.add_argument("--config")
    r.add_argument("--csv")
    r.add_argument("--jsonl")
    r.add_argument("--expect-clean", action="store_true", help="exit 1 on any collision")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("serve", help="answer check requests over TCP")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=wire.DEFAULT_PORT)
    s.add_argument("--policy")
    s.add_argument("--config")
    s.add_argument("--max-connections", type=int, default=wire.DEFAULT_MAX_CONNECTIONS)
    s.set_defaults(func=cmd_serve)

    b = sub.add_parser("bench", help="measure check_frame latency")
    b.add_argument("--csv")
    b.add_argument("--gnuplot", help="also write a gnuplot script for the CSV")
    b.add_argument("--obstacles", default="1-30")
    b.add_argument("--horizons", default="1,2,3,4,5")
    b.add_argument("--trajectories", default="1-10")
    b.add_argument("--reps", type=int, default=100)
    b.add_argument("--warmup", type=int, default=10)
    b.add_argument("--assert-linear", action="store_true",
                   help="exit 1 unless every horizon fits a line with R^2 >= 0.95")
    b.add_argument("--backend", choices=("auto", "cython", "python"), default="auto")
    b.add_argument("--policy")
    b.add_argument("--config")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"trajcheck: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
