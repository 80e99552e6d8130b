"""Command-line entry point: solve, oracle, verify, generate, simulate."""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any, Sequence, TextIO

import numpy as np

from . import amb, gen, linear, oracle
from .io import FormatError, dump_instance, dump_mechanism, load_instance, load_mechanism
from .lp import LpError
from .model import Instance, SolveReport, check_ic, principal_utility, validate_instance, with_best_responses

EXIT_OK, EXIT_VERIFY, EXIT_ARGS, EXIT_PARSE, EXIT_SOLVER = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def fmt(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    try:
        return format(float(x), ".12g")
    except (TypeError, ValueError):
        return str(x)


def _round(obj: Any) -> Any:
    """Numbers rounded to 12 significant digits for machine-readable output."""
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return bool(obj) if isinstance(obj, np.bool_) else obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    try:
        return float(format(float(obj), ".12g"))
    except (TypeError, ValueError):
        return str(obj)


# ---------------------------------------------------------------------------
# input helpers


def _read(path: str | None, stdin: TextIO, what: str) -> str:
    if path is None or path == "-":
        return stdin.read()
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"cannot read {what} {path!r}: {exc}") from exc


def _write(path: str | None, text: str, stdout: TextIO) -> None:
    if path is None or path == "-":
        stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _instance(args: argparse.Namespace, stdin: TextIO) -> Instance:
    text = _read(args.instance, stdin, "instance")
    try:
        inst = load_instance(text)
    except FormatError as exc:
        raise CliError(EXIT_PARSE, f"instance: {exc}") from exc
    problems = validate_instance(inst)
    if problems:
        raise CliError(EXIT_PARSE, "invalid instance:\n  " + "\n  ".join(problems))
    return inst


def _mechanism(args: argparse.Namespace, inst: Instance, stdin: TextIO):
    text = _read(args.mechanism, stdin, "mechanism")
    try:
        return load_mechanism(inst, text)
    except (FormatError, ValueError) as exc:
        raise CliError(EXIT_PARSE, f"mechanism: {exc}") from exc


# ---------------------------------------------------------------------------
# output


def _emit(report: dict[str, Any], as_json: bool, stdout: TextIO) -> None:
    if as_json:
        stdout.write(json.dumps(_round(report), sort_keys=True, indent=2) + "\n")
        return
    for key, value in report.items():
        if isinstance(value, dict):
            stdout.write(f"{key}:\n")
            for k2, v2 in value.items():
                if isinstance(v2, (dict, list)):
                    continue
                stdout.write(f"  {k2}: {fmt(v2) if v2 is not None else 'none'}\n")
        elif isinstance(value, list):
            stdout.write(f"{key}:\n")
            for row in value:
                if isinstance(row, dict):
                    stdout.write("  " + "  ".join(f"{k}={fmt(v)}" for k, v in row.items()) + "\n")
                else:
                    stdout.write(f"  {fmt(row)}\n")
        else:
            stdout.write(f"{key}: {fmt(value) if value is not None else 'none'}\n")


def _report_doc(rep: SolveReport) -> dict[str, Any]:
    return {
        "lp_value": rep.lp_value,
        "utility": rep.utility,
        "ic_violation": rep.ic_violation,
        "num_signals": rep.mechanism.scheme.num_signals,
        "payments": rep.mechanism.payments.kind,
        "params": {k: v for k, v in rep.params.items()},
        "diagnostics": dict(rep.diagnostics),
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    inst = _instance(args, stdin)
    if args.mode == "amb":
        rep = amb.solve_amb(inst, args.zeta)
    elif args.mode == "linear-single":
        rep = linear.solve_single_linear(inst, args.epsilon)
    elif args.mode == "linear-menu":
        rep = linear.solve_menu_linear(inst, args.epsilon)
    else:
        if args.K is None or args.bound is None:
            raise CliError(EXIT_ARGS, "kuniform mode needs --K and --bound")
        rep = oracle.solve_kuniform(inst, oracle.KUniformParams(args.K, args.bound, args.epsilon_target))
    if args.out:
        _write(args.out, dump_mechanism(inst, rep.mechanism), stdout)
    _emit({"mode": args.mode, **_report_doc(rep)}, args.json, stdout)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    inst = _instance(args, stdin)
    grid = oracle.default_grid(inst, args.grid_step, args.bound, args.budget)
    if args.mode == "single":
        rep = oracle.oracle_single(inst, grid)
    else:
        rep = oracle.oracle_menu(inst, grid)
    if args.out:
        _write(args.out, dump_mechanism(inst, rep.mechanism), stdout)
    _emit({"mode": f"oracle-{args.mode}", **_report_doc(rep)}, args.json, stdout)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    if args.instance in (None, "-") and args.mechanism in (None, "-"):
        raise CliError(EXIT_ARGS, "at most one of --instance/--mechanism may come from stdin")
    inst = _instance(args, stdin)
    mech = _mechanism(args, inst, stdin)
    if mech.recommendations is None:
        mech = with_best_responses(inst, mech)
    report = check_ic(inst, mech, args.tol)
    rows = [
        {
            "signal": r.signal,
            "action": inst.actions[r.action],
            "deviation": inst.actions[r.deviation],
            "violation": r.violation,
            "probability": r.probability,
        }
        for r in report.per_signal
    ]
    _emit(
        {
            "ic": report.ic,
            "max_violation": report.max_violation,
            "ir_ok": report.ir_ok,
            "tol": args.tol,
            "utility": principal_utility(inst, mech),
            "signals": rows,
        },
        args.json,
        stdout,
    )
    return EXIT_OK if report.ic else EXIT_VERIFY


def _graph(path: str | None) -> gen.Graph:
    if path is None:
        raise CliError(EXIT_ARGS, "--graph is required for this kind")
    text = _read(path, sys.stdin, "graph")
    try:
        return gen.parse_graph(text)
    except ValueError as exc:
        raise CliError(EXIT_PARSE, f"graph: {exc}") from exc


def cmd_generate(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    try:
        if args.kind == "prop2":
            inst = gen.gen_prop2(args.exact)
        elif args.kind == "prop4":
            inst = gen.gen_prop4(args.delta, args.exact)
        elif args.kind == "menu-hard":
            inst = gen.gen_menu_hardness(_graph(args.graph), require_integral=not args.any_size)
        elif args.kind == "single-hard":
            inst = gen.gen_single_hardness(_graph(args.graph), args.exact)
        else:
            inst = gen.gen_random(args.n, args.m, args.states, args.seed, args.reward_bound)
    except CliError:
        raise
    except ValueError as exc:
        raise CliError(EXIT_ARGS, str(exc)) from exc
    _write(args.out, dump_instance(inst), stdout)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    if args.instance in (None, "-") and args.mechanism in (None, "-"):
        raise CliError(EXIT_ARGS, "at most one of --instance/--mechanism may come from stdin")
    inst = _instance(args, stdin)
    mech = _mechanism(args, inst, stdin)
    mean, se = oracle.simulate(inst, mech, args.samples, args.seed, threads=args.threads)
    _emit(
        {"samples": args.samples, "seed": args.seed, "mean": mean, "stderr": se,
         "analytic": principal_utility(inst, mech)},
        args.json,
        stdout,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _positive(kind):
    def parse(text: str):
        try:
            v = kind(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
        if not v > 0:
            raise argparse.ArgumentTypeError("must be positive")
        return v

    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jointdesign", description=__doc__)
    p.add_argument("--threads", type=_positive(int), default=os.cpu_count() or 1,
                   help="worker threads for sampling (results do not depend on it)")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print one JSON document")

    s = sub.add_parser("solve", parents=[common], help="run a solver on an instance")
    s.add_argument("--mode", required=True, choices=["amb", "linear-single", "linear-menu", "kuniform"])
    s.add_argument("--instance", help="instance file (default: stdin)")
    s.add_argument("--zeta", type=_positive(float), default=0.01)
    s.add_argument("--epsilon", type=_positive(float), default=0.05)
    s.add_argument("--K", type=_positive(int))
    s.add_argument("--bound", type=_positive(float))
    s.add_argument("--epsilon-target", type=_positive(float), help="kuniform: report the worst-case K for this gap")
    s.add_argument("--out", help="write the mechanism here")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle", parents=[common], help="brute-force lattice baselines")
    o.add_argument("--mode", required=True, choices=["single", "menu"])
    o.add_argument("--instance")
    o.add_argument("--grid-step", type=_positive(float), required=True)
    o.add_argument("--bound", type=_positive(float), help="payment bound (default: per-outcome cap)")
    o.add_argument("--budget", type=_positive(int), default=oracle.DEFAULT_BUDGET)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    v = sub.add_parser("verify", parents=[common], help="check incentive compatibility")
    v.add_argument("--instance")
    v.add_argument("--mechanism")
    v.add_argument("--tol", type=float, default=1e-9)
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("generate", help="write an instance")
    g.add_argument("--kind", required=True, choices=["prop2", "prop4", "menu-hard", "single-hard", "random"])
    g.add_argument("--delta", type=float, default=0.1)
    g.add_argument("--graph", help="graph file: '|V| |E|' then 'u v' lines")
    g.add_argument("--any-size", action="store_true", help="menu-hard: allow |V| not divisible by 900")
    g.add_argument("--exact", action="store_true", help="write rationals instead of doubles")
    g.add_argument("--n", type=_positive(int), default=3)
    g.add_argument("--m", type=_positive(int), default=3)
    g.add_argument("--states", type=_positive(int), default=3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--reward-bound", type=_positive(float), default=1.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    m = sub.add_parser("simulate", parents=[common], help="Monte Carlo replay of a mechanism")
    m.add_argument("--instance")
    m.add_argument("--mechanism")
    m.add_argument("--samples", type=_positive(int), default=100_000)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_simulate)
    return p


def run(argv: Sequence[str] | None = None, stdin: TextIO | None = None, stdout: TextIO | None = None,
        stderr: TextIO | None = None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_ARGS
    try:
        return args.func(args, stdin, stdout)
    except CliError as exc:
        stderr.write(f"error: {exc}\n")
        return exc.code
    except (LpError, oracle.BudgetExceeded) as exc:
        stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run())
