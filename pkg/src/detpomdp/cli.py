"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 model or input error, 3 a size cap
was hit, 4 an internal invariant failed.  Payloads go to stdout and
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from fractions import Fraction
from pathlib import Path

from .analysis import check_separated_dpomdp, verify_bounds
from .measure import Belief, make_belief
from .model import (
    PRESETS,
    ModelError,
    ModelValidationError,
    TankParams,
    gen_random,
    gen_tank,
    gen_tight_bound,
    load_model,
    serialize_model,
    validate_model,
)
from .reachability import DEFAULT_BELIEF_CAP, DEFAULT_CLOSURE_CAP, CapExceeded, reachable_layers
from .solver import DEFAULT_ORACLE_CAP, INFEASIBLE, SimulationAborted, brute_force_value, simulate, solve

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_CAP, EXIT_INTERNAL = 0, 1, 2, 3, 4

REACHABLE_COLUMNS = ("t", "layer_size", "cumulative_size", "cemetery_reached")
SIMULATE_COLUMNS = ("t", "state", "observation", "control", "step_cost", "supp_min", "supp_max", "supp_size")

log = logging.getLogger("detpomdp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt_value(v) -> str:
    if isinstance(v, float):
        return "inf" if v > 0 else "-inf"
    return str(Fraction(v))


def fmt_decimal(v) -> str:
    if isinstance(v, float):
        return "inf"
    return f"{float(Fraction(v)):.6f}"


def parse_belief_literal(text: str, model) -> Belief:
    """Belief from a file or an inline literal.

    Accepted forms: a path to a JSON object, an inline JSON object, or
    ``label=p/q,label=p/q``.  Labels are state labels of the model.
    """
    path = Path(text)
    if path.is_file():
        text = path.read_text()
    text = text.strip()
    try:
        if text.startswith("{"):
            raw = json.loads(text)
        else:
            raw = {}
            for part in filter(None, (p.strip() for p in text.split(","))):
                label, sep, value = part.partition("=")
                if not sep:
                    raise ValueError(f"expected label=weight, got {part!r}")
                raw[label.strip()] = value.strip()
        weights = {}
        for label, value in raw.items():
            if str(label) not in model.states:
                raise ValueError(f"unknown state label {label!r}")
            weights[model.state_index(label)] = str(value)
        return make_belief(weights)
    except (ValueError, ZeroDivisionError, json.JSONDecodeError) as exc:
        raise ModelError(f"bad belief: {exc}") from None


def format_belief(model, b: Belief) -> str:
    if b.is_cemetery:
        return "CEMETERY"
    return ",".join(f"{model.states[x]}={p}" for x, p in b.probabilities().items())


def _emit_rows(rows, fmt: str, out) -> None:
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("field", "value"))
        w.writerows(rows)
    else:
        for k, v in rows:
            out.write(f"{k}: {v}\n")


def _emit_table(columns, rows, fmt: str, out) -> None:
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
    else:
        widths = [max(len(str(c)), *(len(str(r[i])) for r in rows)) if rows else len(c)
                  for i, c in enumerate(columns)]
        out.write("  ".join(str(c).rjust(wd) for c, wd in zip(columns, widths)) + "\n")
        for r in rows:
            out.write("  ".join(str(v).rjust(wd) for v, wd in zip(r, widths)) + "\n")


# ---------------------------------------------------------------- helpers

def _load(args):
    if not args.model:
        raise UsageError("--model is required")
    return load_model(args.model)


def _belief(args, model) -> Belief:
    if args.belief:
        return parse_belief_literal(args.belief, model)
    if model.initial_belief is None:
        raise UsageError("the model has no initial belief; pass --belief")
    return model.initial_belief


def _sizes(text: str) -> tuple:
    try:
        sizes = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--sizes expects four integers like 3,2,2,3, got {text!r}") from None
    if len(sizes) != 4 or min(sizes) < 1:
        raise UsageError(f"--sizes expects four positive integers |X|,|U|,|O|,T, got {text!r}")
    return sizes


# ---------------------------------------------------------------- commands

def cmd_validate(args, out) -> int:
    try:
        model = _load(args)
    except ModelValidationError as exc:
        for severity, where, message in exc.report.issues:
            out.write(f"{severity}: {where}: {message}\n")
        return EXIT_MODEL
    for severity, where, message in validate_model(model).issues:
        out.write(f"{severity}: {where}: {message}\n")
    out.write("ok\n")
    return EXIT_OK


def cmd_generate(args, out) -> int:
    if args.kind == "tank":
        preset = PRESETS[args.preset]
        params = TankParams(**{**preset.__dict__, "belief_seed": args.belief_seed})
        if args.horizon is not None:
            params = TankParams(**{**params.__dict__, "horizon": args.horizon})
        model = gen_tank(params)
    elif args.kind == "tight-bound":
        if args.n < 3:
            raise UsageError("--n must be at least 3")
        model = gen_tight_bound(args.n, args.horizon)
    else:
        model = gen_random(
            args.seed, _sizes(args.sizes),
            affine=args.affine, product=args.product,
            full_admissibility=args.full_admissibility,
            inf_cost_rate=args.inf_cost_rate,
            stationary=not args.nonstationary,
        )
    text = serialize_model(model)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        out.write(text)
    return EXIT_OK


def cmd_solve(args, out) -> int:
    model = _load(args)
    b0 = _belief(args, model)
    start = time.perf_counter()
    sol = solve(model, b0, cap=args.cap_beliefs)
    elapsed = time.perf_counter() - start
    v0 = sol.value0
    u0 = sol.action(0, b0) if model.horizon > 0 else None
    rows = [
        ("value", fmt_value(v0)),
        ("value_decimal", fmt_decimal(v0)),
        ("first_control", "" if u0 in (None, INFEASIBLE) else model.controls[u0]),
        ("reachable_beliefs", len(sol.reach.beliefs)),
        ("seconds", f"{elapsed:.3f}"),
    ]
    _emit_rows(rows, args.format, out)
    return EXIT_OK


def cmd_reachable(args, out) -> int:
    model = _load(args)
    b0 = _belief(args, model)
    reach = reachable_layers(model, b0, args.t_max, admissible_only=args.admissible_only,
                             cap=args.cap_beliefs)
    sizes = reach.layer_sizes()
    cumulative = reach.cumulative_sizes(0)
    flags = reach.cemetery_reached()
    rows = [(t, sizes[t], cumulative[t], str(flags[t]).lower()) for t in range(len(sizes))]
    _emit_table(REACHABLE_COLUMNS, rows, args.format, out)
    union = reach.cumulative_sizes(1)[-1] if reach.depth >= 1 else 0
    print(f"union [1,{reach.depth}]: {union}; union [0,{reach.depth}]: {cumulative[-1]}", file=sys.stderr)
    return EXIT_OK


def cmd_bounds(args, out) -> int:
    model = _load(args)
    b0 = _belief(args, model)
    report = verify_bounds(model, b0, cap_beliefs=args.cap_beliefs, closure_cap=args.cap_closure)
    _emit_rows(report.rows(), args.format, out)
    if not report.ok:
        print(f"bound violated: {', '.join(report.violations)}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def _path_text(model, path) -> str:
    steps = []
    for k in path:
        u = model.controls[k.u]
        steps.append(f"{k.t}:{u}" if k.o < 0 else f"{k.t}:{u}/{model.observations[k.o]}")
    return " ".join(steps)


def cmd_check_separated(args, out) -> int:
    model = _load(args)
    verdict = check_separated_dpomdp(model, closure_cap=args.cap_closure)
    rows = [
        ("status", verdict.status),
        ("restricted_to_admissible", str(verdict.restricted_to_admissible).lower()),
    ]
    w = verdict.witness
    if w is not None:
        rows += [
            ("witness_path1", _path_text(model, w.path1)),
            ("witness_path2", _path_text(model, w.path2)),
            ("witness_agree_at", model.states[w.agree_at]),
            ("witness_differ_at", model.states[w.differ_at]),
        ]
    rows += [(f"trace{i}", line) for i, line in enumerate(verdict.trace)]
    _emit_rows(rows, args.format, out)
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    model = _load(args)
    b0 = _belief(args, model)
    if args.x0 is None:
        raise UsageError("--x0 is required")
    if str(args.x0) not in model.states:
        raise ModelError(f"unknown state label {args.x0!r}")
    x0 = model.state_index(args.x0)
    sol = solve(model, b0, cap=args.cap_beliefs)
    try:
        records, total = simulate(model, sol, x0, b0)
    except SimulationAborted as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_MODEL if x0 not in b0.states else EXIT_INTERNAL
    rows = []
    for r in records:
        rows.append((
            r.t, model.states[r.state],
            "" if r.observation is None else model.observations[r.observation],
            "" if r.control is None else model.controls[r.control],
            fmt_value(r.step_cost), model.states[r.supp_min], model.states[r.supp_max], r.supp_size,
        ))
    _emit_table(SIMULATE_COLUMNS, rows, args.format, out)
    print(f"total cost: {fmt_value(total)}", file=sys.stderr)
    return EXIT_OK


def cmd_oracle_check(args, out) -> int:
    sizes = _sizes(args.sizes)
    passed = failed = skipped = 0
    for k in range(args.count):
        seed = args.seed + k
        model = gen_random(seed, sizes, inf_cost_rate=args.inf_cost_rate)
        try:
            oracle = brute_force_value(model, cap=args.cap_oracle)
        except CapExceeded:
            skipped += 1
            continue
        value = solve(model).value0
        if value == oracle:
            passed += 1
        else:
            failed += 1
            print(f"seed {seed}: solve={fmt_value(value)} oracle={fmt_value(oracle)}", file=sys.stderr)
    _emit_rows([("passed", passed), ("failed", failed), ("skipped", skipped)], args.format, out)
    return EXIT_INTERNAL if failed else EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--model", help="model document (JSON)")
    common.add_argument("--belief", help="initial belief: file, JSON object or label=p/q,...; overrides the model's")
    common.add_argument("--threads", type=int, default=1,
                        help="accepted for interface compatibility; work runs in one thread")
    common.add_argument("--cap-beliefs", type=int, default=DEFAULT_BELIEF_CAP)
    common.add_argument("--cap-closure", type=int, default=DEFAULT_CLOSURE_CAP)
    common.add_argument("--format", choices=("csv", "text"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="detpomdp", description="Exact tools for deterministic POMDPs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("validate", parents=[common], help="check a model document")

    gen = sub.add_parser("generate", parents=[common], help="write a generated model")
    gen.add_argument("kind", choices=("tank", "tight-bound", "random"))
    gen.add_argument("--out", help="output path (default: stdout)")
    gen.add_argument("--preset", choices=sorted(PRESETS), default="paper-1")
    gen.add_argument("--belief-seed", type=int, default=0)
    gen.add_argument("--n", type=int, default=3)
    gen.add_argument("--horizon", type=int)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--sizes", default="3,2,2,3", help="|X|,|U|,|O|,T")
    shape = gen.add_mutually_exclusive_group()
    shape.add_argument("--affine", action="store_true")
    shape.add_argument("--product", action="store_true")
    gen.add_argument("--full-admissibility", action="store_true")
    gen.add_argument("--inf-cost-rate", type=float, default=0.0)
    gen.add_argument("--nonstationary", action="store_true")

    sub.add_parser("solve", parents=[common], help="optimal value from the initial belief")

    reach = sub.add_parser("reachable", parents=[common], help="reachable belief counts per time")
    reach.add_argument("--t-max", type=int)
    reach.add_argument("--admissible-only", action="store_true")

    sub.add_parser("bounds", parents=[common], help="reachable-set size against the bounds")
    sub.add_parser("check-separated", parents=[common], help="classify separation")

    sim = sub.add_parser("simulate", parents=[common], help="closed-loop rollout")
    sim.add_argument("--x0", help="label of the true initial state")

    orc = sub.add_parser("oracle-check", parents=[common], help="solver against brute force")
    orc.add_argument("--count", type=int, default=20)
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--sizes", default="3,2,2,2", help="|X|,|U|,|O|,T")
    orc.add_argument("--inf-cost-rate", type=float, default=0.1)
    orc.add_argument("--cap-oracle", type=int, default=DEFAULT_ORACLE_CAP)
    return parser


COMMANDS = {
    "validate": cmd_validate,
    "generate": cmd_generate,
    "solve": cmd_solve,
    "reachable": cmd_reachable,
    "bounds": cmd_bounds,
    "check-separated": cmd_check_separated,
    "simulate": cmd_simulate,
    "oracle-check": cmd_oracle_check,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, OSError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except CapExceeded as exc:
        print(f"cap reached: {exc}", file=sys.stderr)
        return EXIT_CAP
    except Exception as exc:  # noqa: BLE001 - reported as an internal failure
        log.debug("internal failure", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
