"""Command-line front-end.

Subcommands: ``bound``, ``sweep``, ``verify``, ``estimate-holder`` and
``trace``. Exit codes are fixed: 0 ok, 1 a check failed, 2 bad input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import fractions
import io
import json
import logging
import math
import sys
import time
from typing import List, Optional, Sequence

import jsonschema

from hsa import __version__, oracle, optimizer, tracking
from hsa.config import (Convexity, LossAssumptions, ProblemValidationError,
                        SgdConfig, Strategy, ValidatedProblem, validate)
from hsa.mechanisms import NumericalError, RdpCurve, rdp_to_dp

log = logging.getLogger("hsa")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_BAD_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3

CSV_HEADER = ("axis_value", "epsilon", "composition", "output_perturbation",
              "tau", "runtime_ms")

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["assumptions", "sgd"],
    "additionalProperties": False,
    "properties": {
        "assumptions": {
            "type": "object",
            "required": ["holder_L", "holder_lambda", "convexity", "lipschitz_K"],
            "additionalProperties": False,
            "properties": {
                "holder_L": _NONNEG,
                # range checks live in config.validate so the message names
                # the violated precondition
                "holder_lambda": {"type": "number"},
                "convexity": {"enum": [c.value for c in Convexity]},
                "lipschitz_K": _NONNEG,
                "strong_convexity_m": _NONNEG,
            },
        },
        "sgd": {
            "type": "object",
            "required": ["eta", "sigma", "clip_K", "n", "T", "diameter_D"],
            "additionalProperties": False,
            "properties": {
                "eta": _POS, "sigma": _POS, "clip_K": _POS, "diameter_D": _POS,
                "n": _POS_INT, "b": _POS_INT,
                "T": {"type": "integer", "minimum": 0},
                "strategy": {"enum": [s.value for s in Strategy]},
            },
        },
        "accounting": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"oneOf": [{"type": "number"},
                                    {"type": "array", "minItems": 1,
                                     "items": {"type": "number"}}]},
                "delta": {"type": "number", "exclusiveMinimum": 0,
                          "exclusiveMaximum": 1},
                "num_sequences": _POS_INT,
                "encounter_times": {"type": "array",
                                    "items": {"type": "integer", "minimum": 0}},
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seed": {"type": "integer", "minimum": 0},
                "output": {"type": ["string", "null"]},
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "num_toys": _POS_INT,
                "T_max": _POS_INT,
                "grid": {"type": "integer", "minimum": 512},
                "trials": {"type": "integer"},
            },
        },
    },
}


class InputError(Exception):
    """Bad command-line or configuration input (exit 2)."""


class RunConfig:
    """A parsed config file: the validated problem plus accounting options."""

    def __init__(self, raw: dict, path: Optional[str]):
        self.raw = raw
        self.path = path
        acc = raw.get("accounting", {})
        alpha = acc.get("alpha", 2.0)
        self.alphas = [float(a) for a in (alpha if isinstance(alpha, list) else [alpha])]
        self.delta = acc.get("delta")
        self.num_sequences = acc.get("num_sequences", 1000)
        self.encounter_times = acc.get("encounter_times")
        run = raw.get("run", {})
        self.seed = run.get("seed", 0)
        self.output = run.get("output")
        self.verify = raw.get("verify", {})

    def problem(self, alpha: Optional[float] = None) -> ValidatedProblem:
        a, s = self.raw["assumptions"], self.raw["sgd"]
        assumptions = LossAssumptions(
            holder_L=float(a["holder_L"]), holder_lambda=float(a["holder_lambda"]),
            convexity=Convexity(a["convexity"]), lipschitz_K=float(a["lipschitz_K"]),
            strong_convexity_m=float(a.get("strong_convexity_m", 0.0)))
        strategy = Strategy(s.get("strategy", Strategy.FULL_BATCH.value))
        config = SgdConfig(
            eta=float(s["eta"]), sigma=float(s["sigma"]), clip_K=float(s["clip_K"]),
            n=int(s["n"]), b=int(s.get("b", s["n"])), T=int(s["T"]),
            diameter_D=float(s["diameter_D"]), strategy=strategy,
            alpha=self.alphas[0] if alpha is None else float(alpha))
        return validate(assumptions, config)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise InputError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"config {path} is not valid JSON: {e}") from e
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise InputError(f"config {path}: {where}: {e.message}") from e
    return RunConfig(raw, path)


# ----------------------------------------------------------------- helpers


def _parse_number(text: str) -> float:
    """Accepts decimals and fractions such as ``1/3``."""
    try:
        return float(fractions.Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as e:
        raise InputError(f"not a number: {text!r}") from e


def _parse_list(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    items = [t for t in text.split(",") if t.strip()]
    return [_parse_number(t) for t in items]


def _parse_range(text: str) -> List[float]:
    """``start:stop[:step]``, stop inclusive."""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise InputError(f"range must be start:stop[:step], got {text!r}")
    start, stop = _parse_number(parts[0]), _parse_number(parts[1])
    step = _parse_number(parts[2]) if len(parts) == 3 else 1.0
    if step <= 0:
        raise InputError("range step must be positive")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(max(count, 0))]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, int) and not isinstance(x, bool):
        return str(x)
    return format(float(x), ".12g")


def _manifest(args, subcommand: str, seed) -> dict:
    return {
        "config": getattr(args, "config", None),
        "subcommand": subcommand,
        "output": args.output,
        "seed": seed,
        "tool_version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(
            timespec="seconds"),
    }


def _emit(text: str, path: Optional[str]):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _csv_text(manifest: dict, rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    for k, v in manifest.items():
        buf.write(f"# {k}: {'' if v is None else v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _alphas(args, cfg: RunConfig) -> List[float]:
    alphas = _parse_list(args.alpha) or cfg.alphas
    if not alphas:
        raise InputError("--alpha needs at least one value")
    return alphas


def _row(axis_value, result, runtime_ms):
    sched = getattr(result, "schedule", None)
    return (axis_value, result.epsilon, result.baselines.composition,
            result.baselines.output_perturbation,
            sched.tau if sched is not None else None, runtime_ms)


def _result_dict(result) -> dict:
    return result.to_dict()


# ------------------------------------------------------------- subcommands


def cmd_bound(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    delta = cfg.delta if args.delta is None else args.delta
    output = args.output or cfg.output
    results, rows = [], []
    for alpha in _alphas(args, cfg):
        problem = cfg.problem(alpha)
        start = time.perf_counter()
        res = optimizer.compute_bound(problem, num_sequences=cfg.num_sequences,
                                      seed=seed, encounter_times=cfg.encounter_times)
        ms = (time.perf_counter() - start) * 1e3 if args.timing else None
        results.append(res)
        rows.append(_row(alpha, res, ms))
    manifest = _manifest(args, "bound", seed)
    manifest["output"] = output

    if args.format == "csv":
        _emit(_csv_text(manifest, rows), output)
        return EXIT_OK
    record = _result_dict(results[0])
    if len(results) > 1:
        record["rdp_curve"] = [{"alpha": r.alpha, "epsilon": r.epsilon}
                               for r in results]
    if delta is not None:
        curve = RdpCurve.from_arrays([r.alpha for r in results],
                                     [r.epsilon for r in results])
        eps, a_star = rdp_to_dp(curve, delta)
        record["dp"] = {"epsilon": eps, "delta": delta, "alpha": a_star}
    record["manifest"] = manifest
    _emit(_json_text(record), output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    output = args.output or cfg.output
    if args.values is not None and args.range is not None:
        raise InputError("give either --values or --range, not both")
    if args.range is not None:
        values = _parse_range(args.range)
    else:
        values = _parse_list(args.values if args.values is not None else "")
    if not values:
        raise InputError("sweep needs at least one value")
    if args.axis == "T":
        if any(v != int(v) or v < 0 for v in values):
            raise InputError("T values must be non-negative integers")
        values = [int(v) for v in values]
    problem = cfg.problem(_alphas(args, cfg)[0])

    rows, records = [], []
    for v in values:
        start = time.perf_counter()
        row = optimizer.sweep(problem, args.axis, [v],
                              num_sequences=cfg.num_sequences, seed=seed)[0]
        ms = (time.perf_counter() - start) * 1e3 if args.timing else None
        rows.append(_row(v, row.result, ms))
        records.append({"axis_value": v, **_result_dict(row.result),
                        "runtime_ms": ms})
    manifest = _manifest(args, "sweep", seed)
    manifest["output"] = output
    manifest["axis"] = args.axis
    if args.format == "json":
        _emit(_json_text({"axis": args.axis, "rows": records,
                          "manifest": manifest}), output)
    else:
        _emit(_csv_text(manifest, rows), output)
    return EXIT_OK


def _linear_control(T: int) -> oracle.ToyProblem1D:
    # flipped constant slope on a wide domain: composition is exact here
    return oracle.ToyProblem1D("linear", (1.0, -1.0, 1.0, -1.0, 1.0), -1.0, 0,
                               eta=0.1, sigma=1.0, T=T, diameter=20.0)


def run_verification(alpha: float, seed: int, *, num_toys: int = 20,
                     T_max: int = 20, grid: int = 4096, trials: int = 1000,
                     scale_bound: float = 1.0) -> dict:
    """Runs the 1-D verification suite and returns a JSON-ready report."""
    checks = []

    def density_check(name, toy):
        bound = optimizer.compute_bound(toy.problem(alpha))
        rep = oracle.verify_bound(toy, alpha, bound, N=grid, name=name,
                                  scale_bound=scale_bound)
        checks.append({"check": "density", **rep.to_dict()})

    def coupling_check(name, toy):
        trace = tracking.trace_for(toy.problem(alpha))
        rep = oracle.coupled_w_inf_check(toy, trace, trials, seed)
        checks.append({"check": "coupling", "name": name,
                       "worst_excess": rep.worst_excess, "trials": rep.trials,
                       "passed": bool(rep.passed)})

    toys = oracle.random_toys(num_toys, seed, T_max)
    for i, toy in enumerate(toys):
        name = f"toy{i:02d}_{toy.kind}_T{toy.T}"
        density_check(name, toy)
        coupling_check(name, toy)
    density_check("control_identical", toys[0].identical())
    density_check("control_linear_tight", _linear_control(min(5, T_max)))

    failed = [c["name"] for c in checks if not c["passed"]]
    return {"passed": not failed, "failed": failed, "alpha": alpha,
            "scale_bound": scale_bound, "checks": checks}


def cmd_verify(args) -> int:
    cfg = load_config(args.config) if args.config else None
    opts = dict(cfg.verify) if cfg else {}
    trials = args.trials if args.trials is not None else opts.get("trials", 1000)
    if trials < 1:
        raise InputError(f"trials must be >= 1, got {trials}")
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 42)
    alphas = _parse_list(args.alpha) or (cfg.alphas if cfg else [2.0])
    if not args.scale_bound > 0:
        raise InputError("--scale-bound must be positive")
    report = run_verification(alphas[0], seed, num_toys=opts.get("num_toys", 20),
                              T_max=opts.get("T_max", 20),
                              grid=opts.get("grid", 4096), trials=trials,
                              scale_bound=args.scale_bound)
    output = args.output or (cfg.output if cfg else None)
    manifest = _manifest(args, "verify", seed)
    manifest["output"] = output
    report["manifest"] = manifest
    _emit(_json_text(report), output)
    for name in report["failed"]:
        print(f"check failed: {name}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_CHECK_FAILED


def cmd_estimate_holder(args) -> int:
    entry = oracle.HOLDER_ZOO.get(args.function)
    if entry is None:
        raise InputError(f"unknown zoo function {args.function!r}; choose from "
                         + ", ".join(sorted(oracle.HOLDER_ZOO)))
    lam = _parse_number(args.lam)
    if not 0 < lam <= 1:
        raise InputError("lambda must lie in (0, 1]")
    if args.pairs < 1:
        raise InputError("pairs must be >= 1")
    lo, hi = args.domain
    if not lo < hi:
        raise InputError("domain must satisfy lo < hi")
    seed = 0 if args.seed is None else args.seed
    est = oracle.estimate_holder(entry.gradient(args.slope), (lo, hi), lam,
                                 args.pairs, seed)
    record = {"function": args.function, "description": entry.description,
              "lambda": lam, "pairs": args.pairs, "domain": [lo, hi],
              "estimate": est, "analytic": entry.constant(lam, args.slope),
              "manifest": _manifest(args, "estimate-holder", seed)}
    if args.format == "json":
        _emit(_json_text(record), args.output)
    else:
        text = f"L_hat = {_fmt(est)}\n"
        if record["analytic"] is not None:
            text += f"analytic = {_fmt(record['analytic'])}\n"
        _emit(text, args.output)
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = load_config(args.config)
    problem = cfg.problem()
    times = _parse_list(args.encounters)
    if times is None:
        times = cfg.encounter_times
    trace = tracking.trace_for(problem, None if times is None else [int(t) for t in times])
    manifest = _manifest(args, "trace", cfg.seed)
    buf = io.StringIO()
    for k, v in manifest.items():
        buf.write(f"# {k}: {'' if v is None else v}\n")
    buf.write("t,D_t\n")
    for t, v in enumerate(trace.values):
        buf.write(f"{t},{_fmt(v)}\n")
    _emit(buf.getvalue(), args.output or cfg.output)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hsa", description="Last-iterate Rényi DP accounting for Noisy-SGD.")
    p.add_argument("--version", action="version", version=f"hsa {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, config_optional=False):
        if config:
            sp.add_argument("config", nargs="?" if config_optional else None,
                            help="JSON config file")
        sp.add_argument("--output", help="write here instead of stdout")
        sp.add_argument("--seed", type=int, help="overrides run.seed")

    sp = sub.add_parser("bound", help="certified bound for one config")
    common(sp)
    sp.add_argument("--alpha", help="comma-separated Rényi orders")
    sp.add_argument("--delta", type=float, help="also convert to (eps, delta)-DP")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--timing", action="store_true", help="fill runtime_ms")
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("sweep", help="bound over a range of T or alpha")
    common(sp)
    sp.add_argument("--axis", choices=("T", "alpha"), default="T")
    sp.add_argument("--values", help="comma-separated axis values")
    sp.add_argument("--range", help="start:stop[:step], stop inclusive")
    sp.add_argument("--alpha", help="Rényi order (first value used) for T sweeps")
    sp.add_argument("--delta", type=float, help="accepted for symmetry; unused")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--timing", action="store_true",
                    help="fill runtime_ms (makes output non-reproducible)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("verify", help="1-D numerical verification suite")
    common(sp, config_optional=True)
    sp.add_argument("--trials", type=int, help="coupled trials per toy")
    sp.add_argument("--alpha", help="Rényi order (first value used)")
    sp.add_argument("--scale-bound", type=float, default=1.0,
                    help="multiply every bound; for negative controls")
    sp.add_argument("--format", choices=("json",), default="json")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("estimate-holder", help="sampled Hölder constant")
    sp.add_argument("function", help="zoo name: " + ", ".join(sorted(oracle.HOLDER_ZOO)))
    common(sp, config=False)
    sp.add_argument("--lambda", dest="lam", default="1/3")
    sp.add_argument("--pairs", type=int, default=100000)
    sp.add_argument("--slope", type=float, default=1.0)
    sp.add_argument("--domain", type=float, nargs=2, default=(-1.0, 1.0),
                    metavar=("LO", "HI"))
    sp.add_argument("--format", choices=("text", "json"), default="text")
    sp.set_defaults(func=cmd_estimate_holder)

    sp = sub.add_parser("trace", help="forward W-infinity trace as CSV")
    common(sp)
    sp.add_argument("--encounters", help="comma-separated encounter times (cyclic)")
    sp.set_defaults(func=cmd_trace)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse exits 2 on usage errors already
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ProblemValidationError as e:
        for v in e.violations:
            print(f"invalid problem: {v}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
