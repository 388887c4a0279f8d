"""Command-line entry point: ``prepressure <command> [flags]``.

Exit status: 0 when every asserted check passes, 1 on a failed check,
2 on unreadable or invalid input, 3 when an exact computation exceeds its
capacity budget.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys as _sys
from importlib import resources
from pathlib import Path

from .bundle_system import Observable, observable_from_json, require_valid, system_from_json
from .errors import CapacityError, InputError, OracleUnavailable, PrepressureError
from .measures import (
    ExplicitMeasure,
    block_entropy_rate,
    measure_from_json,
    preimage_metric_entropy,
)
from .pressure import check_n_list, entropy_curve, pressure_curve
from .variational import (
    DEFAULT_EXPLICIT_N,
    DEFAULT_SFT_N,
    lower_bound_search,
    oracle_max_cycle_mean,
    oracle_sft_pressure,
    power_rule_check,
    variational_gap,
)

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_CAPACITY = 0, 1, 2, 3
COMMANDS = ("validate", "pressure", "entropy", "metric-entropy", "lower-bound", "gap", "power-check", "oracle")


class ParseError(InputError):
    pass


# --------------------------------------------------------------------------
# serialisation


def fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if hasattr(obj, "item") and not isinstance(obj, (list, tuple, dict)):
        return _encode(obj.item(), indent, level)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _encode(obj, 2, 0) + "\n"


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, float) else v for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


# --------------------------------------------------------------------------
# input


def _bundled(kind: str, name: str):
    ref = resources.files("prepressure") / "data" / kind / f"{name}.json"
    return ref if ref.is_file() else None


def load_json(spec: str, kind: str):
    """Parse ``spec`` as a file path, a bundled name, or inline JSON."""
    text, where = None, spec
    p = Path(spec)
    if p.is_file():
        text = p.read_text(encoding="utf-8")
    elif (ref := _bundled(kind, spec)) is not None:
        text, where = ref.read_text(encoding="utf-8"), f"{kind}/{spec}.json"
    elif spec.lstrip().startswith("{"):
        text, where = spec, "<inline>"
    else:
        raise ParseError(f"{kind[:-1]} {spec!r}: no such file or bundled name")
    try:
        return json.loads(text), where
    except json.JSONDecodeError as exc:
        raise ParseError(f"{where}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def parse_n_list(text: str) -> list[int]:
    """``4,8,16`` or ``start:stop[:step]`` (stop inclusive), or a mix of both."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ":" in part:
                bits = [int(b) for b in part.split(":")]
                step = bits[2] if len(bits) == 3 else 1
                out.extend(range(bits[0], bits[1] + 1, step))
            elif part:
                out.append(int(part))
    except ValueError as exc:
        raise ParseError(f"--n-list {text!r}: {exc}") from exc
    return out


def _default_jobs() -> int:
    env = os.environ.get("PREPRESSURE_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ParseError(f"PREPRESSURE_JOBS={env!r} is not an integer") from exc
    return os.cpu_count() or 1


class RunConfig:
    """Resolved inputs of one command."""

    def __init__(self, args):
        self.command = args.command
        self.out = Path(args.out)
        self.verbose = args.verbose
        self.t = args.t
        self.k_depth = args.k_depth
        self.m = args.m
        self.budget = args.budget
        self.seed = args.seed
        self.jobs = args.jobs if args.jobs is not None else _default_jobs()
        if self.t < 1:
            raise ParseError("--t must be >= 1")
        if self.k_depth < 0:
            raise ParseError("--k-depth must be >= 0")
        if self.jobs < 1:
            raise ParseError("--jobs must be >= 1")
        if args.system is None:
            raise ParseError("--system is required")
        raw, self.system_where = load_json(args.system, "systems")
        self.system_id = raw.get("name", Path(args.system).stem) if isinstance(raw, dict) else args.system
        self.sys = self._parse(system_from_json, raw, self.system_where)
        self.f = Observable.zero(self.sys)
        if args.observable is not None and args.observable != "zero":
            obj, where = load_json(args.observable, "observables")
            self.f = self._parse(lambda o: observable_from_json(o, self.sys), obj, where)
        self.measure = None
        if args.measure is not None:
            obj, where = load_json(args.measure, "measures")
            self.measure = self._parse(lambda o: measure_from_json(o, self.sys), obj, where)
        default_n = DEFAULT_EXPLICIT_N if self.sys.kind == "explicit" else DEFAULT_SFT_N
        self.n_list = parse_n_list(args.n_list) if args.n_list is not None else list(default_n)
        try:
            check_n_list(self.n_list)
        except InputError as exc:
            raise ParseError(f"--n-list: {exc}") from exc

    @staticmethod
    def _parse(fn, obj, where):
        try:
            return fn(obj)
        except InputError as exc:
            raise ParseError(f"{where}: {exc}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{where}: malformed entry ({exc})") from exc


# --------------------------------------------------------------------------
# commands


def _require_inputs(cfg):
    try:
        require_valid(cfg.sys, cfg.f)
    except InputError as exc:
        raise ParseError(f"{cfg.system_where}: {exc}") from exc


def cmd_validate(cfg):
    violations = list(cfg.sys.validate().violations)
    if not violations:
        violations += list(cfg.f.validate(cfg.sys).violations)
        if cfg.measure is not None:
            violations += cfg.measure.validate(cfg.sys) if cfg.sys.kind == "sft" else cfg.measure.validate()
    report = {"system": cfg.system_id, "valid": not violations, "violations": violations}
    return report, (EXIT_OK if not violations else EXIT_FAIL), None


def _curve_outputs(cfg, rep, name):
    def csv_out():
        write_csv(cfg.out / f"{name}.csv", ["n", "t", "k_star", "anchor_star", "value"], rep.csv_rows())
    report = {"system": cfg.system_id, "command": name, **rep.to_json(cfg.verbose)}
    return report, EXIT_OK, csv_out


def cmd_pressure(cfg):
    _require_inputs(cfg)
    rep = pressure_curve(cfg.sys, cfg.f, cfg.t, cfg.n_list, cfg.k_depth, jobs=cfg.jobs)
    return _curve_outputs(cfg, rep, "pressure")


def cmd_entropy(cfg):
    _require_inputs(cfg)
    rep = entropy_curve(cfg.sys, cfg.t, cfg.n_list, cfg.k_depth, jobs=cfg.jobs)
    return _curve_outputs(cfg, rep, "entropy")


def cmd_metric_entropy(cfg):
    _require_inputs(cfg)
    if cfg.measure is None:
        raise ParseError("metric-entropy needs --measure")
    problems = cfg.measure.validate(cfg.sys) if cfg.sys.kind == "sft" else cfg.measure.validate()
    est = preimage_metric_entropy(cfg.measure, cfg.n_list)
    report = {"system": cfg.system_id, "metric_entropy": est.to_json(), "measure_violations": problems}
    ok = not problems and est.value >= -1e-9
    if not isinstance(cfg.measure, ExplicitMeasure):
        rate = block_entropy_rate(cfg.measure, cfg.n_list)
        report["block_entropy_rate"] = rate.value
        ok &= est.value <= rate.value + 1e-6
    return report, (EXIT_OK if ok else EXIT_FAIL), None


def cmd_lower_bound(cfg):
    _require_inputs(cfg)
    lb = lower_bound_search(cfg.sys, cfg.f, budget=cfg.budget, seed=cfg.seed, jobs=cfg.jobs)
    report = {
        "system": cfg.system_id,
        "lower_best": lb.value,
        "entropy": lb.entropy,
        "integral": lb.integral,
        "entropy_tolerance": lb.entropy_tolerance,
        "evaluations": lb.evaluations,
        "candidates": [{"id": c.label, "entropy": c.entropy, "integral": c.integral, "total": c.total}
                       for c in lb.candidates],
        "measure": lb.measure.to_json(),
    }
    return report, EXIT_OK, None


def cmd_gap(cfg):
    _require_inputs(cfg)
    rep = variational_gap(cfg.sys, cfg.f, t=cfg.t, n_list=cfg.n_list, k_depth=cfg.k_depth, budget=cfg.budget,
                          seed=cfg.seed, jobs=cfg.jobs, system_id=cfg.system_id)

    def csv_out():
        write_csv(cfg.out / "gap.csv", rep.csv_header(), [rep.csv_row()])
    return rep.to_json(), (EXIT_OK if rep.passed else EXIT_FAIL), csv_out


def cmd_power_check(cfg):
    _require_inputs(cfg)
    rep = power_rule_check(cfg.sys, cfg.f, cfg.m, t=cfg.t, n_list=cfg.n_list, k_depth=cfg.k_depth, jobs=cfg.jobs)
    return {"system": cfg.system_id, **rep.to_json()}, (EXIT_OK if rep.passed else EXIT_FAIL), None


def cmd_oracle(cfg):
    _require_inputs(cfg)
    try:
        if cfg.sys.kind == "explicit":
            value, name = oracle_max_cycle_mean(cfg.sys, cfg.f), "max_cycle_mean"
        else:
            value, name = oracle_sft_pressure(cfg.sys, cfg.f), "transfer_matrix"
    except OracleUnavailable as exc:
        return {"system": cfg.system_id, "oracle": None, "reason": str(exc)}, EXIT_FAIL, None
    return {"system": cfg.system_id, "oracle": value, "method": name}, EXIT_OK, None


HANDLERS = {
    "validate": cmd_validate,
    "pressure": cmd_pressure,
    "entropy": cmd_entropy,
    "metric-entropy": cmd_metric_entropy,
    "lower-bound": cmd_lower_bound,
    "gap": cmd_gap,
    "power-check": cmd_power_check,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prepressure", description="Pre-image pressure toolkit for finite-base bundle systems.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--system", help="system JSON: path, bundled name, or inline JSON")
    ap.add_argument("--observable", help="observable JSON (path, bundled name, inline) or 'zero'")
    ap.add_argument("--measure", help="measure JSON (path, bundled name, inline)")
    ap.add_argument("--n-list", help="e.g. 4,8,16 or 4:64:4")
    ap.add_argument("--t", type=int, default=2, help="separation scale metric_base**t")
    ap.add_argument("--k-depth", type=int, default=4)
    ap.add_argument("--m", type=int, default=2, help="power for power-check")
    ap.add_argument("--budget", type=int, default=200, help="objective evaluations for the measure search")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=None, help="worker threads (default: $PREPRESSURE_JOBS or CPU count)")
    ap.add_argument("--out", default=".", help="directory for the reports")
    ap.add_argument("--verbose", action="store_true", help="include per-(k, x, omega) breakdowns")
    return ap


def _fail(code, command, message, out=None):
    print(f"prepressure {command}: {message}", file=_sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            name = command.replace("-", "_")
            (out / f"{name}.json").write_text(dumps({"command": command, "error": message, "exit": code}),
                                              encoding="utf-8")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = RunConfig(args)
        report, code, extra = HANDLERS[args.command](cfg)
    except CapacityError as exc:
        where = exc.where
        loc = f" at (omega, k, x) = {where}" if where is not None else ""
        return _fail(EXIT_CAPACITY, args.command, f"capacity exceeded{loc}: {exc}", out)
    except InputError as exc:
        return _fail(EXIT_PARSE, args.command, str(exc), out)
    except PrepressureError as exc:
        return _fail(EXIT_FAIL, args.command, str(exc), out)
    out.mkdir(parents=True, exist_ok=True)
    name = args.command.replace("-", "_")
    report = {"command": args.command, **report, "exit": code}
    text = dumps(report)
    (out / f"{name}.json").write_text(text, encoding="utf-8")
    if extra is not None:
        extra()
    _sys.stdout.write(text)
    if code == EXIT_FAIL and args.command == "validate":
        for v in report["violations"]:
            print(f"violation: {v}", file=_sys.stderr)
    return code


def run() -> None:
    _sys.exit(main())


if __name__ == "__main__":
    run()
