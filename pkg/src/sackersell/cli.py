"""Command-line entry point.

Exit codes: 0 success, 1 experiment assertion failed, 2 usage error,
3 input or parse error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Any, Sequence

import jsonschema
import numpy as np

from . import __version__
from .dichotomy import DichotomyConfig, NoGapError, has_dichotomy, roughness_bounds
from .experiments import EXPERIMENTS, ExperimentContext, run_experiment
from .expr import ExprDomainError, ExprError, ExprSyntaxError
from .integrate import IntegrationError, solve
from .nmyc import NMYCConfig, check_hypotheses, verify_uas
from .spectrum import SpectrumConfig, horizon_consistency, sacker_sell
from .systems import (
    BUILTINS,
    ExprMatrix,
    LinearSystem,
    NonlinearSystem,
    SampledMatrix,
    as_nonlinear,
    builtin,
    shift,
)

EXIT_OK, EXIT_ASSERT, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3, 4


class SystemFileError(ValueError):
    """Schema or content error in a system file; ``path`` is a JSON path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------------------
# system files

SYSTEM_SCHEMA = {
    "type": "object",
    "required": ["type", "dim"],
    "additionalProperties": False,
    "properties": {
        "type": {"enum": ["linear", "nonlinear"]},
        "dim": {"type": "integer", "minimum": 1},
        "label": {"type": "string"},
        "entries": {"type": "array", "items": {"type": "array", "items": {"type": "string"}}},
        "rhs": {
            "type": "array",
            "items": {"oneOf": [{"type": "string"}, {"type": "array", "items": {"type": "string"}, "minItems": 1, "maxItems": 1}]},
        },
        "jacobian": {"type": "array", "items": {"type": "array", "items": {"type": "string"}}},
        "samples": {
            "type": "object",
            "required": ["times", "matrices"],
            "additionalProperties": False,
            "properties": {
                "times": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                "matrices": {"type": "array", "items": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}},
            },
        },
        "params": {"type": "object"},
    },
}


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _square(rows, n: int, where: str, what: str):
    if len(rows) != n:
        raise SystemFileError(where, f"expected {n} rows of {what}, got {len(rows)}")
    for i, r in enumerate(rows):
        if len(r) != n:
            raise SystemFileError(f"{where}[{i}]", f"expected {n} entries, got {len(r)}")


def system_from_dict(doc: Any) -> LinearSystem | NonlinearSystem:
    """Build a system from the JSON document structure (see :func:`load_system`)."""
    try:
        jsonschema.validate(doc, SYSTEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SystemFileError(_json_path(exc.absolute_path), exc.message) from None
    n = doc["dim"]
    label = doc.get("label", "file")

    def parsed(text, where, env):
        from .expr import parse

        try:
            return parse(text, env)
        except ExprSyntaxError as exc:
            raise SystemFileError(where, str(exc)) from None
        except ExprError as exc:
            raise SystemFileError(where, str(exc)) from None

    if doc["type"] == "linear":
        has_e, has_s = "entries" in doc, "samples" in doc
        if has_e == has_s:
            raise SystemFileError("$", "a linear system needs exactly one of 'entries' or 'samples'")
        for key in ("rhs", "jacobian"):
            if key in doc:
                raise SystemFileError(f"$.{key}", "not allowed for a linear system")
        if has_e:
            _square(doc["entries"], n, "$.entries", "matrix entries")
            rows = [[parsed(e, f"$.entries[{i}][{j}]", ["t"]) for j, e in enumerate(r)] for i, r in enumerate(doc["entries"])]
            return LinearSystem(ExprMatrix(rows), label)
        s = doc["samples"]
        times, mats = s["times"], s["matrices"]
        if len(mats) != len(times):
            raise SystemFileError("$.samples.matrices", f"expected {len(times)} matrices (one per time), got {len(mats)}")
        for k, m in enumerate(mats):
            _square(m, n, f"$.samples.matrices[{k}]", "matrix entries")
        try:
            return LinearSystem(SampledMatrix(times, mats), label)
        except ValueError as exc:
            raise SystemFileError("$.samples", str(exc)) from None
    if "rhs" not in doc:
        raise SystemFileError("$", "a nonlinear system needs 'rhs'")
    for key in ("entries", "samples"):
        if key in doc:
            raise SystemFileError(f"$.{key}", "not allowed for a nonlinear system")
    if len(doc["rhs"]) != n:
        raise SystemFileError("$.rhs", f"expected {n} components, got {len(doc['rhs'])}")
    from .systems import state_names

    env = ["t"] + state_names(n)
    rhs_text = [e if isinstance(e, str) else e[0] for e in doc["rhs"]]
    rhs = tuple(parsed(e, f"$.rhs[{i}]", env) for i, e in enumerate(rhs_text))
    jac = ()
    if "jacobian" in doc:
        _square(doc["jacobian"], n, "$.jacobian", "Jacobian entries")
        jac = tuple(tuple(parsed(e, f"$.jacobian[{i}][{j}]", env) for j, e in enumerate(r)) for i, r in enumerate(doc["jacobian"]))
    try:
        return NonlinearSystem(rhs, jac, label, dict(doc.get("params", {})))
    except ValueError as exc:
        raise SystemFileError("$.rhs", str(exc)) from None


def load_system(path: str) -> LinearSystem | NonlinearSystem:
    """Read a system file.

    Schema: ``{"type": "linear" | "nonlinear", "dim": n, "label": str}`` plus
    ``"entries": [[expr, ...], ...]`` or ``"samples": {"times": [...],
    "matrices": [...]}`` for linear systems, and ``"rhs": [expr, ...]`` with
    optional ``"jacobian"`` for nonlinear ones.  Expressions use ``t`` and
    ``x1..xn``.  Errors cite the offending JSON path.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SystemFileError("$", f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise SystemFileError("$", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return system_from_dict(doc)


def system_to_dict(sys: LinearSystem | NonlinearSystem) -> dict | None:
    """JSON document for ``sys`` when it has a file representation, else ``None``."""
    if isinstance(sys, NonlinearSystem):
        return {"type": "nonlinear", "dim": sys.dim, "label": sys.label, "rhs": sys.rhs_strings()}
    if isinstance(sys.a, ExprMatrix):
        return {"type": "linear", "dim": sys.dim, "label": sys.label, "entries": sys.a.to_strings()}
    if isinstance(sys.a, SampledMatrix):
        return {
            "type": "linear",
            "dim": sys.dim,
            "label": sys.label,
            "samples": {"times": sys.a.times.tolist(), "matrices": sys.a.values.tolist()},
        }
    return None


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    horizon: float = 100.0
    step: float = 0.05
    window: float = 10.0
    resolution: float = 0.05
    rtol: float = 1e-9
    atol: float = 1e-12
    paths: int = 20
    seed: int = 0
    jobs: int = 1
    box: float = 2.0
    format: str | None = None
    output: str | None = None

    def validate(self) -> None:
        for name in ("horizon", "step", "window", "resolution", "rtol", "atol", "paths", "jobs", "box"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ValueError(f"config value {name} must be positive, got {v!r}")
        if self.window > self.horizon / 5:
            raise ValueError("window must be at most horizon / 5")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def spectrum(self) -> SpectrumConfig:
        return SpectrumConfig(horizon=self.horizon, window=self.window, resolution=self.resolution, step=self.step, rtol=self.rtol, atol=self.atol)

    def nmyc(self) -> NMYCConfig:
        return NMYCConfig(paths=self.paths, box=self.box, seed=self.seed, spectrum=self.spectrum(), jobs=self.jobs)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("output")
        return d


_CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _resolve_config(args) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SystemFileError("$", f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_values, dict):
            raise SystemFileError("$", "config file must hold a JSON object")
        for k, v in file_values.items():
            if k not in _CONFIG_FIELDS:
                raise SystemFileError(f"$.{k}", "unknown config key")
            values[k] = v
    for k in _CONFIG_FIELDS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    cfg = RunConfig(**values)
    for name in ("horizon", "step", "window", "resolution", "rtol", "atol", "box"):
        object.__setattr__(cfg, name, float(getattr(cfg, name)))
    for name in ("paths", "seed", "jobs"):
        object.__setattr__(cfg, name, int(getattr(cfg, name)))
    cfg.validate()
    return cfg


def _parse_params(items: Sequence[str] | None) -> dict:
    out: dict = {}
    for item in items or []:
        if "=" not in item:
            raise ValueError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            out[k.strip()] = v
    return out


def _resolve_system(args):
    params = _parse_params(args.param)
    if args.file:
        if args.system:
            raise ValueError("give either a builtin name or --file, not both")
        if params:
            raise ValueError("--param applies to builtin systems only")
        return load_system(args.file)
    if not args.system:
        raise ValueError("a builtin system name or --file is required")
    if args.system not in BUILTINS:
        raise ValueError(f"unknown builtin {args.system!r}; run 'examples' for the list")
    system = builtin(args.system, params)
    if not isinstance(system, (LinearSystem, NonlinearSystem)):
        raise ValueError(f"builtin {args.system!r} is a closed-form reference, not a system")
    return system


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _envelope(command: str, cfg: RunConfig, args, body: dict) -> dict:
    doc = {"command": command, "config": cfg.to_dict(), "version": __version__}
    doc.update(body)
    if not args.no_timestamp:
        doc["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return doc


def _dump_json(doc: dict) -> str:
    return json.dumps(_clean(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(text: str, cfg: RunConfig) -> None:
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _color(ok: bool, text: str, cfg: RunConfig) -> str:
    if cfg.output or os.environ.get("NO_COLOR") or not sys.stdout.isatty():
        return text
    return f"\033[{'32' if ok else '31'}m{text}\033[0m"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return json.dumps(_clean(v)) if isinstance(v, (list, dict)) else str(v)


# ---------------------------------------------------------------------------
# commands


def cmd_spectrum(args, cfg: RunConfig) -> int:
    system = _resolve_system(args)
    if not isinstance(system, LinearSystem):
        raise ValueError("spectrum needs a linear system; use nmyc-check for nonlinear fields")
    est = sacker_sell(system, gamma_range=tuple(args.gamma_range) if args.gamma_range else None, config=cfg.spectrum())
    doubling = horizon_consistency(system, cfg.spectrum()) if args.check_doubling else None
    fmt = cfg.format or "json"
    if fmt == "csv":
        _emit(est.gamma_csv(), cfg)
    elif fmt == "text":
        lines = [f"spectrum of {system.label} (T={cfg.horizon:g}, H={cfg.window:g}, resolution={cfg.resolution:g})"]
        lines += [f"  [{a:.6g}, {b:.6g}]" for a, b in est.intervals]
        lines += [f"  note: {n}" for n in est.notes]
        if doubling is not None:
            lines.append(f"  horizon {2 * cfg.horizon:g}: distance {doubling.distance:.6g} ({'consistent' if doubling.consistent else 'NOT consistent'})")
        _emit("\n".join(lines) + "\n", cfg)
    else:
        body = {"system": system_to_dict(system), "label": system.label, "result": est.to_dict()}
        if doubling is not None:
            body["horizon_doubling"] = doubling.to_dict()
        _emit(_dump_json(_envelope("spectrum", cfg, args, body)), cfg)
    return EXIT_OK


def cmd_dichotomy(args, cfg: RunConfig) -> int:
    system = _resolve_system(args)
    if not isinstance(system, LinearSystem):
        raise ValueError("dichotomy needs a linear system")
    target = shift(system, args.gamma) if args.gamma else system
    dcfg = DichotomyConfig(horizon=cfg.horizon, step=cfg.step, rtol=cfg.rtol, atol=cfg.atol)
    verdict, cert = has_dichotomy(target, config=dcfg)
    body = {"system": system_to_dict(system), "label": system.label, "gamma": args.gamma, "result": cert.to_dict()}
    if cert.certified:
        rb = roughness_bounds(cert)
        body["roughness"] = {"coppel": rb.coppel, "wiggins": rb.wiggins}
    fmt = cfg.format or "json"
    if fmt == "text":
        text = f"{system.label} shifted by {args.gamma:g}: {verdict} (rank {cert.rank}, K={cert.K:.6g}, alpha={cert.alpha:.6g})\n"
        _emit(text, cfg)
    else:
        _emit(_dump_json(_envelope("dichotomy", cfg, args, body)), cfg)
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig) -> int:
    system = _resolve_system(args)
    x0 = np.asarray(args.x0, dtype=float)
    if x0.size != system.dim:
        raise ValueError(f"--x0 needs {system.dim} values, got {x0.size}")
    if not args.T > args.t0:
        raise ValueError("--T must exceed --t0")
    grid = np.linspace(args.t0, args.T, args.points)
    tr = solve(system, args.t0, x0, args.T, rtol=cfg.rtol, atol=cfg.atol, t_eval=grid)
    fmt = cfg.format or "csv"
    if fmt == "json":
        body = {
            "system": system_to_dict(system),
            "label": system.label,
            "t": tr.grid,
            "x": tr.states,
            "escaped": bool(tr.escaped),
            "escape_time": float(tr.escape_time),
        }
        _emit(_dump_json(_envelope("simulate", cfg, args, body)), cfg)
    else:
        _emit(tr.to_csv(), cfg)
    if bool(tr.escaped):
        print(f"warning: trajectory escaped at t={float(tr.escape_time):.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_nmyc_check(args, cfg: RunConfig) -> int:
    system = _resolve_system(args)
    if isinstance(system, LinearSystem):
        system = as_nonlinear(system)
    ncfg = cfg.nmyc()
    hyp = check_hypotheses(system, cfg.paths, ncfg)
    uas = verify_uas(system, config=ncfg)
    fmt = cfg.format or "json"
    if fmt == "text":
        lines = [
            f"{system.label}",
            f"  G1: {hyp.g1}",
            f"  G2: {'pass' if hyp.g2_passed else 'fail'}",
            f"  G3: sup |Jg| = {hyp.g3_sup:.6g}",
            f"  G4: {sum(e.negative for e in hyp.g4)}/{len(hyp.g4)} paths with spectrum <= -{ncfg.margin:g}",
            f"  UAS envelope: {'pass' if uas.passed else 'fail'} (K={uas.K:.6g}, alpha={uas.alpha:.6g}, radius {uas.radius:g})",
        ]
        _emit("\n".join(lines) + "\n", cfg)
    else:
        body = {"system": system_to_dict(system), "label": system.label, "hypotheses": hyp.to_dict(), "stability": uas.to_dict()}
        _emit(_dump_json(_envelope("nmyc-check", cfg, args, body)), cfg)
    return EXIT_OK


def cmd_experiment(args, cfg: RunConfig) -> int:
    params = _parse_params(args.param)
    ctx = ExperimentContext(spectrum=cfg.spectrum(), nmyc=cfg.nmyc(), jobs=cfg.jobs)
    rep = run_experiment(args.name, params, cfg.seed, ctx)
    fmt = cfg.format or "text"
    if fmt == "json":
        _emit(_dump_json(_envelope("experiment", cfg, args, {"params": params, "report": rep.to_dict()})), cfg)
    else:
        lines = [f"experiment {rep.name} (seed {cfg.seed})"]
        for r in rep.rows:
            mark = _color(r["ok"], "ok  " if r["ok"] else "FAIL", cfg)
            lines.append(f"  {mark} {r['quantity']}: expected {_fmt(r['expected'])}, measured {_fmt(r['measured'])} [{r['basis']}]")
        if rep.claim == "none":
            lines.append(f"  no claim: {rep.details.get('verdict', 'hypotheses not satisfied')}")
        lines.append(_color(rep.passed, "PASS" if rep.passed else "FAIL", cfg))
        _emit("\n".join(lines) + "\n", cfg)
    return EXIT_OK if rep.passed else EXIT_ASSERT


def cmd_examples(args, cfg: RunConfig) -> int:
    fmt = cfg.format or "text"
    if fmt == "json":
        body = {
            "builtins": {k: v[1] for k, v in BUILTINS.items()},
            "experiments": {k: v[1] for k, v in EXPERIMENTS.items()},
        }
        _emit(_dump_json(_envelope("examples", cfg, args, body)), cfg)
    else:
        lines = ["builtin systems:"]
        lines += [f"  {k:<26} {v[1]}" for k, v in BUILTINS.items()]
        lines += ["experiments:"]
        lines += [f"  {k:<26} {v[1]}" for k, v in EXPERIMENTS.items()]
        _emit("\n".join(lines) + "\n", cfg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, system: bool = True) -> None:
    if system:
        p.add_argument("system", nargs="?", help="builtin system name (see 'examples')")
        p.add_argument("--file", help="system JSON file instead of a builtin")
        p.add_argument("--param", action="append", metavar="K=V", help="builtin parameter; value parsed as JSON when possible")
    p.add_argument("--config", help="JSON file with run configuration (flags take precedence)")
    p.add_argument("--horizon", type=float, help="horizon T (default 100)")
    p.add_argument("--step", type=float, help="QR / propagator step (default 0.05)")
    p.add_argument("--window", type=float, help="averaging window H (default 10)")
    p.add_argument("--resolution", type=float, help="gamma resolution (default 0.05)")
    p.add_argument("--rtol", type=float, help="relative integration tolerance")
    p.add_argument("--atol", type=float, help="absolute integration tolerance")
    p.add_argument("--paths", type=int, help="number of sampled paths (default 20)")
    p.add_argument("--box", type=float, help="half-width of the sampling box (default 2)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--jobs", type=int, help="worker processes (default 1)")
    p.add_argument("--format", choices=["json", "csv", "text"])
    p.add_argument("--output", help="write output to this file instead of standard output")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from JSON output")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sackersell", description="Dichotomy spectra and stability checks for nonautonomous ODEs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("spectrum", help="estimate the dichotomy spectrum")
    _common(p)
    p.add_argument("--gamma-range", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--check-doubling", action="store_true", help="also estimate on twice the horizon and report the distance")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("dichotomy", help="exponential dichotomy certificate of A - gamma I")
    _common(p)
    p.add_argument("--gamma", type=float, default=0.0)
    p.set_defaults(func=cmd_dichotomy)

    p = sub.add_parser("simulate", help="integrate one trajectory (CSV)")
    _common(p)
    p.add_argument("--x0", type=float, nargs="+", required=True)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--points", type=int, default=201)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("nmyc-check", help="hypotheses G1-G4 and a uniform stability envelope")
    _common(p)
    p.set_defaults(func=cmd_nmyc_check)

    p = sub.add_parser("experiment", help="run a named experiment")
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    p.add_argument("--param", action="append", metavar="K=V")
    _common(p, system=False)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("examples", help="list builtin systems and experiments")
    _common(p, system=False)
    p.set_defaults(func=cmd_examples)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = _resolve_config(args)
        if getattr(args, "points", 2) < 2:
            raise ValueError("--points must be at least 2")
        return args.func(args, cfg)
    except (IntegrationError, ExprDomainError, NoGapError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SystemFileError, ExprError, KeyError, ValueError, TypeError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"input error: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
