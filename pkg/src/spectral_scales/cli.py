"""Command-line front end: ``spectral-scales {scenario,count,match,oracle,decay-check}``.

Exit codes: 0 success, 1 usage or configuration error, 2 sum rule fails,
3 the finite-difference oracle disagrees with the winding count.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import manifolds, oracle, spectrum
from .odeflow import IntegrationError, StepControl
from .potentials import FORMS, CompositePotential, DecayParams, PotentialSpec, verify_decay
from .report import dumps, write_csv, write_json
from .scenarios import AUDIT_DECAY, get_scenario

EXIT_OK, EXIT_USAGE, EXIT_SUM_RULE, EXIT_ORACLE = 0, 1, 2, 3

ORACLE_PART = {"model_inner": "v0_only", "model_outer": "v1_only", "full": "full"}

DEFAULTS: dict[str, Any] = {
    "epsilon": 0.1,
    "alpha": -0.45,
    "operator": "full",
    "eigen_floor": 1e-6,
    "delta_seed": manifolds.DEFAULT_DELTA_SEED,
    "tail_tol": manifolds.DEFAULT_TAIL_TOL,
    "mu_grid": {"lo": 0.0, "hi": None, "n": 512},
    "tolerances": {"rtol": 1e-10, "atol": 1e-12, "h_init": 1e-3, "h_max": None, "max_steps": 200_000},
    "oracle": {"enabled": True, "N": 4000, "R": None, "shifts": [0.0], "top_k": 5},
    "r_samples": {"lo": 1.0, "hi": 1000.0, "n": 200},
}

_POS = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {
        "potential": {
            "type": "object",
            "properties": {
                "form": {"enum": list(FORMS) + ["zero"]},
                "a": {"type": "number"},
                "b": {"type": "number"},
                "terms": {"type": "array", "items": {"$ref": "#/$defs/potential"}},
            },
            "required": ["form"],
            "additionalProperties": False,
        }
    },
    "type": "object",
    "properties": {
        "scenario": {"enum": [1, 2, 3]},
        "v0": {"$ref": "#/$defs/potential"},
        "v1": {"$ref": "#/$defs/potential"},
        "epsilon": _POS,
        "alpha": {"type": "number", "exclusiveMinimum": -0.5, "exclusiveMaximum": 0},
        "gamma": _POS,
        "operator": {"enum": sorted(ORACLE_PART)},
        "eigen_floor": _POS,
        "delta_seed": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.01},
        "tail_tol": _POS,
        "mu_grid": {
            "type": "object",
            "properties": {
                "lo": {"type": "number", "minimum": 0},
                "hi": {"oneOf": [_POS, {"type": "null"}]},
                "n": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "branches": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "tolerances": {
            "type": "object",
            "properties": {
                "rtol": _POS,
                "atol": _POS,
                "h_init": _POS,
                "h_max": {"oneOf": [_POS, {"type": "null"}]},
                "max_steps": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "oracle": {
            "type": "object",
            "properties": {
                "enabled": {"type": "boolean"},
                "N": {"type": "integer", "minimum": 16},
                "R": {"oneOf": [_POS, {"type": "null"}]},
                "shifts": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "top_k": {"type": "integer", "minimum": 1},
                "which": {"type": "array", "items": {"enum": ["v0_only", "v1_only", "full"]}, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "decay": {
            "type": "object",
            "properties": {"C0": _POS, "C1": _POS, "gamma": _POS},
            "required": ["C0", "C1", "gamma"],
            "additionalProperties": False,
        },
        "r_samples": {
            "type": "object",
            "properties": {
                "lo": {"type": "number", "minimum": 1},
                "hi": {"type": "number", "minimum": 1},
                "n": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "out": {"type": "string"},
    },
    "anyOf": [{"required": ["scenario"]}, {"required": ["v0", "v1"]}],
    "not": {"anyOf": [{"required": ["scenario", "v0"]}, {"required": ["scenario", "v1"]}]},
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Invalid command line or configuration document."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# configuration ----------------------------------------------------------------


def _merged(defaults: dict, given: dict) -> dict:
    out = dict(defaults)
    for key, value in given.items():
        if isinstance(value, dict) and isinstance(defaults.get(key), dict):
            out[key] = _merged(defaults[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | Path) -> dict[str, Any]:
    """Read, validate and default-fill a run configuration."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return validate_config(raw)


def validate_config(raw: Any) -> dict[str, Any]:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    return _merged(DEFAULTS, raw)


def build_potentials(cfg: dict[str, Any]) -> CompositePotential:
    try:
        if "scenario" in cfg:
            return get_scenario(cfg["scenario"]).composite(cfg["epsilon"])
        return CompositePotential(PotentialSpec.from_dict(cfg["v0"]), PotentialSpec.from_dict(cfg["v1"]), cfg["epsilon"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def step_control(cfg: dict[str, Any]) -> StepControl:
    tol = dict(cfg["tolerances"])
    tol["h_max"] = math.inf if tol["h_max"] is None else tol["h_max"]
    try:
        return StepControl(**tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _flow_kwargs(cfg: dict[str, Any]) -> dict[str, Any]:
    return {"ctl": step_control(cfg), "delta_seed": cfg["delta_seed"], "tail_tol": cfg["tail_tol"]}


def _thresholds(cfg: dict[str, Any]) -> spectrum.Thresholds:
    try:
        return spectrum.thresholds(cfg["epsilon"], cfg["alpha"], cfg.get("gamma"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@contextmanager
def _collect_warnings(sink: list[str]):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        yield
    for w in caught:
        msg = str(w.message)
        if msg not in sink:
            sink.append(msg)
            print(f"warning: {msg}", file=sys.stderr)


def _emit_json(obj: Any, out: str | None) -> None:
    if out:
        write_json(out, obj)
    else:
        sys.stdout.write(dumps(obj))


# commands ---------------------------------------------------------------------


def cmd_count(cfg: dict[str, Any]) -> int:
    pots = build_potentials(cfg)
    notes: list[str] = []
    with _collect_warnings(notes):
        result = spectrum.count_positive_eigenvalues(pots, cfg["operator"], cfg["eigen_floor"], **_flow_kwargs(cfg))
        check = None
        if cfg["oracle"]["enabled"]:
            check = oracle.oracle_count(pots, ORACLE_PART[cfg["operator"]], 0.0, cfg["oracle"]["N"], cfg["oracle"]["R"])
    agree = check is None or check.count == result.m
    _emit_json({"count": result, "oracle": check, "agreement": agree, "warnings": notes}, cfg.get("out"))
    return EXIT_OK if agree else EXIT_ORACLE


def _sigma_rows(pots, th, grid, kwargs) -> tuple[np.ndarray, list[str]]:
    """``Sigma^0`` on the grid; failing points become ``nan`` with a note."""
    try:
        return spectrum.mismatch_sigma(grid, pots, 0, th, **kwargs), ["ok"] * grid.size
    except (IntegrationError, FloatingPointError):
        pass
    values, status = np.full(grid.size, np.nan), []
    for i, mu in enumerate(grid):
        try:
            values[i] = spectrum.mismatch_sigma(np.array([mu]), pots, 0, th, **kwargs)[0]
            status.append("ok")
        except (IntegrationError, FloatingPointError) as exc:
            status.append(f"error: {exc}")
    return values, status


def cmd_match(cfg: dict[str, Any]) -> int:
    pots = build_potentials(cfg)
    th = _thresholds(cfg)
    kwargs = _flow_kwargs(cfg)
    g = cfg["mu_grid"]
    hi = g["hi"] if g["hi"] is not None else spectrum.default_mu_max(pots)
    if not hi > g["lo"]:
        raise ConfigError("mu_grid needs hi > lo")
    grid = np.linspace(g["lo"], hi, g["n"])
    notes: list[str] = []
    with _collect_warnings(notes):
        sigma0, status = _sigma_rows(pots, th, grid, kwargs)
        roots = spectrum.locate_roots(pots, th, grid, sigma0, **kwargs)
    finite = sigma0[np.isfinite(sigma0)]
    if "branches" in cfg:
        branches = sorted(set(cfg["branches"]))
    elif finite.size:
        branches = list(range(math.ceil((-2 * math.pi - finite.max()) / math.pi), math.floor((2 * math.pi - finite.min()) / math.pi) + 1))
    else:
        branches = [0]
    rows = [[mu, *[s + k * math.pi for k in branches], st] for mu, s, st in zip(grid, sigma0, status)]
    for r in roots:
        s0 = -r.k * math.pi
        rows.append([r.mu_hat, *[s0 + k * math.pi for k in branches], f"root k={r.k}"])
    rows.sort(key=lambda row: row[0])
    header = ["mu", *[f"sigma_k_{k}" for k in branches], "status"]
    out = cfg.get("out")
    if out:
        write_csv(out, header, rows)
    else:
        import csv

        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([[format(v, ".17g") if isinstance(v, float) else v for v in row] for row in rows])
    print(f"{len(roots)} roots: " + ", ".join(f"mu={r.mu_hat:.10g} (k={r.k})" for r in roots), file=sys.stderr)
    return EXIT_OK


def cmd_oracle(cfg: dict[str, Any]) -> int:
    pots = build_potentials(cfg)
    oc = cfg["oracle"]
    which = oc.get("which", ["v0_only", "v1_only", "full"])
    notes: list[str] = []
    out: dict[str, Any] = {"counts": {}, "eigenvalues": {}, "warnings": notes}
    code = EXIT_OK
    with _collect_warnings(notes):
        for part in which:
            try:
                out["counts"][part] = [oracle.oracle_count(pots, part, s, oc["N"], oc["R"]) for s in oc["shifts"]]
                out["eigenvalues"][part] = oracle.oracle_eigenvalues(pots, part, oc["top_k"], oc["N"], oc["R"])
            except oracle.OracleError as exc:
                notes.append(f"{part}: {exc}")
                code = EXIT_ORACLE
    _emit_json(out, cfg.get("out"))
    return code


def cmd_decay_check(cfg: dict[str, Any]) -> int:
    pots = build_potentials(cfg)
    params = DecayParams(**cfg["decay"]) if "decay" in cfg else AUDIT_DECAY if "scenario" in cfg else None
    if params is None:
        raise ConfigError("decay-check needs a 'decay' block {C0, C1, gamma} for explicit potentials")
    rs = cfg["r_samples"]
    if rs["hi"] < rs["lo"]:
        raise ConfigError("r_samples needs hi >= lo")
    grid = np.geomspace(rs["lo"], rs["hi"], rs["n"])
    notes: list[str] = []
    with _collect_warnings(notes):
        reports = {name: verify_decay(spec, params, grid) for name, spec in (("v0", pots.v0), ("v1", pots.v1))}
    out = {name: rep.to_dict() for name, rep in reports.items()}
    out["pass"] = all(r.passes_derivative_bound and r.passes_magnitude_bound for r in reports.values())
    _emit_json(out, cfg.get("out"))
    return EXIT_OK


def _figure_csvs(out_dir: Path, pots, n_mu: int, branches: int, kwargs: dict) -> None:
    """Unstable-manifold lifts and outer center-manifold curves for ``mu`` in (0, 1)."""
    mu = np.arange(1, n_mu + 1) / (n_mu + 1)
    eps = pots.epsilon
    write_csv(out_dir / "mu_grid.csv", ["index", "mu", "lambda"], [[i, m, eps**2 * m] for i, m in enumerate(mu)])
    for i, m in enumerate(mu):
        inner = manifolds.unstable_trajectory(eps**2 * m, eps, pots, 1.0 - 1e-6, system="inner", **kwargs)
        header = inner.header(branch=True)
        rows = [row for k in range(branches + 1) for row in inner.shifted(k).rows(branch_k=k)]
        write_csv(out_dir / f"unstable_mu_{i:03d}.csv", header, rows)
        outer = manifolds.center_trajectory_backward(m, eps, pots, 1e-6, system="outer", **kwargs)
        write_csv(out_dir / f"center_mu_{i:03d}.csv", outer.header(branch=True), outer.shifted(-2).rows(branch_k=-2))


def cmd_scenario(args: argparse.Namespace) -> int:
    scenario = get_scenario(args.id)
    if not 0 < args.epsilon < 1:
        raise ConfigError("--epsilon must lie in (0, 1)")
    pots = scenario.composite(args.epsilon)
    th = spectrum.thresholds(args.epsilon, args.alpha)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    kwargs = {"delta_seed": args.delta_seed}
    notes: list[str] = []
    details: dict[str, Any] = {"thresholds": th.__dict__, "warnings": notes}
    with _collect_warnings(notes):
        rule = spectrum.verify_sum_rule(pots, **kwargs)
        mu_max = spectrum.default_mu_max(pots)
        gaps = spectrum.find_gap_eigenvalues(pots, th, mu_max, expected=rule.m_v1, **kwargs)
        o1 = spectrum.find_order_one_eigenvalues(pots, spectrum.default_lambda_range(pots, mu_max), **kwargs)
        agreement = True
        if not args.no_oracle:
            counts = {}
            try:
                for op, part in ORACLE_PART.items():
                    counts[part] = oracle.oracle_count(pots, part)
                lam_split = 100 * args.epsilon**2 * mu_max
                details["oracle_gap_band"] = [oracle.oracle_count(pots, "full", s) for s in (0.0, lam_split)]
                agreement = all(counts[ORACLE_PART[op]].count == c.m for op, c in rule.provenance.items())
            except oracle.OracleError as exc:
                notes.append(str(exc))
                agreement = False
            details["oracle_counts"] = counts
        if args.paranoid:
            halved = spectrum.verify_sum_rule(pots, delta_seed=args.delta_seed / 2)
            details["seed_halving_stable"] = (halved.m_v0, halved.m_v1, halved.m_w) == (rule.m_v0, rule.m_v1, rule.m_w)
        _figure_csvs(out_dir, pots, args.mu_count, rule.m_v1, kwargs)
    report = {
        "scenario": scenario.id,
        "epsilon": args.epsilon,
        "m_v0": rule.m_v0,
        "m_v1": rule.m_v1,
        "m_w": rule.m_w,
        "gap_eigenvalues": [g.to_dict() for g in gaps],
        "o1_eigenvalues": [e.value for e in o1],
        "oracle_agreement": agreement,
    }
    details.update(
        sum_rule=rule,
        gap_eigenvalues=[g.__dict__ for g in gaps],
        o1_eigenvalues=[e.__dict__ for e in o1],
        mu_max=mu_max,
    )
    write_json(out_dir / "report.json", report)
    write_json(out_dir / "details.json", details)
    print(
        f"scenario {scenario.id} eps={args.epsilon:g}: m(V0)={rule.m_v0} m(V1)={rule.m_v1} m(W)={rule.m_w} "
        f"sum rule {'holds' if rule.equal else 'FAILS'}, oracle {'agrees' if agreement else 'DISAGREES'}"
    )
    if not agreement:
        return EXIT_ORACLE
    return EXIT_OK if rule.equal else EXIT_SUM_RULE


# entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="spectral-scales",
        description="Count and locate positive eigenvalues of radial two-scale Schrodinger operators.",
        epilog="Exit codes: 0 ok, 1 usage/config error, 2 sum-rule failure, 3 oracle disagreement.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sc = sub.add_parser("scenario", help="run a preset end to end and export report and figure data")
    sc.add_argument("--id", type=int, required=True, choices=(1, 2, 3), help="preset number")
    sc.add_argument("--epsilon", type=float, default=0.1, help="scale separation (default 0.1)")
    sc.add_argument("--out", required=True, help="output directory")
    sc.add_argument("--alpha", type=float, default=-0.45, help="threshold exponent in (-1/2, 0) (default -0.45)")
    sc.add_argument("--mu-count", type=int, default=16, help="interior mu samples in (0, 1) for the CSVs (default 16)")
    sc.add_argument("--delta-seed", type=float, default=manifolds.DEFAULT_DELTA_SEED, help="seed offset (default 1e-6)")
    sc.add_argument("--no-oracle", action="store_true", help="skip the finite-difference cross-check")
    sc.add_argument("--paranoid", action="store_true", help="repeat the counts with the seed offset halved")

    defaults_note = (
        "Config keys and defaults: scenario (1-3) or v0+v1 potentials; epsilon=0.1; alpha=-0.45; "
        "operator=full; eigen_floor=1e-6; delta_seed=1e-6; tail_tol=1e-10; mu_grid={lo:0, hi:1.25 sup(v1)_-, n:512}; "
        "tolerances={rtol:1e-10, atol:1e-12, h_init:1e-3, h_max:inf, max_steps:200000}; "
        "oracle={enabled:true, N:4000, R:200 (400 for v1_only), shifts:[0], top_k:5}; "
        "r_samples={lo:1, hi:1000, n:200}; decay={C0,C1,gamma} (presets use 100,100,1)."
    )
    for name, help_text in (
        ("count", "eigenvalue count of one operator, checked by the oracle"),
        ("match", "threshold mismatch curves Sigma^k over a mu grid, as CSV"),
        ("oracle", "finite-difference counts and eigenvalues"),
        ("decay-check", "advisory audit of the decay bounds"),
    ):
        p = sub.add_parser(name, help=help_text, description=defaults_note)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", help="output file (default: stdout); overrides the config's 'out'")
    return parser


COMMANDS = {"count": cmd_count, "match": cmd_match, "oracle": cmd_oracle, "decay-check": cmd_decay_check}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "scenario":
            return cmd_scenario(args)
        cfg = load_config(args.config)
        if args.out:
            cfg["out"] = args.out
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"spectral-scales: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
