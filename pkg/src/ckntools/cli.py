"""Command-line front end.

    ckntools verify-field     --config exp.json [--out report.json]
    ckntools check-inequality --config exp.json [--seed N] [--quad-tol X]
    ckntools probe-sharpness  --config exp.json
    ckntools trace-proof      --config exp.json

Exit codes: 0 pass, 1 verification failure, 2 usage or configuration error.
The JSON report is the contract; stdout carries a human summary.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__, kernels
from . import testfunctions as tf
from .catalog import build_entry, entry_from_manifest
from .errors import CKNError, ConfigError, FitIllConditioned, ParamConditionViolated, SupportOutsideChart
from .fields import classify, excision_threshold, lemma_divergence_check, radial_identity_check
from .geometry import field_norm, random_points
from .inequalities import (
    CKNParams,
    XiaParams,
    check_xia_conditions,
    costa_quadratic_check,
    evaluate_ckn,
    evaluate_euclidean_ckn,
    evaluate_hardy,
    evaluate_uncertainty,
    evaluate_xia,
    proof_chain_trace,
)
from .quadrature import QuadratureScheme
from .sharpness import sweep
from .testfunctions import ExtremalFamily

SCHEMA_VERSION = 1
INEQUALITIES = ("ckn", "euclidean_ckn", "hardy", "uncertainty", "xia")
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
TOP_KEYS = {"schema_version", "catalog", "manifest", "inequality", "params", "functions", "quadrature",
            "sharpness", "classify", "costa", "seed", "identity_points"}


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return obj


# ---------------------------------------------------------------- config

def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if cfg.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {cfg.get('schema_version')}")
    if ("catalog" in cfg) == ("manifest" in cfg):
        raise ConfigError("config needs exactly one of 'catalog' or 'manifest'")
    return cfg


def build_experiment_entry(cfg):
    try:
        if "catalog" in cfg:
            return build_entry(cfg["catalog"])
        return entry_from_manifest(cfg["manifest"])
    except CKNError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad catalog/manifest parameters: {exc}") from None


def build_scheme(cfg, quad_tol=None):
    spec = dict(cfg.get("quadrature", {}))
    if quad_tol is not None:
        spec["rel_tol"] = quad_tol
    try:
        return QuadratureScheme(**spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad quadrature section: {exc}") from None


def build_params(cfg, n):
    kind = cfg.get("inequality", "ckn")
    if kind not in INEQUALITIES:
        raise ConfigError(f"unknown inequality {kind!r}; expected one of {list(INEQUALITIES)}")
    raw = cfg.get("params", {})
    try:
        if kind == "xia":
            if "gamma" in raw:
                params = XiaParams(raw["alpha"], raw["beta"], raw["gamma"], raw["r"], raw["p"])
            else:
                params = XiaParams.from_alpha_beta(raw["alpha"], raw["beta"], raw["r"], raw["p"])
            check_xia_conditions(params, n)
            return kind, params
        if kind in ("hardy", "uncertainty"):
            return kind, {"p": float(raw.get("p", 2.0))}
        if kind == "euclidean_ckn":
            return kind, CKNParams(float(raw.get("a", 0.0)), float(raw.get("b", 0.0)), 2.0)
        return kind, CKNParams(float(raw.get("a", 0.0)), float(raw.get("b", 0.0)), float(raw.get("p", 2.0)))
    except KeyError as exc:
        raise ConfigError(f"params section is missing {exc}") from None
    except ParamConditionViolated:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad params section: {exc}") from None


def _random_bumps(chart, count, rng, avoid=()):
    """Bumps with random centres and radii, fully inside the chart."""
    out = []
    lo, hi = chart.lower, chart.upper
    span = float(np.min(hi - lo))
    for _ in range(1000):
        if len(out) == count:
            break
        r_out = rng.uniform(0.05, 0.45) * span
        c = rng.uniform(lo + r_out, hi - r_out)
        r_in = rng.uniform(0.1, 0.8) * r_out
        if any(np.linalg.norm(c - z) <= r_out for z in avoid):
            continue
        out.append(tf.smooth_bump(c, r_in, r_out, chart))
    if len(out) < count:
        raise ConfigError("could not place the requested random bumps inside the chart")
    return out


def build_functions(cfg, entry, rng):
    chart, fld = entry.chart, entry.field
    specs = cfg.get("functions")
    if not specs:
        raise ConfigError("config needs a non-empty 'functions' list")
    out = []
    for spec in specs:
        spec = dict(spec)
        family = spec.pop("family", None)
        try:
            if family == "smooth_bump":
                out.append(tf.smooth_bump(spec["center"], spec["r_in"], spec["r_out"], chart))
            elif family == "power_cutoff":
                out.append(tf.power_cutoff(chart, fld, **spec))
            elif family == "log_cutoff":
                out.append(tf.log_cutoff(chart, fld, **spec))
            elif family == "truncated_gaussian":
                out.append(tf.truncated_gaussian(chart, fld, **spec))
            elif family == "random_bumps":
                avoid = fld.zero_set if spec.get("avoid_zeros", False) else ()
                out.extend(_random_bumps(chart, int(spec.get("count", 1)), rng, avoid))
            else:
                raise ConfigError(f"unknown function family {family!r}")
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad parameters for family {family!r}: {exc}") from None
        except (SupportOutsideChart, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"function {family!r}: {exc}") from None
    return out


# ---------------------------------------------------------------- commands

def _identity_checks(entry, count, rng):
    chart, fld = entry.chart, entry.field
    n = chart.n
    X = random_points(chart, 4 * count, rng)
    X = X[field_norm(chart, fld, X) > 1e3 * excision_threshold(chart)][:count]
    lemma = {}
    for k in sorted({-2.0, -1.0, 0.0, 1.0, 2.0, n - 1.0, float(n), n + 1.0}):
        _, _, err = lemma_divergence_check(chart, fld, k, X)
        lemma[f"{k:g}"] = float(np.max(err))
    _, _, err = radial_identity_check(chart, fld, X)
    return {"points": int(len(X)), "lemma_max_abs_error": lemma, "radial_identity_max_abs_error": float(np.max(err))}


def cmd_verify_field(cfg, args, report):
    entry = build_experiment_entry(cfg)
    ccfg = cfg.get("classify", {})
    rep = classify(entry.chart, entry.field, ccfg.get("grid_resolution", 9), ccfg.get("tol", 1e-9))
    report["conformal_report"] = rep.to_dict()
    rng = np.random.default_rng(args.seed)
    report["identity_checks"] = _identity_checks(entry, int(cfg.get("identity_points", 100)), rng)
    ok = rep.is_conformal and rep.div_h_min > 0
    lines = [
        f"field {entry.field.label!r} on {entry.chart.label!r}",
        f"  conformal: {rep.is_conformal} (max deficit {rep.max_deficit:.3e})",
        f"  homothety: {rep.is_homothety}  mu in [{rep.mu_min:.6g}, {rep.mu_max:.6g}]  min div h {rep.div_h_min:.6g}",
    ]
    return (EXIT_PASS if ok else EXIT_FAIL), lines


def _run_evaluator(kind, entry, u, params, scheme):
    chart, fld = entry.chart, entry.field
    if kind == "ckn":
        return evaluate_ckn(chart, fld, u, params, scheme)
    if kind == "euclidean_ckn":
        return evaluate_euclidean_ckn(chart, fld, u, params.a, params.b, scheme)
    if kind == "hardy":
        return evaluate_hardy(chart, fld, u, params["p"], scheme)
    if kind == "uncertainty":
        return evaluate_uncertainty(chart, fld, u, params["p"], scheme)
    return evaluate_xia(chart, fld, u, params, scheme)


def cmd_check_inequality(cfg, args, report):
    entry = build_experiment_entry(cfg)
    kind, params = build_params(cfg, entry.chart.n)
    scheme = build_scheme(cfg, args.quad_tol)
    funcs = build_functions(cfg, entry, np.random.default_rng(args.seed))
    report["conformal_report"] = classify(entry.chart, entry.field).to_dict()
    reports = []
    lines = [f"{kind} on {entry.chart.label!r} with {len(funcs)} function(s)"]
    for u in funcs:
        rep = _run_evaluator(kind, entry, u, params, scheme)
        reports.append({"function": u.to_dict(), "report": rep.to_dict()})
        lines.append(f"  {u.family_params.get('family')}: lhs={rep.lhs:.6g} rhs={rep.rhs:.6g} "
                     f"ratio={rep.ratio:.6f} {rep.verdict}")
    report["inequality_reports"] = reports
    ok = all(r["report"]["verdict"] == "pass" for r in reports)
    return (EXIT_PASS if ok else EXIT_FAIL), lines


def cmd_probe_sharpness(cfg, args, report):
    entry = build_experiment_entry(cfg)
    kind, params = build_params({**cfg, "inequality": cfg.get("inequality", "ckn")}, entry.chart.n)
    if not isinstance(params, CKNParams):
        raise ConfigError("probe-sharpness works on the ckn or euclidean_ckn parameter sets")
    scheme = build_scheme(cfg, args.quad_tol)
    sc = dict(cfg.get("sharpness", {}))
    try:
        family = ExtremalFamily(kind=sc.get("family", "log_cutoff"),
                                delta_range=tuple(sc.get("delta_range", (0.0, 1.0))),
                                smoothing=sc.get("smoothing"))
        R_values = sc["R_values"]
        deltas = sc.get("delta_values") or list(np.linspace(*family.delta_range, 11))
    except KeyError as exc:
        raise ConfigError(f"sharpness section is missing {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad sharpness section: {exc}") from None
    report["conformal_report"] = classify(entry.chart, entry.field).to_dict()
    study = sweep(entry.chart, entry.field, params, family, R_values, deltas, scheme,
                  route=sc.get("route", "auto"), rho_out=sc.get("rho_out"),
                  golden_iterations=int(sc.get("golden_iterations", 20)),
                  cross_check=bool(sc.get("cross_check", True)))
    report["sharpness"] = study.to_dict()
    return (EXIT_PASS if study.sound else EXIT_FAIL), study.table().splitlines()


def cmd_trace_proof(cfg, args, report):
    entry = build_experiment_entry(cfg)
    _, params = build_params({**cfg, "inequality": "ckn"}, entry.chart.n)
    scheme = build_scheme(cfg, args.quad_tol)
    funcs = build_functions(cfg, entry, np.random.default_rng(args.seed))
    rep = classify(entry.chart, entry.field)
    report["conformal_report"] = rep.to_dict()
    traces, costa, ok = [], [], True
    lines = [f"proof trace on {entry.chart.label!r}, a={params.a:g} b={params.b:g} p={params.p:g}"]
    homothety = rep.is_homothety and abs(rep.mu_max - 2.0) <= 2e-8
    t_values = cfg.get("costa", {}).get("t_values", [-2.0, -1.0, 0.0, 1.0, 2.0])
    for u in funcs:
        tr = proof_chain_trace(entry.chart, entry.field, u, params, scheme)
        st = tr["station_i"]
        good = tr["monotone"] and (st["relative_residual"] <= 1e-5 or st["residual"] <= 10 * st["quadrature_error"])
        ok &= good
        traces.append({"function": u.to_dict(), "trace": tr})
        lines.append(f"  (i) residual {st['relative_residual']:.2e}  (i)={st['value']:.6g} "
                     f"(ii)={tr['station_ii']['value']:.6g} (iii)={tr['station_iii']['value']:.6g}  "
                     f"{'ok' if good else 'FAIL'}")
        if homothety and params.p == 2:
            c = costa_quadratic_check(entry.chart, entry.field, u, params.a, params.b, t_values, scheme)
            ok &= c.quad_nonnegative and c.recovered_bound
            costa.append(c.to_dict())
            lines.append(f"      quadratic form: min Q(t)={min(c.quad_values):.6g} B^2/(4AD)={c.discriminant_ratio:.6f}")
    report["proof_trace"] = traces
    if homothety and params.p == 2:
        report["costa"] = {"status": "present", "checks": costa}
    else:
        reason = "field is not a homothety with mu = 2" if not homothety else "p != 2"
        report["costa"] = {"status": "skipped", "reason": reason}
        lines.append(f"  quadratic-form section skipped: {reason}")
    return (EXIT_PASS if ok else EXIT_FAIL), lines


COMMANDS = {
    "verify-field": cmd_verify_field,
    "check-inequality": cmd_check_inequality,
    "probe-sharpness": cmd_probe_sharpness,
    "trace-proof": cmd_trace_proof,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="ckntools", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ckntools {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", help="write the JSON run report here")
        p.add_argument("--seed", type=int, help="seed for randomised function sets and sample points")
        p.add_argument("--quad-tol", type=float, help="override quadrature.rel_tol")
        p.add_argument("--threads", type=int, help="cap on numba worker threads")
    return parser


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    if kernels.BACKEND == "numba":
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    start = time.perf_counter()
    report = {"schema_version": SCHEMA_VERSION, "toolkit_version": __version__, "command": args.command,
              "backend": kernels.BACKEND}
    try:
        _set_threads(args.threads)
        cfg = load_config(args.config)
        report["config"] = cfg
        overrides = {k: v for k, v in (("seed", args.seed), ("quad_tol", args.quad_tol),
                                       ("threads", args.threads)) if v is not None}
        report["overrides"] = overrides
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        code, lines = COMMANDS[args.command](cfg, args, report)
    except (ConfigError, ParamConditionViolated, FitIllConditioned) as exc:
        print(f"ckntools: configuration error: {exc}", file=sys.stderr)
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        code, lines = EXIT_CONFIG, []
    except CKNError as exc:
        print(f"ckntools: verification failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        code, lines = EXIT_FAIL, []
    except (TypeError, ValueError) as exc:
        print(f"ckntools: configuration error: {exc}", file=sys.stderr)
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        code, lines = EXIT_CONFIG, []
    report["exit_code"] = code
    report["wall_time_s"] = time.perf_counter() - start
    for line in lines:
        print(line)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(_jsonable(report), sort_keys=True, indent=2, allow_nan=True))
            fh.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
