"""``divctl`` command line.

Subcommands: thresholds, value, verify, simulate, asymptotics, heatlab.

The config is a flat JSON object holding the model keys (mu, sigma, rho, K,
Delta) plus any command options listed in ``OPTION_DEFAULTS``.  The flags
``--seed``, ``--paths`` and ``--grid`` override the matching options.  Every
output embeds the resolved config and the library version; CSV output carries
them on a leading ``#`` comment line.

Exit codes: 0 success, 1 a check ran and failed (verify/heatlab), 2 invalid
input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from . import heatlab, simulate
from .model import PARAM_KEYS, InvalidParams, ModelParams, solve_barrier
from .thresholds import asymptotic_check, solve_fixed_point, trends_to_one, u_hat_K
from .value import assemble_value, bellman_grid, bellman_verify, m_operator

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_SOLVER = 3

OPTION_DEFAULTS: dict[str, dict[str, Any]] = {
    "thresholds": {},
    "value": {"grid": 401, "x_max": None},
    "verify": {"grid": 2048, "refine": 64},
    "simulate": {"policy": "optimal", "epsilon": None, "x0": None, "paths": 10000, "seed": 0, "trace": None},
    "asymptotics": {"deltas": [1e-2, 1e-3, 1e-4, 1e-5]},
    "heatlab": {"trials": 20, "seed": 0, "grid": 512, "t_end": 2.0, "samples": 12},
}


class ConfigError(ValueError):
    pass


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def load_config(path: str, command: str, overrides: dict[str, Any]) -> tuple[ModelParams, dict[str, Any]]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    params = ModelParams.from_mapping(raw)
    defaults = OPTION_DEFAULTS[command]
    opts = dict(defaults)
    for key, value in raw.items():
        if key in PARAM_KEYS:
            continue
        if key not in defaults:
            raise ConfigError(f"unknown option {key!r} for command {command!r}")
        opts[key] = value
    for key, value in overrides.items():
        if value is not None and key in defaults:
            opts[key] = value
    _validate_options(command, opts)
    return params, opts


def _positive_int(opts, key):
    v = opts[key]
    if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
        raise ConfigError(f"{key} must be a positive integer, got {v!r}")


def _validate_options(command: str, opts: dict[str, Any]) -> None:
    if "grid" in opts:
        _positive_int(opts, "grid")
        if opts["grid"] < 3:
            raise ConfigError("grid must be at least 3")
    if "paths" in opts:
        _positive_int(opts, "paths")
    if "trials" in opts:
        _positive_int(opts, "trials")
    if "seed" in opts:
        s = opts["seed"]
        if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {s!r}")
    if command == "simulate":
        if opts["policy"] not in ("optimal", "barrier"):
            raise ConfigError("policy must be 'optimal' or 'barrier'")
        for key in ("epsilon", "x0"):
            v = opts[key]
            if v is not None and (not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0):
                raise ConfigError(f"{key} must be a nonnegative number")
    if command == "asymptotics":
        d = opts["deltas"]
        if not isinstance(d, list) or not d or not all(isinstance(v, (int, float)) and 0 < v for v in d):
            raise ConfigError("deltas must be a nonempty list of positive numbers")


# --------------------------------------------------------------------------- #
# commands: each returns (result dict, csv header, csv rows, check passed)
# --------------------------------------------------------------------------- #


def _flatten(prefix: str, obj, out: list):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, list):
        out.append([prefix, json.dumps(obj)])
    else:
        out.append([prefix, obj])
    return out


def cmd_thresholds(params: ModelParams, opts: dict):
    ts = solve_fixed_point(params)
    result = ts.to_dict()
    return result, ["key", "value"], _flatten("", result, []), True


def cmd_value(params: ModelParams, opts: dict):
    ts = solve_fixed_point(params)
    v = assemble_value(params, ts)
    x_max = opts["x_max"] if opts["x_max"] is not None else 2.0 * v.u2
    x = np.linspace(0.0, float(x_max), opts["grid"])
    joints = [j for j in (v.u1, v.u2) if 0.0 < j <= x_max]
    x = np.unique(np.concatenate([x, joints]))
    vals = v(x)
    slopes = v(x, 1)
    mv = np.asarray(m_operator(params, v, x))
    gen = v.generator(x)
    rows = [[float(a), float(b), float(c), float(d), float(e)] for a, b, c, d, e in zip(x, vals, slopes, mv, gen)]
    result = {
        "regime": ts.regime.value,
        "u1": float(v.u1),
        "u2": float(v.u2),
        "beta_star": float(ts.beta_star),
        "columns": ["x", "V", "dV", "MV", "AV"],
        "rows": rows,
        "max_MV_minus_V": float(np.max(mv - vals)),
    }
    return result, ["x", "V", "dV", "MV", "AV"], rows, True


def cmd_verify(params: ModelParams, opts: dict):
    ts = solve_fixed_point(params)
    v = assemble_value(params, ts)
    grid = bellman_grid(v.u1, v.u2, opts["grid"], opts["refine"])
    rep = bellman_verify(params, v, grid)
    result = rep.to_dict()
    result["regime"] = ts.regime.value
    result["summary"] = "PASS" if rep.passed else "FAIL"
    return result, ["key", "value"], _flatten("", result, []), rep.passed


def cmd_simulate(params: ModelParams, opts: dict):
    ts = solve_fixed_point(params)
    v = assemble_value(params, ts)
    if opts["policy"] == "barrier" or ts.u1 == 0.0:
        u0 = solve_barrier(params).u0
        eps = opts["epsilon"] if opts["epsilon"] is not None else u0 / 10.0
        policy = simulate.PolicySpec.barrier(u0, eps, params)
    else:
        eps = opts["epsilon"] if opts["epsilon"] is not None else (ts.u2 - ts.u1) / 10.0
        policy = simulate.PolicySpec.two_threshold(ts.u1, ts.u2, eps, params)
    x0 = opts["x0"] if opts["x0"] is not None else 0.5 * (policy.u1 + policy.u2)
    est = simulate.simulate_policy(params, policy, x0, opts["paths"], opts["seed"])
    if policy.kind is simulate.PolicyKind.BARRIER_EPS:
        closed = simulate.veps_closed_form_barrier(params, eps, x0)
    else:
        closed = simulate.veps_closed_form_twothreshold(params, v, eps, x0)
    result = {
        "policy": {"kind": policy.kind.value, "epsilon": eps, "u1": policy.u1, "u2": policy.u2},
        "x0": x0,
        "estimate": est.to_dict(),
        "closed_form": closed,
        "value": float(v(x0)),
        "z_score": (est.mean - closed) / est.std_error if est.std_error > 0 else 0.0,
    }
    if opts["trace"]:
        simulate.write_trace_csv(simulate.trace_path(params, policy, x0, opts["seed"]), opts["trace"])
        result["trace"] = opts["trace"]
    return result, ["key", "value"], _flatten("", result, []), True


def cmd_asymptotics(params: ModelParams, opts: dict):
    rows = asymptotic_check(params, sorted(opts["deltas"], reverse=True))
    sol = solve_barrier(params)
    table = [[r.delta, float(r.u1), float(r.u2), r.scale, float(r.u1_ratio), float(r.u2_ratio), r.regime] for r in rows]
    result = {
        "u0": sol.u0,
        "u_hat_K": u_hat_K(params),
        "columns": ["delta", "u1", "u2", "scale", "u1_ratio", "u2_ratio", "regime"],
        "rows": table,
        "u1_ratio_trends_to_one": trends_to_one([r.u1_ratio for r in rows]),
        "u2_ratio_trends_to_one": trends_to_one([r.u2_ratio for r in rows]),
    }
    return result, result["columns"], table, True


def cmd_heatlab(params: ModelParams, opts: dict):
    u0 = solve_barrier(params).u0
    x = heatlab.default_grid(params, opts["grid"])
    rng = np.random.default_rng(opts["seed"])
    t_samples = np.geomspace(1e-3, opts["t_end"], opts["samples"])
    rows = []

    p_fn = heatlab.hitting_prob_function(params, 0.1)
    n = opts["grid"]
    errs, orders = heatlab.convergence_order(params, p_fn, 0.5, levels=(n // 4, n // 2, n))
    rows.append(["order_p", 0, bool(abs(orders[-1] - 2.0) <= 0.3), json.dumps([float(o) for o in orders])])

    for i, fn in enumerate(heatlab.random_one_crossing_family(params, opts["trials"], rng, x)):
        r1 = heatlab.check_single_crossing(params, fn, t_samples, x)
        rows.append(["single_crossing", i, r1.passed, json.dumps([q.n_sign_changes for q in r1.reports])])
        r3 = heatlab.check_nondegenerate_crossing(params, fn, t_samples, x)
        rows.append(["nondegenerate", i, r3.passed, json.dumps(r3.meta["margin"])])
    for i, fn in enumerate(heatlab.random_bump_family(params, opts["trials"], rng, opts["t_end"], x)):
        r2 = heatlab.check_interval_positivity(params, fn, t_samples, x)
        rows.append(["interval_positivity", i, r2.passed, json.dumps([q.kind for q in r2.reports])])

    ts = solve_fixed_point(params)
    if ts.u1 > 0.0:
        gap = heatlab.GapFunction(params, ts.beta_star, ts.u2)
        touch = heatlab.touch_curvature(params, gap, params.Delta, x)
        rows.append(["touch_curvature", 0, touch.second_difference < 0.0, json.dumps(touch.__dict__)])
    passed = all(r[2] for r in rows)
    result = {
        "u0": u0,
        "dx": float(x[1] - x[0]),
        "x_max": float(x[-1]),
        "columns": ["check", "trial", "passed", "detail"],
        "rows": rows,
        "passed": passed,
    }
    return result, result["columns"], rows, passed


COMMANDS: dict[str, Callable] = {
    "thresholds": cmd_thresholds,
    "value": cmd_value,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "asymptotics": cmd_asymptotics,
    "heatlab": cmd_heatlab,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="divctl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"divctl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} pipeline")
        sp.add_argument("--config", required=True, help="JSON file with mu, sigma, rho, K, Delta and options")
        sp.add_argument("--out", default=None, help="output file (default: standard output)")
        sp.add_argument("--format", choices=["json", "csv"], default="json")
        sp.add_argument("--seed", type=int, default=None, help="RNG seed (unsigned 64-bit)")
        sp.add_argument("--paths", type=int, default=None, help="Monte-Carlo path count")
        sp.add_argument("--grid", type=int, default=None, help="grid size")
    return parser


def _render(command, params, opts, result, header, rows, fmt) -> str:
    config = {"params": params.to_dict(), "options": opts}
    if fmt == "json":
        doc = {"command": command, "version": __version__, "config": config, "result": result}
        return json.dumps(_to_jsonable(doc), indent=2) + "\n"
    buf = io.StringIO()
    buf.write("# " + json.dumps(_to_jsonable({"command": command, "version": __version__, "config": config})) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in _to_jsonable(row)])
    return buf.getvalue()


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {"seed": args.seed, "paths": args.paths, "grid": args.grid}
    try:
        params, opts = load_config(args.config, args.command, overrides)
    except (ConfigError, InvalidParams) as exc:
        print(f"divctl: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        result, header, rows, passed = COMMANDS[args.command](params, opts)
    except (InvalidParams, simulate.InvalidPolicy) as exc:
        print(f"divctl: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # numerical failure of any solver stage
        print(f"divctl: solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    text = _render(args.command, params, opts, result, header, rows, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.command == "verify":
        print(result["summary"], file=sys.stderr)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
