"""Command line entry points.

Verbs
-----
gen               build a basic measure file (lebesgue, plane, cascade)
splice            build a spliced two-regime measure file
flow              one scenery snapshot of a measure file, as CSV
conical           conical statistics along the flow for sampled points
epsilon           critical-threshold table for (d, k, alpha)
dim               local-dimension estimates for a measure file
rectify           cone-vacancy verdicts for a point-cloud CSV
verify-sharpness  two-sided statistic check on a spliced measure
verify-lower-bound  pointwise lower-bound check on a chosen measure

Global flags: --config FILE, --seed N, --out FILE, --format csv|json.
Exit codes: 0 = pass (or data emitted), 2 = a quantitative check
failed, 1 = error.

Config file schema (--config): one `key = value` per line, with `#`
comments.  Keys are the ExperimentConfig fields: d, k, s, theta, alpha,
eps (comma separated), depth, growth, T, dt (absolute seconds of flow
time) or T_log2, dt_log2 (units of log 2), n_points, m, measure
(spliced | lebesgue | plane), seed, out, format.  Command line flags
override file values.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .cones import epsilon_critical, epsilon_critical_mc
from .errors import InvalidConfigError, SceneryFlowError
from .experiments import (
    ExperimentConfig,
    config_from_mapping,
    verify_lower_bound,
    verify_sharpness,
)
from .measure import (
    RandomWeightRule,
    build_cascade,
    build_lebesgue,
    build_plane,
    load_measure,
    sample_points,
    save_measure,
)
from .rectify import PointCloud, vacancy_survey
from .scenery import scenery_at, snapshot_to_csv
from .splice import build_spliced, schedule_for_theta
from .stats import cone_minima_over_flow, measure_dimension


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.12g}"
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_report(meta, columns, rows):
    lines = [f"# {key} = {_fmt(val)}" for key, val in meta.items()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _json_report(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _parse_floats(text):
    return tuple(float(tok) for tok in str(text).replace(",", " ").split())


def _read_config_file(path):
    pairs = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            for sep in ("=", ":"):
                if sep in line:
                    key, value = line.split(sep, 1)
                    break
            else:
                raise InvalidConfigError(
                    f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}"
                )
            pairs[key.strip()] = value.strip()
    return pairs


def _experiment_config(args, overrides):
    pairs = _read_config_file(args.config) if args.config else {}
    cfg = config_from_mapping(pairs)
    changes = {}
    for name, value in overrides.items():
        if value is not None:
            changes[name] = value
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if args.format is not None:
        changes["format"] = args.format
    return cfg.replace(**changes) if changes else cfg


# ---------------------------------------------------------------------------
# data verbs


def cmd_gen(args):
    seed = args.seed if args.seed is not None else 0
    if args.kind == "lebesgue":
        mu = build_lebesgue(args.d, depth=args.depth)
    elif args.kind == "plane":
        mu = build_plane(args.d, args.k, depth=args.depth)
    else:
        rule = RandomWeightRule(seed=seed, concentration=args.concentration)
        mu = build_cascade(rule, args.d, depth=args.depth, seed=seed)
    out = args.out or f"{args.kind}.json"
    save_measure(mu, out)
    print(f"wrote {args.kind} measure (d={args.d}) to {out}")
    return 0


def cmd_splice(args):
    cfg = ExperimentConfig(
        d=args.d,
        k=args.k,
        s=args.s,
        theta=args.theta,
        alpha=args.alpha if args.alpha is not None else 0.5,
        depth=args.depth,
        growth=args.growth,
        seed=args.seed if args.seed is not None else 0,
    )
    schedule = schedule_for_theta(cfg.theta, cfg.depth, growth=cfg.growth)
    mu = build_spliced(
        cfg.d, cfg.k, schedule=schedule, depth=cfg.depth, seed=cfg.seed
    )
    out = args.out or "spliced.json"
    save_measure(mu, out)
    print(
        f"wrote spliced measure (d={cfg.d}, k={cfg.k}, s={_fmt(cfg.s)}, "
        f"theta={_fmt(cfg.theta)}, alpha={_fmt(cfg.alpha)}, "
        f"depth={cfg.depth}, growth={cfg.growth}) to {out}"
    )
    return 0


def cmd_flow(args):
    mu = load_measure(args.measure)
    x = np.array(_parse_floats(args.x))
    snap = scenery_at(mu, x, args.t, m=args.m)
    _emit(snapshot_to_csv(snap), args.out)
    return 0


def cmd_conical(args):
    mu = load_measure(args.measure)
    cfg = _experiment_config(
        args,
        {
            "d": mu.d,
            "k": args.k,
            "alpha": args.alpha,
            "eps": _parse_floats(args.eps) if args.eps else None,
            "T": args.T,
            "dt": args.dt,
            "n_points": args.n_points,
            "m": args.m,
        },
    )
    if args.points:
        pts = [np.array(_parse_floats(tok)) for tok in args.points.split(";")]
    else:
        limit = getattr(mu.rule, "max_depth", None)
        depth = 36 if limit is None else min(36, limit)
        pts = sample_points(mu, cfg.n_points, depth, seed=cfg.seed)
    rows = []
    records = []
    for i, x in enumerate(pts):
        _, values = cone_minima_over_flow(
            mu, x, cfg.T, cfg.k, cfg.alpha, dt=cfg.dt, m=cfg.m
        )
        for e in cfg.eps:
            stat = float(np.mean(values > e))
            rows.append(
                [i, *[float(c) for c in x], cfg.T, e, cfg.alpha, cfg.k,
                 stat, float(values.min()), float(values.mean())]
            )
            records.append(
                {
                    "point_id": i,
                    "x": [float(c) for c in x],
                    "T": cfg.T,
                    "eps": e,
                    "alpha": cfg.alpha,
                    "k": cfg.k,
                    "statistic": stat,
                    "min_over_t": float(values.min()),
                    "mean_over_t": float(values.mean()),
                }
            )
    meta = {
        "verb": "conical",
        "measure": args.measure,
        "dt": cfg.dt,
        "m": cfg.snapshot_depth,
        "seed": cfg.seed,
        "eps_critical": cfg.eps_critical,
    }
    if (args.format or "csv") == "json":
        _emit(_json_report({"meta": meta, "rows": records}), args.out)
    else:
        cols = ["point_id"] + [f"x{j}" for j in range(mu.d)] + [
            "T", "eps", "alpha", "k", "statistic", "min_over_t", "mean_over_t",
        ]
        _emit(_csv_report(meta, cols, rows), args.out)
    return 0


def cmd_epsilon(args):
    alphas = _parse_floats(args.alpha)
    rows = []
    records = []
    for alpha in alphas:
        method = args.method or ("quadrature" if args.d <= 3 else "monte-carlo")
        if method == "quadrature":
            value, err = epsilon_critical(args.d, args.k, alpha, method=method), 0.0
        else:
            value, err = epsilon_critical_mc(
                args.d, args.k, alpha, n=args.n,
                seed=args.seed if args.seed is not None else 0,
            )
        rows.append([args.d, args.k, alpha, value, method, err])
        records.append(
            {
                "d": args.d, "k": args.k, "alpha": alpha,
                "value": value, "method": method, "error_estimate": err,
            }
        )
    if (args.format or "csv") == "json":
        _emit(_json_report({"rows": records}), args.out)
    else:
        cols = ["d", "k", "alpha", "value", "method", "error_estimate"]
        _emit(_csv_report({"verb": "epsilon"}, cols, rows), args.out)
    return 0


def cmd_dim(args):
    mu = load_measure(args.measure)
    seed = args.seed if args.seed is not None else 0
    est = measure_dimension(
        mu,
        n_points=args.n_points,
        r_min=args.rmin,
        r_max=args.rmax,
        seed=seed,
        sample_depth=args.sample_depth,
    )
    meta = {
        "verb": "dim",
        "measure": args.measure,
        "n_points": args.n_points,
        "r_min": est.r_range[0],
        "r_max": est.r_range[1],
        "seed": seed,
        "aggregate_p05": est.slope,
        "aggregate_liminf": est.liminf_slope,
        "median_residual": est.residual,
    }
    if (args.format or "csv") == "json":
        _emit(
            _json_report({"meta": meta, "slopes": list(est.points)}), args.out
        )
    else:
        rows = [[i, s] for i, s in enumerate(est.points)]
        rows.append(["aggregate_p05", est.slope])
        rows.append(["aggregate_liminf", est.liminf_slope])
        _emit(_csv_report(meta, ["point_id", "slope"], rows), args.out)
    return 0


def cmd_rectify(args):
    pts = np.loadtxt(args.cloud, delimiter=",", ndmin=2)
    E = PointCloud(pts.shape[1], pts, r_min=args.rmin)
    survey = vacancy_survey(E, args.k, args.alpha, r=args.r)
    meta = {
        "verb": "rectify",
        "cloud": args.cloud,
        "k": survey["k"],
        "alpha": survey["alpha"],
        "r": survey["r"],
        "r_min": survey["r_min"],
        "fraction": survey["fraction"],
    }
    if (args.format or "csv") == "json":
        _emit(_json_report({"meta": meta, "verdicts": survey["verdicts"]}), args.out)
    else:
        cols = ["point_id"] + [f"x{j}" for j in range(E.d)] + ["vacant"]
        rows = [
            [i, *[float(c) for c in E.points[i]], v]
            for i, v in enumerate(survey["verdicts"])
        ]
        _emit(_csv_report(meta, cols, rows), args.out)
    print(f"vacancy fraction: {_fmt(survey['fraction'])}")
    return 0


# ---------------------------------------------------------------------------
# verification verbs


def _experiment_overrides(args):
    return {
        "d": args.d,
        "k": args.k,
        "s": args.s,
        "theta": args.theta,
        "alpha": args.alpha,
        "eps": _parse_floats(args.eps) if args.eps else None,
        "depth": args.depth,
        "growth": args.growth,
        "T": args.T,
        "dt": args.dt,
        "n_points": args.n_points,
        "m": args.m,
        "measure": getattr(args, "measure", None),
    }


def _write_report(report, cfg):
    fmt = cfg.format
    if fmt == "json":
        _emit(_json_report(report), cfg.out)
        return
    meta = {"experiment": report["experiment"], "status": report["status"]}
    meta.update(report["config"])
    if report["experiment"] == "sharpness":
        cols = ["eps", "side", "target", "mean", "sd", "tolerance", "pass"]
        rows = [[r[c] for c in cols] for r in report["results"]]
    else:
        for key in (
            "eps", "dimension_estimate", "dimension_gate_slack", "target",
            "tolerance", "required_fraction", "fraction_holding", "reason",
        ):
            if key in report:
                meta[key] = report[key]
        cols = ["point_id", "statistic", "holds"]
        rows = [
            [i, s, s >= report["target"] - report["tolerance"]]
            for i, s in enumerate(report.get("statistics", []))
        ]
    _emit(_csv_report(meta, cols, rows), cfg.out)


def _exit_code(report):
    return 2 if report["status"] == "fail" else 0


def cmd_verify_sharpness(args):
    cfg = _experiment_config(args, _experiment_overrides(args))
    report = verify_sharpness(cfg)
    _write_report(report, cfg)
    for r in report["results"]:
        print(
            f"eps={_fmt(r['eps'])} [{r['side']}]: mean={_fmt(r['mean'])} "
            f"sd={_fmt(r['sd'])} target={_fmt(r['target'])} "
            f"tol={_fmt(r['tolerance'])} -> {'pass' if r['pass'] else 'FAIL'}"
        )
    print(f"sharpness: {report['status'].upper()}")
    return _exit_code(report)


def cmd_verify_lower_bound(args):
    cfg = _experiment_config(args, _experiment_overrides(args))
    report = verify_lower_bound(cfg)
    _write_report(report, cfg)
    if report["status"] == "not-applicable":
        print(f"lower bound not applicable: {report['reason']}")
    else:
        print(
            f"eps={_fmt(report['eps'])}: fraction holding "
            f"{_fmt(report['fraction_holding'])} "
            f"(need >= {_fmt(report['required_fraction'])})"
        )
        print(f"lower bound: {report['status'].upper()}")
    return _exit_code(report)


# ---------------------------------------------------------------------------
# parser


def _add_experiment_flags(p):
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--eps", help="comma-separated eps values")
    p.add_argument("--depth", type=int)
    p.add_argument("--growth", type=int)
    p.add_argument("--T", type=float, dest="T")
    p.add_argument("--dt", type=float)
    p.add_argument("--n-points", type=int, dest="n_points")
    p.add_argument("--m", type=int)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value experiment file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"))

    parser = argparse.ArgumentParser(
        prog="sceneryflow",
        description="scenery-flow statistics of dyadic cascade measures",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen", parents=[common], help="build a basic measure file")
    p.add_argument("--kind", choices=("lebesgue", "plane", "cascade"), required=True)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--depth", type=int, default=0)
    p.add_argument("--concentration", type=float, default=1.0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("splice", parents=[common], help="build a spliced measure file")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--s", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--depth", type=int, default=48)
    p.add_argument("--growth", type=int, default=48)
    p.set_defaults(func=cmd_splice)

    p = sub.add_parser("flow", parents=[common], help="snapshot of the scenery flow")
    p.add_argument("--measure", required=True)
    p.add_argument("--x", required=True, help="comma-separated coordinates")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--m", type=int)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("conical", parents=[common], help="conical statistics over the flow")
    p.add_argument("--measure", required=True)
    p.add_argument("--points", help="semicolon-separated points, comma coords")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_conical)

    p = sub.add_parser("epsilon", parents=[common], help="critical threshold table")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--alpha", required=True, help="comma-separated openings")
    p.add_argument("--method", choices=("quadrature", "monte-carlo"))
    p.add_argument("--n", type=int, default=1_000_000)
    p.set_defaults(func=cmd_epsilon)

    p = sub.add_parser("dim", parents=[common], help="local dimension estimates")
    p.add_argument("--measure", required=True)
    p.add_argument("--n-points", type=int, dest="n_points", default=50)
    p.add_argument("--rmin", type=float, default=1e-3)
    p.add_argument("--rmax", type=float, default=0.25)
    p.add_argument("--sample-depth", type=int, dest="sample_depth")
    p.set_defaults(func=cmd_dim)

    p = sub.add_parser("rectify", parents=[common], help="cone-vacancy verdicts for a point cloud")
    p.add_argument("cloud", help="CSV, one point per row")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--r", type=float)
    p.add_argument("--rmin", type=float)
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser(
        "verify-sharpness", parents=[common],
        help="two-sided statistic check on a spliced measure",
    )
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_verify_sharpness)

    p = sub.add_parser(
        "verify-lower-bound", parents=[common],
        help="pointwise lower-bound check",
    )
    _add_experiment_flags(p)
    p.add_argument("--measure", choices=("spliced", "lebesgue", "plane"))
    p.set_defaults(func=cmd_verify_lower_bound)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SceneryFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
