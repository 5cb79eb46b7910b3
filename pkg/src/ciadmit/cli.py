"""Command-line interface.

Exit codes: 0 success, 1 scientific red flag (a dominating interval was
found, the minimizer is not the usual interval, or Monte Carlo disagrees
with quadrature), 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path


from .compromise import DegenerateMinimizer, dominance_search, ell, lambda_star, minimize_tilde_q
from .design import sufficient_stats
from .errors import CiadmitError
from .intervals import (
    BSFunctions,
    evaluate_interval,
    naive_pretest,
    pointwise_length_compare,
    smooth_mixture,
    usual_interval,
    validate_F_d,
)
from .io import (
    InputError,
    check_domain,
    gnuplot_script,
    load_config,
    load_design,
    load_interval,
    provenance,
    provenance_lines,
)
from .mcsim import simulate_risk
from .numerics import QuadratureSpec, t_quantile, z_quantile
from .risk import default_gamma_grid, r1, r2, risk_curve

EXIT_OK, EXIT_FLAG, EXIT_INPUT = 0, 1, 2

# parameter -> (type, default)
_COMMON = {
    "rho": (float, None),
    "m": (float, None),
    "alpha": (float, 0.05),
    "seed": (int, 20240601),
}


def _emit(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, default=float) + "\n"


def _settings(args, config, names):
    """Resolve parameters: command-line flag, then config key, then default."""
    out = {}
    for name in names:
        conv, default = _COMMON.get(name, (lambda v: v, None))
        value = getattr(args, name, None)
        if value is None:
            value = config.get(name, default)
        if value is None:
            raise InputError(f"parameter {name!r} is required (flag --{name.replace('_', '-')} or config key)")
        out[name] = conv(value)
    if "m" in out:
        m = out["m"]
        out["m"] = math.inf if m == math.inf else int(check_domain("m", m, lo=0, integer=True))
    if "alpha" in out:
        check_domain("alpha", out["alpha"], lo=0.0, hi=1.0)
    if "rho" in out:
        check_domain("rho", out["rho"], lo=-1.0, hi=1.0)
    return out


def _spec(config) -> QuadratureSpec:
    return QuadratureSpec.from_mapping(config.get("quadrature", {}))


def _interval(spec_text: str, rho: float, m, alpha: float) -> BSFunctions:
    """``usual``, ``naive[:q]``, ``mixture[:d]`` or a path to an interval JSON."""
    name, _, arg = spec_text.partition(":")
    t = t_quantile(m, alpha)
    if name == "usual":
        return usual_interval(m, alpha, float(arg) if arg else t)
    if name == "naive":
        return naive_pretest(float(arg) if arg else t, rho, m, alpha)
    if name == "mixture":
        d = float(arg) if arg else t
        return smooth_mixture("smoothstep", rho, m, alpha, d)
    return load_interval(spec_text)


def _grid(args):
    return default_gamma_grid(args.grid_limit, args.grid_step)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_geometry(args, config):
    problem, _ = load_design(args.design, config)
    geom = problem.geometry
    report = geom.as_dict() | {"rho": float(geom.rho), "t_m": t_quantile(geom.m, problem.alpha)}
    report["provenance"] = provenance(config)
    _emit(_dump(report), args.out)
    return EXIT_OK


def cmd_interval(args, config):
    problem, y = load_design(args.design, config)
    geom = problem.geometry
    bs = _interval(args.interval, float(geom.rho), geom.m, problem.alpha)
    problems = validate_F_d(bs, t_quantile(geom.m, problem.alpha))
    if problems:
        raise InputError("interval is not a member of F(d): " + "; ".join(problems))
    stats = sufficient_stats(problem, y)
    real = evaluate_interval(bs, stats, geom)
    report = {
        "theta_hat": stats.theta_hat,
        "tau_hat": stats.tau_hat,
        "sigma_hat": stats.sigma_hat,
        "lower": real.lower,
        "upper": real.upper,
        "length": real.length,
        "provenance": provenance(config),
    }
    _emit(_dump(report), args.out)
    return EXIT_OK


def cmd_curve(args, config):
    p = _settings(args, config, ["rho", "m", "alpha"])
    bs = _interval(args.interval, p["rho"], p["m"], p["alpha"])
    problems = validate_F_d(bs, t_quantile(p["m"], p["alpha"]))
    if problems:
        sys.stderr.write(_dump({"error": "interval is not a member of F(d)", "violations": problems}))
        return EXIT_INPUT
    curve = risk_curve(bs, _grid(args), p["rho"], p["m"], p["alpha"], _spec(config), workers=args.workers)
    _emit(curve.to_csv(provenance_lines(config | p)), args.out)
    if args.gnuplot:
        Path(args.gnuplot).write_text(gnuplot_script(args.out or "curve.csv", bs.label))
    return EXIT_OK


def cmd_known_variance(args, config):
    p = _settings(args, config, ["alpha"])
    rho = args.rho if args.rho is not None else float(config.get("rho", 0.0))
    z = z_quantile(p["alpha"])
    bs = _interval(args.interval, rho, math.inf, p["alpha"])
    curve = risk_curve(bs, _grid(args), rho, math.inf, p["alpha"], _spec(config))
    report = {
        "z": z,
        "usual_half_width": z,
        "usual_length": 2.0 * z,
        "interval": bs.label,
        "max_e": float(curve.e.max()),
        "min_e": float(curve.e.min()),
        "min_coverage": float(curve.coverage.min()),
        "max_coverage": float(curve.coverage.max()),
        "provenance": provenance(config | p),
    }
    if args.curve_out:
        Path(args.curve_out).write_text(curve.to_csv(provenance_lines(config | p)))
    _emit(_dump(report), args.out)
    return EXIT_OK


def cmd_lambda_star(args, config):
    p = _settings(args, config, ["m", "alpha"])
    spec = _spec(config)
    lam = lambda_star(p["m"], p["alpha"], spec)
    report = {
        "m": p["m"],
        "alpha": p["alpha"],
        "t_m": t_quantile(p["m"], p["alpha"]),
        "lambda_star": lam,
        "ell_lambda_star": ell(lam, p["m"], p["alpha"]),
        "ell_upper_bound": math.sqrt(2.0 / math.pi),
        "provenance": provenance(config | p),
    }
    _emit(_dump(report), args.out)
    return EXIT_OK


def cmd_verify_minimizer(args, config):
    p = _settings(args, config, ["m", "alpha", "rho"])
    spec = _spec(config)
    m, alpha, rho = p["m"], p["alpha"], p["rho"]
    t = t_quantile(m, alpha)
    lam_star = lambda_star(m, alpha, spec)
    lam = lam_star if args.lam is None else args.lam
    report = {"m": m, "alpha": alpha, "rho": rho, "t_m": t, "lambda_star": lam_star, "lambda": lam}
    try:
        res = minimize_tilde_q(lam, rho, m, alpha, spec)
    except DegenerateMinimizer as exc:
        report |= {"degenerate": True, "message": str(exc), "ell": exc.ell_value, "success": False}
        _emit(_dump(report), args.out)
        return EXIT_OK if args.lam is not None else EXIT_FLAG
    ell_value = res.ell_value
    matches = abs(res.s_opt - t) < 1e-6 and abs(res.b_opt) < 1e-6
    report |= {
        "ell": ell_value,
        "ell_in_range": 0.0 < ell_value < math.sqrt(2.0 / math.pi),
        "s_opt": res.s_opt,
        "b_opt": res.b_opt,
        "s_residual": res.s_opt - t,
        "r_prime_at_opt": res.diagnostics["r_prime_at_opt"],
        "objective_at_opt": res.objective_at_opt,
        "matches_usual_interval": matches,
        "success": matches and 0.0 < ell_value < math.sqrt(2.0 / math.pi),
        "provenance": provenance(config | p),
    }
    _emit(_dump(report), args.out)
    if args.lam is not None:
        return EXIT_OK
    return EXIT_OK if report["success"] else EXIT_FLAG


def cmd_dominance(args, config):
    p = _settings(args, config, ["rho", "m", "alpha", "seed"])
    n = args.n if args.n is not None else int(config.get("n", 200))
    d = args.d if args.d is not None else config.get("d")
    tol = args.tol if args.tol is not None else float(config.get("tol", 1e-3))
    report = dominance_search(
        None, n, p["rho"], p["m"], p["alpha"], p["seed"], d=d, gamma_grid=_grid(args), tol=tol,
        spec=_spec(config), workers=args.workers,
    )
    _emit(report.to_jsonl(), args.out)
    summary = report.summary() | {"tol": tol, "provenance": provenance(config | p, p["seed"])}
    if args.summary:
        buf = io.StringIO()
        for line in provenance_lines(config | p, p["seed"]):
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        keys = [k for k in summary if k != "provenance"]
        writer.writerow(keys)
        writer.writerow([summary[k] for k in keys])
        Path(args.summary).write_text(buf.getvalue())
    sys.stderr.write(_dump(summary))
    return EXIT_FLAG if report.n_dominators else EXIT_OK


def cmd_simulate(args, config):
    p = _settings(args, config, ["rho", "m", "alpha", "seed"])
    bs = _interval(args.interval, p["rho"], p["m"], p["alpha"])
    spec = _spec(config)
    gammas = [float(g) for g in args.gamma.split(",")]
    buf = io.StringIO()
    for line in provenance_lines(config | p, p["seed"]):
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["gamma", "seed", "n_reps", "coverage_mc", "coverage_se", "coverage_quad",
         "e_mc", "e_se", "e_quad", "agree"]
    )
    all_agree = True
    for i, g in enumerate(gammas):
        seed = p["seed"] + i
        est = simulate_risk(bs, g, p["rho"], p["m"], p["alpha"], args.reps, seed, workers=args.workers)
        cov_q = 1.0 - p["alpha"] - r2(bs, g, p["rho"], p["m"], p["alpha"], spec)
        e_q = 1.0 + r1(bs, g, p["m"], p["alpha"], spec)
        ok = est.coverage.agrees_with(cov_q) and est.scaled_length.agrees_with(e_q)
        all_agree &= ok
        writer.writerow(
            [f"{v:.12g}" if isinstance(v, float) else v for v in
             (g, seed, args.reps, est.coverage.mean, est.coverage.std_error, cov_q,
              est.scaled_length.mean, est.scaled_length.std_error, e_q, int(ok))]
        )
    _emit(buf.getvalue(), args.out)
    return EXIT_OK if all_agree else EXIT_FLAG


def cmd_length_compare(args, config):
    p = _settings(args, config, ["rho", "m", "alpha"])
    bs = _interval(args.interval, p["rho"], p["m"], p["alpha"])
    _emit(_dump(pointwise_length_compare(bs, p["m"], p["alpha"])), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ciadmit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, params=(), grid=False, design=False, interval=False):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=func)
        sp.add_argument("--config", help="TOML run config")
        sp.add_argument("--out", help="output file (default stdout)")
        if design:
            sp.add_argument("--design", required=True, help="design CSV with header row")
        if interval:
            sp.add_argument(
                "--interval", default="usual",
                help="usual | naive[:q] | mixture[:d] | path to interval JSON (default usual)",
            )
        for prm in params:
            if prm == "rho":
                sp.add_argument("--rho", type=float, help="correlation of theta_hat and tau_hat, in (-1, 1)")
            elif prm == "m":
                sp.add_argument("--m", type=float, help="residual degrees of freedom (positive integer or inf)")
            elif prm == "alpha":
                sp.add_argument("--alpha", type=float, help="nominal non-coverage, in (0, 1); default 0.05")
            elif prm == "seed":
                sp.add_argument("--seed", type=int, help="random seed (echoed in all outputs)")
            elif prm == "workers":
                sp.add_argument("--workers", type=int, default=1, help="worker threads (results do not depend on it)")
        if grid:
            sp.add_argument("--grid-limit", type=float, default=8.0, help="gamma grid is [-limit, limit]")
            sp.add_argument("--grid-step", type=float, default=0.1, help="gamma grid spacing")
        return sp

    add("geometry", cmd_geometry, "print v11, v22, rho, m and t(m) for a design", design=True)
    add("interval", cmd_interval, "compute J(b, s) endpoints from data", design=True, interval=True)
    sp = add("curve", cmd_curve, "risk curve CSV over a gamma grid", ("rho", "m", "alpha", "workers"),
             grid=True, interval=True)
    sp.add_argument("--gnuplot", help="also write a gnuplot script here")
    add("lambda-star", cmd_lambda_star, "compute lambda* and ell(lambda*)", ("m", "alpha"))
    sp = add("verify-minimizer", cmd_verify_minimizer, "check that the g-minimizer at lambda* is the usual interval",
             ("m", "alpha", "rho"))
    sp.add_argument("--lambda", dest="lam", type=float, help="use this lambda instead of lambda*")
    sp = add("dominance", cmd_dominance, "random search for intervals dominating the usual one",
             ("rho", "m", "alpha", "seed", "workers"), grid=True)
    sp.add_argument("--n", type=int, help="number of candidates (default 200)")
    sp.add_argument("--d", type=float, help="modification range d (default t(m))")
    sp.add_argument("--tol", type=float, help="dominance tolerance (default 1e-3)")
    sp.add_argument("--summary", help="summary CSV path")
    sp = add("simulate", cmd_simulate, "Monte Carlo vs quadrature at given gammas",
             ("rho", "m", "alpha", "seed", "workers"), interval=True)
    sp.add_argument("--gamma", default="0,1,2,3", help="comma-separated gamma values")
    sp.add_argument("--reps", type=int, default=100_000, help="replications per gamma")
    sp = add("known-variance", cmd_known_variance, "W = 1 mode with the normal quantile z", ("alpha",),
             grid=True, interval=True)
    sp.add_argument("--rho", type=float, help="correlation (default 0)")
    sp.add_argument("--curve-out", help="write the risk curve CSV here")
    add("length-compare", cmd_length_compare, "pointwise comparison of s with t(m)", ("rho", "m", "alpha"),
        interval=True)
    return parser


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except (CiadmitError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        for item in getattr(exc, "violations", ()):
            sys.stderr.write(f"  - {item}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
