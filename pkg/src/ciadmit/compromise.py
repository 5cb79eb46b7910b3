"""Compromise decision theory for the interval family.

For 0 < lam < 1 the objective

    g(b, s; lam) = lam * int R1 dgamma + (1 - lam) * int R2 dgamma

is, up to a constant, an integral over x in [0, d] of a function of
(b(x), s(x)) alone, so it is minimized pointwise. The minimizer has b = 0
and s solving

    ell(lam) = 2 int phi(s w) w^2 f_W(w) dw,   ell(lam) = lam / ((1 - lam) t E W).

Choosing lam = lambda* with ell(lambda*) = 2 int phi(t w) w^2 f_W dw makes
the minimizer the usual interval. Any interval beating the usual one in both
risks for every gamma would then have a smaller g, which is impossible; the
search harness below looks for such intervals numerically.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import CiadmitError, DomainError
from .intervals import BSFunctions, random_member, usual_interval, validate_F_d
from .numerics import (
    DEFAULT_SPEC,
    INV_SQRT_2PI,
    QuadratureSpec,
    _normal_mass,
    composite_nodes,
    expected_W,
    integrate_semi_infinite_w,
    t_quantile,
    w_rule,
)
from .risk import default_gamma_grid, g_objective, risk_curve

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class DegenerateMinimizer(CiadmitError):
    """r(s) is increasing on (0, inf); its infimum sits at the boundary s -> 0."""

    def __init__(self, message, ell_value):
        super().__init__(message)
        self.ell_value = ell_value
        self.s_opt = 0.0


def _check_lambda(lam):
    if not 0.0 < lam < 1.0:
        raise DomainError(f"lambda must lie in (0, 1), got {lam}")


def ell(lam: float, m, alpha: float) -> float:
    """lam / ((1 - lam) t(m) E(W)); increasing from 0 to infinity on (0, 1)."""
    _check_lambda(lam)
    return lam / ((1.0 - lam) * t_quantile(m, alpha) * expected_W(m))


def _w_width(m, alpha):
    # integrands below vary on the scale 1/t in w; one rule per (m, alpha)
    # keeps lambda* and the root of dr/ds on the same discretization
    return 0.5 / t_quantile(m, alpha)


def _density_moment(s: float, m, alpha: float, spec: QuadratureSpec) -> float:
    """int_0^inf phi(s w) w^2 f_W(w) dw."""
    integrand = lambda w: np.exp(-0.5 * (s * w) ** 2) * INV_SQRT_2PI * w * w
    return integrate_semi_infinite_w(integrand, m, spec, _w_width(m, alpha))


def ell_target(m, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """2 int phi(t(m) w) w^2 f_W(w) dw, the value ell(lambda*) must take."""
    return 2.0 * _density_moment(t_quantile(m, alpha), m, alpha, spec)


def lambda_star(m, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """The lam with ell(lam) = 2 int phi(t w) w^2 f_W dw.

    ell is a Moebius map of lam, so the equation is inverted exactly:
    lam = L c / (1 + L c) with c = t E(W) and L the target value.
    """
    target = ell_target(m, alpha, spec)
    c = t_quantile(m, alpha) * expected_W(m)
    lam = target * c / (1.0 + target * c)
    residual = ell(lam, m, alpha) - target
    if abs(residual) > 1e-12 * max(1.0, target):
        raise CiadmitError(f"lambda* inversion residual {residual:.3e} too large")
    return lam


def r_prime(s: float, lam: float, m, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """dr/ds = ell(lam) - 2 int phi(s w) w^2 f_W(w) dw."""
    if not s > 0:
        raise DomainError(f"s must be positive, got {s}")
    return ell(lam, m, alpha) - 2.0 * _density_moment(s, m, alpha, spec)


def minimize_r(lam: float, m, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Minimizer over s > 0 of r(s) = ell(lam) s - 2 int Phi(s w) w f_W dw.

    Raises :class:`DegenerateMinimizer` when ell(lam) is at least
    2 int phi(0) w^2 f_W = sqrt(2/pi), where dr/ds > 0 for every s > 0.
    """
    level = ell(lam, m, alpha)
    ceiling = 2.0 * _density_moment(0.0, m, alpha, spec)
    if level >= ceiling:
        raise DegenerateMinimizer(
            f"ell(lambda) = {level:.6g} >= {ceiling:.6g}: r(s) has no interior minimizer", level
        )
    f = lambda s: level - 2.0 * _density_moment(s, m, alpha, spec)
    hi = t_quantile(m, alpha)
    while f(hi) <= 0:
        hi *= 2.0
    s_opt = optimize.brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return s_opt


def _coverage_terms_marginal(b, s, m, spec, width):
    """int [P(|A - b w| <= s w) + P(|A + b w| <= s w)] w f_W dw for A ~ N(0, 1)."""
    mass = lambda w: _normal_mass(w * (b - s), w * (b + s)) + _normal_mass(w * (-b - s), w * (s - b))
    return integrate_semi_infinite_w(lambda w: mass(w) * w, m, spec, width)


def _coverage_terms_conditional(b, s, rho, m, spec, width):
    """Same quantity as :func:`_coverage_terms_marginal`, integrating the
    conditional law N(rho y, 1 - rho^2) of A given B = y against phi(y)."""
    y, y_wt = composite_nodes(-9.0, 9.0, spec)
    y_wt = y_wt * np.exp(-0.5 * y * y) * INV_SQRT_2PI
    sd = math.sqrt(1.0 - rho * rho)
    mu = rho * y[None, :]

    def inner(w):
        w = w[:, None]
        first = _normal_mass((w * (b - s) - mu) / sd, (w * (b + s) - mu) / sd)
        second = _normal_mass((w * (-b - s) + mu) / sd, (w * (-b + s) + mu) / sd)
        return ((first + second) @ y_wt) * w[:, 0]

    return integrate_semi_infinite_w(inner, m, spec, width)


def tilde_q(
    b: float,
    s: float,
    lam: float,
    rho: float,
    m,
    alpha: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
    form: str = "marginal",
) -> float:
    """Pointwise integrand of g at a constant pair (b, s).

    ``form="conditional"`` evaluates the double integral over (y, w) with
    the bivariate-normal conditional probabilities; ``"marginal"`` first
    integrates y out analytically, which removes rho.
    """
    _check_lambda(lam)
    if not s > 0:
        raise DomainError(f"s must be positive, got {s}")
    if not -1.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (-1, 1), got {rho}")
    t = t_quantile(m, alpha)
    length = 2.0 * lam * s / (t * expected_W(m))
    width = _tilde_q_width(b, s, t)
    if form == "marginal":
        cover = _coverage_terms_marginal(b, s, m, spec, width)
    elif form == "conditional":
        cover = _coverage_terms_conditional(b, s, rho, m, spec, width)
    else:
        raise DomainError(f"unknown form {form!r}")
    return length - (1.0 - lam) * cover


def _tilde_q_width(b, s, t):
    return 0.5 / max(t, abs(b) + s)


def tilde_q_db(b: float, s: float, lam: float, m, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Partial derivative of :func:`tilde_q` with respect to b.

    -(1 - lam) int 2 w^2 [phi(w(b+s)) - phi(w(b-s))] f_W dw; odd in b and
    free of cancellation near b = 0.
    """
    _check_lambda(lam)
    t = t_quantile(m, alpha)
    pdf = lambda z: np.exp(-0.5 * z * z) * INV_SQRT_2PI
    integrand = lambda w: w * w * 2.0 * (pdf(w * (b + s)) - pdf(w * (b - s)))
    return -(1.0 - lam) * integrate_semi_infinite_w(integrand, m, spec, _tilde_q_width(b, s, t))


@dataclass(frozen=True)
class CompromiseResult:
    lambda_star: float
    s_opt: float
    b_opt: float
    objective_at_opt: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def ell_value(self) -> float:
        return self.diagnostics["ell"]


def minimize_tilde_q(
    lam: float,
    rho: float,
    m,
    alpha: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
    n_grid: int = 121,
) -> CompromiseResult:
    """Minimize tilde_q over (b, s).

    s comes from :func:`minimize_r`; b is located on a grid over
    [-3 t, 3 t] at that s and refined by golden-section search.
    """
    t = t_quantile(m, alpha)
    s_opt = minimize_r(lam, m, alpha, spec)
    # the scan only ranks grid points; accuracy is checked at the optimum
    scan = spec.unverified()
    q = lambda b: tilde_q(b, s_opt, lam, rho, m, alpha, scan)
    grid = np.linspace(-3.0 * t, 3.0 * t, n_grid)
    values = np.array([q(b) for b in grid])
    i = int(np.argmin(values))
    if i in (0, n_grid - 1):
        raise CiadmitError(f"b-minimum on the grid boundary at b = {grid[i]}")
    lo, hi = grid[i - 1], grid[i + 1]
    res = optimize.minimize_scalar(q, bracket=(lo, grid[i], hi), method="golden")
    b_opt = float(res.x) if res.fun <= values[i] else float(grid[i])
    # q is flat to rounding within ~sqrt(eps / curvature) of its minimum, so
    # the golden point is polished on the stationarity condition dq/db = 0
    dq = lambda b: tilde_q_db(b, s_opt, lam, m, alpha, scan)
    polished = False
    if dq(lo) < 0 < dq(hi):
        b_opt = optimize.brentq(dq, lo, hi, xtol=1e-15, maxiter=500)
        polished = True
    objective = tilde_q(b_opt, s_opt, lam, rho, m, alpha, spec)
    diagnostics = {
        "ell": ell(lam, m, alpha),
        "r_prime_at_opt": r_prime(s_opt, lam, m, alpha, spec),
        "grid_points": n_grid,
        "grid_argmin": float(grid[i]),
        "golden_evaluations": int(res.nfev),
        "golden_b": float(res.x),
        "derivative_polish": polished,
        "w_nodes": int(w_rule(m, spec, _w_width(m, alpha))[0].size),
        "t_m": t,
    }
    return CompromiseResult(lam, s_opt, b_opt, objective, diagnostics)


# ---------------------------------------------------------------------------
# Dominance checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DominanceVerdict:
    candidate_id: int
    cond_a: bool
    cond_b: bool
    cond_c: bool
    min_coverage: float
    max_e: float

    @property
    def dominates(self) -> bool:
        return self.cond_a and self.cond_b and self.cond_c


def dominance_check(
    bs: BSFunctions,
    rho: float,
    m,
    alpha: float,
    gamma_grid=None,
    tol: float = 1e-3,
    spec: QuadratureSpec = DEFAULT_SPEC,
    candidate_id: int = 0,
) -> DominanceVerdict:
    """Does J(b, s) beat the usual interval on the gamma grid?

    (a) e <= 1 + tol everywhere, (b) coverage >= 1 - alpha - tol everywhere,
    (c) e < 1 - tol or coverage > 1 - alpha + tol somewhere.
    """
    grid = default_gamma_grid() if gamma_grid is None else gamma_grid
    curve = risk_curve(bs, grid, rho, m, alpha, spec.unverified())
    e, cov = curve.e, curve.coverage
    target = 1.0 - alpha
    return DominanceVerdict(
        candidate_id=candidate_id,
        cond_a=bool(np.all(e <= 1.0 + tol)),
        cond_b=bool(np.all(cov >= target - tol)),
        cond_c=bool(np.any(e < 1.0 - tol) or np.any(cov > target + tol)),
        min_coverage=float(cov.min()),
        max_e=float(e.max()),
    )


@dataclass
class SearchRecord:
    id: int
    seed: list
    cond_a: bool
    cond_b: bool
    cond_c: bool
    dominates: bool
    min_coverage: float
    max_e: float
    g_at_lambda_star: float
    valid: bool
    interval: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class SearchReport:
    records: list
    lambda_star: float
    g_usual: float
    rho: float
    m: float
    alpha: float
    seed: int

    @property
    def n_dominators(self) -> int:
        return sum(r.dominates for r in self.records)

    @property
    def min_g_gap(self) -> float:
        """Smallest g(candidate) - g(usual) over the sampled candidates."""
        return min(r.g_at_lambda_star for r in self.records) - self.g_usual

    def summary(self) -> dict:
        return {
            "n_candidates": len(self.records),
            "n_dominators": self.n_dominators,
            "n_invalid": sum(not r.valid for r in self.records),
            "n_cond_a": sum(r.cond_a for r in self.records),
            "n_cond_b": sum(r.cond_b for r in self.records),
            "lambda_star": self.lambda_star,
            "g_usual": self.g_usual,
            "min_g_gap": self.min_g_gap,
            "rho": self.rho,
            "m": self.m,
            "alpha": self.alpha,
            "seed": self.seed,
        }

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)


def dominance_search(
    family_sampler: Callable | None,
    n_candidates: int,
    rho: float,
    m,
    alpha: float,
    seed: int,
    d: float | None = None,
    gamma_grid=None,
    tol: float = 1e-3,
    spec: QuadratureSpec = DEFAULT_SPEC,
    workers: int = 1,
) -> SearchReport:
    """Sample members of F(d) and test each against the usual interval.

    ``family_sampler(rng, d, t_m)`` returns a :class:`BSFunctions`; the
    default draws random step/linear pieces with s in [0.2 t, 2 t] and b in
    [-t, t]. Candidate ``i`` uses the generator seeded with ``[seed, i]``,
    so the report is the same for any ``workers``.
    """
    sampler = random_member if family_sampler is None else family_sampler
    t = t_quantile(m, alpha)
    d = t if d is None else d
    spec = spec.unverified()
    lam = lambda_star(m, alpha, spec)
    g_usual = g_objective(usual_interval(m, alpha, d), lam, rho, m, alpha, spec, method="marginal")

    def run(i):
        rng = np.random.default_rng([seed, i])
        bs = sampler(rng, d, t)
        problems = validate_F_d(bs, t)
        verdict = dominance_check(bs, rho, m, alpha, gamma_grid, tol, spec, candidate_id=i)
        g = g_objective(bs, lam, rho, m, alpha, spec, method="marginal")
        return SearchRecord(
            id=i,
            seed=[seed, i],
            cond_a=verdict.cond_a,
            cond_b=verdict.cond_b,
            cond_c=verdict.cond_c,
            dominates=verdict.dominates,
            min_coverage=verdict.min_coverage,
            max_e=verdict.max_e,
            g_at_lambda_star=g,
            valid=not problems,
            interval=bs.to_dict(),
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run, range(n_candidates)))
    else:
        records = [run(i) for i in range(n_candidates)]
    return SearchReport(records, lam, g_usual, rho, m, alpha, seed)
