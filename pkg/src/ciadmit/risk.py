"""Length and coverage risk of J(b, s) as functions of gamma.

With gamma = tau / (sigma sqrt(v22)), W = sigma_hat / sigma and the
substitution h = w x for the standardized statistic,

    R1(gamma) = E(length J) / E(length I) - 1
              = 1/(t E W) int_w int_{-d}^{d} (s(|x|) - t) phi(w x - gamma) dx w^2 f_W dw

    R2(gamma) = P(theta not in J) - alpha
              = -int_w int_{-d}^{d} (k - k_dag)(w x, w) phi(w x - gamma) dx w f_W dw

where k and k_dag are the conditional coverage probabilities of J and of
the usual interval given (tau_hat, sigma_hat). The x-integral is folded onto
[0, d] using the oddness of b, and x-panels are cut at every knot of the
interval description so that jumps in b and s fall on panel edges.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyError, DomainError
from .intervals import BSFunctions, require_F_d
from .numerics import (
    DEFAULT_SPEC,
    INV_SQRT_2PI,
    QuadratureSpec,
    _normal_mass,
    composite_nodes,
    expected_W,
    t_quantile,
    w_bounds,
    w_rule,
)

Y_HALF_RANGE = 9.0


def _phi(x):
    return np.exp(-0.5 * x * x) * INV_SQRT_2PI


def _check_rho(rho):
    if not -1.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (-1, 1), got {rho}")


@dataclass(frozen=True)
class _Grid:
    """Tensor quadrature over (w, x) for one interval description."""

    t: float
    ew: float
    w: np.ndarray
    w_wt: np.ndarray
    x: np.ndarray
    x_wt: np.ndarray
    b: np.ndarray
    s: np.ndarray

    @classmethod
    def build(cls, bs: BSFunctions, m, alpha: float, spec: QuadratureSpec) -> "_Grid":
        t = t_quantile(m, alpha)
        require_F_d(bs, t)
        w, w_wt = w_rule(m, spec)
        x, x_wt = composite_nodes(0.0, bs.d, spec, breakpoints=bs.knots)
        return cls(t, expected_W(m), w, w_wt, x, x_wt, bs.b(x), bs.s(x))


def _r1_at(g: _Grid, gamma: float) -> float:
    wx = g.w[:, None] * g.x[None, :]
    kernel = _phi(wx - gamma) + _phi(wx + gamma)
    inner = kernel @ (g.x_wt * (g.s - g.t))
    return float(np.dot(g.w_wt * g.w * g.w, inner)) / (g.t * g.ew)


def _r2_at(g: _Grid, gamma: float, rho: float) -> float:
    sd = math.sqrt(1.0 - rho * rho)
    w = g.w[:, None]
    wx = w * g.x[None, :]
    lo, hi = w * (g.b - g.s), w * (g.b + g.s)
    tw = g.t * w
    total = 0.0
    for sign in (1.0, -1.0):
        # sign = -1 is the mirror point -x, where b(-x) = -b(x)
        mu = rho * (sign * wx - gamma)
        if sign > 0:
            k = _normal_mass((lo - mu) / sd, (hi - mu) / sd)
        else:
            k = _normal_mass((-hi - mu) / sd, (-lo - mu) / sd)
        k_dag = _normal_mass((-tw - mu) / sd, (tw - mu) / sd)
        total = total + (k - k_dag) * _phi(wx - sign * gamma)
    inner = total @ g.x_wt
    return -float(np.dot(g.w_wt * g.w, inner))


def _verified(compute, spec: QuadratureSpec, what: str) -> float:
    value = compute(spec.unverified())
    if not spec.verify:
        return value
    fine = compute(spec.doubled())
    if abs(fine - value) > spec.abs_tol:
        raise AccuracyError(f"{what}: node doubling changed the value by {abs(fine - value):.3e}", value, fine)
    return fine


def r1(bs: BSFunctions, gamma: float, m, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Scaled expected length of J(b, s) minus one."""
    return _verified(lambda sp: _r1_at(_Grid.build(bs, m, alpha, sp), gamma), spec, "r1")


def r2(bs: BSFunctions, gamma: float, rho: float, m, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Non-coverage probability of J(b, s) minus alpha."""
    _check_rho(rho)
    return _verified(lambda sp: _r2_at(_Grid.build(bs, m, alpha, sp), gamma, rho), spec, "r2")


def integral_r1_closed(bs: BSFunctions, m, alpha: float) -> float:
    """Integral of R1 over all gamma: 2/(t E W) * int_0^d (s(x) - t) dx."""
    t = t_quantile(m, alpha)
    require_F_d(bs, t)
    return 2.0 * (bs.integral_s() - t * bs.d) / (t * expected_W(m))


def gamma_limit(bs: BSFunctions, m, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Half-width of the gamma range outside which R1 and R2 are negligible."""
    return bs.d * w_bounds(m, spec)[1] + spec.gamma_truncation


def _gamma_integral(fn, bs, m, spec) -> float:
    """2 * int_0^G fn(gamma) dgamma for an even integrand."""
    nodes, weights = composite_nodes(0.0, gamma_limit(bs, m, spec), spec)
    values = np.array([fn(g) for g in nodes])
    return 2.0 * float(np.dot(weights, values))


def integral_r1_numeric(bs: BSFunctions, m, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Gamma-quadrature of R1; the independent check on :func:`integral_r1_closed`."""
    grid = _Grid.build(bs, m, alpha, spec)
    return _gamma_integral(lambda g: _r1_at(grid, g), bs, m, spec)


def _integral_r2_gamma(bs, rho, m, alpha, spec) -> float:
    grid = _Grid.build(bs, m, alpha, spec)
    return _gamma_integral(lambda g: _r2_at(grid, g, rho), bs, m, spec)


def _integral_r2_triple(bs, rho, m, alpha, spec) -> float:
    """Triple integral over (x, w, y) after integrating out gamma."""
    g = _Grid.build(bs, m, alpha, spec)
    y, y_wt = composite_nodes(-Y_HALF_RANGE, Y_HALF_RANGE, spec)
    y_wt = y_wt * _phi(y)
    sd = math.sqrt(1.0 - rho * rho)
    w = g.w[:, None]
    tw = g.t * w
    mu = rho * y[None, :]
    base = _normal_mass((-tw - mu) / sd, (tw - mu) / sd) + _normal_mass((-tw + mu) / sd, (tw + mu) / sd)
    per_x = np.empty(g.x.size)
    for i, (b, s) in enumerate(zip(g.b, g.s)):
        k = _normal_mass((w * (b - s) - mu) / sd, (w * (b + s) - mu) / sd)
        k += _normal_mass((w * (-b - s) + mu) / sd, (w * (-b + s) + mu) / sd)
        per_x[i] = np.dot(g.w_wt * g.w, (k - base) @ y_wt)
    return -float(np.dot(g.x_wt, per_x))


def _integral_r2_marginal(bs, m, alpha, spec) -> float:
    """Triple integral with the y-integral done analytically; free of rho."""
    g = _Grid.build(bs, m, alpha, spec)
    w = g.w[:, None]
    b, s = g.b[None, :], g.s[None, :]
    k = _normal_mass(w * (b - s), w * (b + s)) + _normal_mass(w * (-b - s), w * (s - b))
    base = 2.0 * _normal_mass(-g.t * w, g.t * w)
    return -float(np.dot(g.w_wt * g.w, (k - base) @ g.x_wt))


R2_METHODS = ("both", "gamma", "triple", "marginal")


def integral_r2(
    bs: BSFunctions,
    rho: float,
    m,
    alpha: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
    method: str = "both",
    cross_tol: float = 1e-6,
) -> float:
    """Integral of R2 over all gamma.

    ``method="both"`` evaluates the gamma-quadrature of R2 and the reduced
    (x, w, y) triple integral, raises :class:`AccuracyError` if they differ
    by more than ``cross_tol`` and returns the triple-integral value.
    ``"marginal"`` integrates the y-variable analytically, which is exact and
    much cheaper; it is what the dominance search uses.
    """
    _check_rho(rho)
    if method not in R2_METHODS:
        raise DomainError(f"method must be one of {R2_METHODS}")
    spec = spec.unverified()
    if method == "gamma":
        return _integral_r2_gamma(bs, rho, m, alpha, spec)
    if method == "triple":
        return _integral_r2_triple(bs, rho, m, alpha, spec)
    if method == "marginal":
        return _integral_r2_marginal(bs, m, alpha, spec)
    via_gamma = _integral_r2_gamma(bs, rho, m, alpha, spec)
    via_triple = _integral_r2_triple(bs, rho, m, alpha, spec)
    if abs(via_gamma - via_triple) > cross_tol:
        raise AccuracyError(
            f"integral of R2 disagrees between methods: {via_gamma!r} vs {via_triple!r}", via_gamma, via_triple
        )
    return via_triple


def r2_integral_bound(bs: BSFunctions, m) -> float:
    """Upper bound 2 d E(W) on the integral of |R2|."""
    return 2.0 * bs.d * expected_W(m)


def _check_lambda(lam):
    if not 0.0 < lam < 1.0:
        raise DomainError(f"lambda must lie in (0, 1), got {lam}")


def g_objective(
    bs: BSFunctions,
    lam: float,
    rho: float,
    m,
    alpha: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
    method: str = "both",
) -> float:
    """Compromise objective lam * int R1 + (1 - lam) * int R2."""
    _check_lambda(lam)
    return lam * integral_r1_closed(bs, m, alpha) + (1.0 - lam) * integral_r2(bs, rho, m, alpha, spec, method)


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RiskPoint:
    gamma: float
    r1: float
    r2: float
    alpha: float

    @property
    def e(self) -> float:
        return 1.0 + self.r1

    @property
    def coverage(self) -> float:
        return 1.0 - self.alpha - self.r2


@dataclass(frozen=True)
class RiskCurve:
    points: tuple
    bs_id: str
    spec: QuadratureSpec = field(default=DEFAULT_SPEC, repr=False)

    @property
    def gamma(self) -> np.ndarray:
        return np.array([p.gamma for p in self.points])

    @property
    def r1(self) -> np.ndarray:
        return np.array([p.r1 for p in self.points])

    @property
    def r2(self) -> np.ndarray:
        return np.array([p.r2 for p in self.points])

    @property
    def e(self) -> np.ndarray:
        return np.array([p.e for p in self.points])

    @property
    def coverage(self) -> np.ndarray:
        return np.array([p.coverage for p in self.points])

    def to_csv(self, header_lines=()) -> str:
        """CSV with columns gamma, r1, e, r2, coverage (12 significant digits).

        ``header_lines`` are written first as ``#`` comments.
        """
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["gamma", "r1", "e", "r2", "coverage"])
        for p in self.points:
            writer.writerow([f"{v:.12g}" for v in (p.gamma, p.r1, p.e, p.r2, p.coverage)])
        return buf.getvalue()


def default_gamma_grid(limit: float = 8.0, step: float = 0.1) -> np.ndarray:
    n = int(round(limit / step))
    return np.round(np.arange(-n, n + 1) * step, 12)


def check_gamma_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or not np.all(np.diff(grid) > 0):
        raise DomainError("gamma grid must be a strictly increasing 1-d sequence")
    if not np.allclose(grid, -grid[::-1], rtol=0, atol=1e-12):
        raise DomainError("gamma grid must be symmetric about 0")
    return grid


def risk_curve(
    bs: BSFunctions,
    gamma_grid,
    rho: float,
    m,
    alpha: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
    workers: int = 1,
) -> RiskCurve:
    """R1, R2, e and coverage over a symmetric gamma grid.

    Every grid point is evaluated independently by the same code path, so
    the result does not depend on ``workers``.
    """
    _check_rho(rho)
    grid = check_gamma_grid(gamma_grid)
    quad = _Grid.build(bs, m, alpha, spec)

    def point(g):
        return RiskPoint(float(g), _r1_at(quad, g), _r2_at(quad, g, rho), alpha)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = tuple(pool.map(point, grid))
    else:
        points = tuple(point(g) for g in grid)
    return RiskCurve(points, bs.label or "interval", spec)
