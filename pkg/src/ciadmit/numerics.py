"""Special functions and composite Gauss-Legendre quadrature.

Every risk formula in the package is built from a handful of pieces: the
standard normal pdf/cdf, the probability that a normal variate falls in an
interval, Student-t and normal quantiles, and the law of

    W = sigma_hat / sigma  ~  sqrt(Q / m),   Q ~ chi^2_m.

The degrees of freedom ``m`` may be ``math.inf``; this is the known-variance
mode in which W is a point mass at 1 and ``t_quantile`` returns the normal
quantile.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special, stats

from .errors import AccuracyError, DomainError, EvaluationError

SQRT_2PI = math.sqrt(2.0 * math.pi)
INV_SQRT_2PI = 1.0 / SQRT_2PI


@dataclass(frozen=True)
class QuadratureSpec:
    """Node and panel configuration shared by all integrals.

    Panels are at most ``1 / panels_per_unit`` wide. The x-range of the
    risk integrals is ``[0, d]`` and comes from the interval description, so
    it is not stored here.

    Attributes
    ----------
    panels_per_unit : float
        Minimum number of panels per unit length in w, x and gamma.
    nodes_per_panel : int
        Gauss-Legendre nodes per panel.
    w_upper : float or None
        Upper truncation of the w half-line. ``None`` picks the chi quantile
        that leaves tail mass ``abs_tol * 1e-4``.
    gamma_truncation : float
        Margin added beyond ``d * w_upper`` when integrating over gamma.
    abs_tol : float
        Absolute error target; also the node-doubling acceptance threshold.
    verify : bool
        Whether top-level integrals are re-evaluated with doubled nodes.
    """

    panels_per_unit: float = 2.0
    nodes_per_panel: int = 20
    w_upper: float | None = None
    gamma_truncation: float = 8.0
    abs_tol: float = 1e-9
    verify: bool = True

    def __post_init__(self):
        if not self.panels_per_unit > 0:
            raise DomainError("panels_per_unit must be positive")
        if self.nodes_per_panel < 1:
            raise DomainError("nodes_per_panel must be a positive integer")
        if self.w_upper is not None and not self.w_upper > 0:
            raise DomainError("w_upper must be positive")
        if not self.gamma_truncation > 0:
            raise DomainError("gamma_truncation must be positive")
        if not self.abs_tol > 0:
            raise DomainError("abs_tol must be positive")

    @property
    def panel_width(self) -> float:
        return 1.0 / self.panels_per_unit

    def doubled(self) -> "QuadratureSpec":
        return replace(self, nodes_per_panel=2 * self.nodes_per_panel, verify=False)

    def unverified(self) -> "QuadratureSpec":
        return replace(self, verify=False) if self.verify else self

    @classmethod
    def from_mapping(cls, mapping) -> "QuadratureSpec":
        """Build from config keys ``abs_tol``, ``nodes``, ``panels_per_unit``,
        ``w_upper``, ``truncation`` and ``verify`` (all optional)."""
        aliases = {"nodes": "nodes_per_panel", "truncation": "gamma_truncation"}
        kwargs = {}
        for key, value in dict(mapping).items():
            name = aliases.get(key, key)
            if name not in cls.__dataclass_fields__:
                raise DomainError(f"unknown quadrature key {key!r}")
            kwargs[name] = value
        return cls(**kwargs)


DEFAULT_SPEC = QuadratureSpec()


# ---------------------------------------------------------------------------
# Normal distribution
# ---------------------------------------------------------------------------


def phi(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) * INV_SQRT_2PI
    return float(out) if out.ndim == 0 else out


def Phi(x):
    """Standard normal cdf (absolute accuracy near machine precision)."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def _normal_mass(lo, hi):
    """P(lo <= Z <= hi) for standard normal Z, elementwise, lo <= hi.

    Differences are taken in whichever tail keeps both cdf values small.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    # reflect into the lower tail when the whole range is positive
    upper = lo > 0.0
    a = np.where(upper, -hi, lo)
    b = np.where(upper, -lo, hi)
    return special.ndtr(b) - special.ndtr(a)


def psi_array(x, y, mu, v):
    """Vectorized, unchecked form of :func:`psi`."""
    sd = np.sqrt(v)
    out = _normal_mass((x - mu) / sd, (y - mu) / sd)
    return np.clip(out, 0.0, 1.0)


def psi(x: float, y: float, mu: float, v: float) -> float:
    """P(x <= Z <= y) for Z ~ N(mu, v)."""
    if not v > 0:
        raise DomainError(f"variance must be positive, got {v}")
    if x > y:
        raise DomainError(f"empty interval: x={x} > y={y}")
    return float(psi_array(x, y, mu, v))


def z_quantile(alpha: float) -> float:
    """The z with P(-z <= Z <= z) = 1 - alpha for standard normal Z."""
    _check_level(alpha)
    return float(-special.ndtri(0.5 * alpha))


def _check_level(alpha):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def _check_dof(m):
    if m == math.inf:
        return
    if m != int(m) or m < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {m}")


# ---------------------------------------------------------------------------
# Student t
# ---------------------------------------------------------------------------


def t_two_sided_tail(t: float, m: float) -> float:
    """P(|T| > t) for T ~ t_m, via the regularized incomplete beta function."""
    if t <= 0:
        return 1.0
    return float(special.betainc(0.5 * m, 0.5, m / (m + t * t)))


@functools.lru_cache(maxsize=256)
def t_quantile(m: float, alpha: float) -> float:
    """The t with P(-t <= T <= t) = 1 - alpha for T ~ t_m.

    ``m = inf`` gives the normal quantile. The root of the two-sided tail
    probability is bracketed around an inverse-beta starting value and
    polished with Brent's method.
    """
    _check_dof(m)
    _check_level(alpha)
    if m == math.inf:
        return z_quantile(alpha)
    m = int(m)
    x0 = special.betaincinv(0.5 * m, 0.5, alpha)
    guess = math.sqrt(m * (1.0 - x0) / x0) if x0 > 0 else z_quantile(alpha)
    f = lambda t: t_two_sided_tail(t, m) - alpha
    lo, hi = 0.5 * guess, 2.0 * guess
    while f(lo) < 0:
        lo *= 0.5
    while f(hi) > 0:
        hi *= 2.0
    return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


# ---------------------------------------------------------------------------
# W = sigma_hat / sigma
# ---------------------------------------------------------------------------


def f_W(w, m):
    """Density of W = sqrt(Q/m), Q ~ chi^2_m.

    ``2 (m/2)^(m/2) w^(m-1) exp(-m w^2 / 2) / Gamma(m/2)``
    """
    _check_dof(m)
    if m == math.inf:
        raise DomainError("W is a point mass when m is infinite; it has no density")
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise DomainError("f_W is defined for w >= 0 only")
    half = 0.5 * m
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    log_const = math.log(2.0) + half * math.log(half) - special.gammaln(half)
    if m == 1:
        out = np.exp(log_const - half * w * w)
    else:
        out = np.exp(log_const + (m - 1) * logw - half * w * w)
    return float(out) if out.ndim == 0 else out


@functools.lru_cache(maxsize=256)
def expected_W(m: float) -> float:
    """E(W) = sqrt(2/m) Gamma((m+1)/2) / Gamma(m/2)."""
    _check_dof(m)
    if m == math.inf:
        return 1.0
    return math.sqrt(2.0 / m) * math.exp(special.gammaln(0.5 * (m + 1)) - special.gammaln(0.5 * m))


def w_bounds(m: float, spec: QuadratureSpec = DEFAULT_SPEC) -> tuple[float, float]:
    """Truncation interval for W leaving ``abs_tol * 1e-4`` mass per tail."""
    _check_dof(m)
    if m == math.inf:
        return 1.0, 1.0
    # well inside the abs_tol/10 budget: moments of W weight the tail up
    tail = spec.abs_tol * 1e-4
    lo = math.sqrt(stats.chi2.ppf(tail, m) / m)
    hi = spec.w_upper if spec.w_upper is not None else math.sqrt(stats.chi2.isf(tail, m) / m)
    if m <= 2:
        # density is bounded at 0; integrating from 0 costs nothing
        lo = 0.0
    return lo, hi


@functools.lru_cache(maxsize=64)
def _gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_nodes(
    lower: float,
    upper: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
    breakpoints: Sequence[float] = (),
    max_width: float | None = None,
):
    """Nodes and weights of the composite Gauss-Legendre rule on [lower, upper].

    The range is cut at every breakpoint strictly inside it, then each piece
    is divided into equal panels no wider than ``max_width`` (default
    ``spec.panel_width``).
    """
    if upper < lower:
        raise DomainError(f"upper limit {upper} below lower limit {lower}")
    if upper == lower:
        return np.empty(0), np.empty(0)
    width = spec.panel_width if max_width is None else min(max_width, spec.panel_width)
    cuts = [lower] + sorted(b for b in set(breakpoints) if lower < b < upper) + [upper]
    edges = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        k = max(1, math.ceil((b - a) / width - 1e-12))
        edges.append(np.linspace(a, b, k + 1)[:-1])
    edges = np.append(np.concatenate(edges), upper)
    gx, gw = _gauss_legendre(spec.nodes_per_panel)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


@functools.lru_cache(maxsize=256)
def w_rule(m: float, spec: QuadratureSpec = DEFAULT_SPEC, max_width: float | None = None):
    """Quadrature for expectations over W: ``E g(W) ~ sum(weights * g(nodes))``.

    The weights already include the density f_W. Panels are no wider than
    the spread of W, nor ``max_width`` when the integrand varies faster. In
    known-variance mode the rule is the single node 1 with weight 1.
    """
    _check_dof(m)
    if m == math.inf:
        nodes, weights = np.array([1.0]), np.array([1.0])
    else:
        lo, hi = w_bounds(m, spec)
        width = max(math.sqrt(max(1.0 - expected_W(m) ** 2, 0.0)), 1e-6)
        if max_width is not None:
            width = min(width, max_width)
        nodes, weights = composite_nodes(lo, hi, spec, max_width=width)
        weights = weights * f_W(nodes, m)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _checked_sum(values, weights, nodes):
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        where = float(np.asarray(nodes).ravel()[np.argmax(bad.ravel())])
        raise EvaluationError(f"integrand is not finite at {where}", abscissa=where)
    return float(np.dot(weights, values))


def integrate_1d(
    f: Callable[[np.ndarray], np.ndarray],
    lower: float,
    upper: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
    breakpoints: Sequence[float] = (),
) -> float:
    """Integrate a vectorized ``f`` over a finite range.

    With ``spec.verify`` the integral is repeated with twice the nodes per
    panel and an :class:`AccuracyError` is raised if the two disagree by more
    than ``spec.abs_tol``; the refined value is returned.
    """
    nodes, weights = composite_nodes(lower, upper, spec, breakpoints)
    value = _checked_sum(f(nodes), weights, nodes)
    if not spec.verify:
        return value
    fine_spec = spec.doubled()
    nodes, weights = composite_nodes(lower, upper, fine_spec, breakpoints)
    fine = _checked_sum(f(nodes), weights, nodes)
    if abs(fine - value) > spec.abs_tol:
        raise AccuracyError(
            f"node doubling changed the integral by {abs(fine - value):.3e}", value, fine
        )
    return fine


def integrate_semi_infinite_w(
    f: Callable[[np.ndarray], np.ndarray],
    m: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
    max_width: float | None = None,
) -> float:
    """E f(W) = integral over w >= 0 of f(w) f_W(w) dw.

    ``max_width`` caps the w-panel width for integrands that vary on a
    scale finer than the spread of W.
    """
    nodes, weights = w_rule(m, spec, max_width)
    value = _checked_sum(f(nodes), weights, nodes)
    if not spec.verify or m == math.inf:
        return value
    nodes, weights = w_rule(m, spec.doubled(), max_width)
    fine = _checked_sum(f(nodes), weights, nodes)
    if abs(fine - value) > spec.abs_tol:
        raise AccuracyError(
            f"node doubling changed the w-integral by {abs(fine - value):.3e}", value, fine
        )
    return fine
