"""Regression design, least squares fit and the (theta, tau) geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, GeometryError, RankError

# 1 - rho^2 below this means a and c are treated as linearly dependent
INDEPENDENCE_TOL = 1e-12


@dataclass(frozen=True)
class Geometry:
    """Covariance of (theta_hat, tau_hat) divided by sigma^2, and m = n - p."""

    v11: float
    v22: float
    v12: float
    m: int

    @property
    def rho(self) -> float:
        return self.v12 / (math.sqrt(self.v11) * math.sqrt(self.v22))

    def as_dict(self) -> dict:
        return {"v11": self.v11, "v22": self.v22, "v12": self.v12, "rho": self.rho, "m": self.m}


@dataclass(frozen=True)
class SufficientStats:
    theta_hat: float
    tau_hat: float
    sigma_hat: float

    def __post_init__(self):
        values = (self.theta_hat, self.tau_hat, self.sigma_hat)
        if not all(np.isfinite(v) for v in values):
            raise DomainError(f"sufficient statistics must be finite, got {values}")
        if self.sigma_hat < 0:
            raise DomainError("sigma_hat must be non-negative")


def _svd(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"X must be a matrix, got shape {X.shape}")
    n, p = X.shape
    if n <= p:
        raise DimensionError(f"need n > p, got n={n}, p={p}")
    U, S, Vt = np.linalg.svd(X, full_matrices=False)
    cutoff = n * np.finfo(float).eps * S[0] if S.size else 0.0
    rank = int(np.sum(S > cutoff))
    if rank < p:
        raise RankError(f"X has numerical rank {rank} < {p} columns")
    return U, S, Vt


def fit_least_squares(X, y):
    """Least squares fit through the singular value decomposition of X.

    Parameters
    ----------
    X : (n, p) array
        Design with linearly independent columns, n > p.
    y : (n,) or (n, k) array
        Response; a matrix is treated as k independent responses.

    Returns
    -------
    beta_hat : (p,) or (p, k) array
    sigma_hat2 : float or (k,) array
        Residual sum of squares divided by n - p.
    """
    U, S, Vt = _svd(X)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape[0] != n:
        raise DimensionError(f"y has {y.shape[0]} rows, X has {n}")
    coef = U.T @ y
    beta = Vt.T @ (coef / S.reshape((-1,) + (1,) * (y.ndim - 1)))
    resid = y - X @ beta
    rss = np.sum(resid * resid, axis=0)
    sigma2 = rss / (n - p)
    return beta, (float(sigma2) if y.ndim == 1 else sigma2)


def compute_geometry(X, a, c) -> Geometry:
    """V = [a c]^T (X^T X)^{-1} [a c], computed from the SVD of X."""
    _, S, Vt = _svd(X)
    X = np.asarray(X, dtype=float)
    a = np.asarray(a, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    p = X.shape[1]
    if a.shape != (p,) or c.shape != (p,):
        raise DimensionError(f"a and c must have length {p}")
    if not np.any(a):
        raise DomainError("focus vector a must be nonzero")
    M = (Vt @ np.column_stack([a, c])) / S[:, None]
    V = M.T @ M
    v11, v22, v12 = float(V[0, 0]), float(V[1, 1]), float(V[0, 1])
    if not v11 > 0:
        raise DomainError("focus vector a is numerically zero")
    # separate square roots so a tiny v11 * v22 cannot underflow
    if v22 <= 0 or 1.0 - (v12 / (math.sqrt(v11) * math.sqrt(v22))) ** 2 <= INDEPENDENCE_TOL:
        raise GeometryError("a and c are linearly dependent (|rho| = 1)")
    return Geometry(v11=v11, v22=v22, v12=v12, m=X.shape[0] - p)


@dataclass(frozen=True, eq=False)
class DesignProblem:
    """Model Y = X beta + eps with focus theta = a'beta and tau = c'beta - t."""

    X: np.ndarray
    a: np.ndarray
    c: np.ndarray
    t: float = 0.0
    alpha: float = 0.05
    geometry: Geometry = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("X", "a", "c"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        object.__setattr__(self, "geometry", compute_geometry(self.X, self.a, self.c))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.geometry.m

    def gamma(self, beta, sigma: float) -> float:
        """Standardized constraint distance tau / (sigma sqrt(v22))."""
        tau = float(self.c @ np.asarray(beta, dtype=float)) - self.t
        return tau / (sigma * np.sqrt(self.geometry.v22))


def sufficient_stats(problem: DesignProblem, y) -> SufficientStats:
    beta, s2 = fit_least_squares(problem.X, y)
    return SufficientStats(
        theta_hat=float(problem.a @ beta),
        tau_hat=float(problem.c @ beta) - problem.t,
        sigma_hat=float(np.sqrt(s2)),
    )
