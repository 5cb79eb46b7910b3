"""Monte Carlo oracle for coverage and scaled expected length.

Replications are grouped in blocks of fixed size. Block ``j`` draws from a
Philox stream keyed by ``(seed, j)``, so every replication's variates depend
only on the seed and its index, and block sums are combined with exactly
rounded summation. Estimates are therefore identical for any number of
worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from .design import DesignProblem, fit_least_squares
from .errors import DomainError
from .intervals import BSFunctions, require_F_d
from .numerics import expected_W, t_quantile

BLOCK_SIZE = 1 << 16
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_reps: int
    seed: int

    def z_score(self, reference: float) -> float:
        if self.std_error == 0:
            return 0.0 if self.mean == reference else math.copysign(math.inf, self.mean - reference)
        return (self.mean - reference) / self.std_error

    def agrees_with(self, reference: float, n_se: float = 3.5) -> bool:
        return abs(self.z_score(reference)) <= n_se


@dataclass(frozen=True)
class RiskEstimate:
    coverage: McEstimate
    scaled_length: McEstimate


def agree(a: McEstimate, b: McEstimate, n_se: float = 3.5) -> bool:
    """Two independent estimates agree within ``n_se`` combined standard errors."""
    se = math.hypot(a.std_error, b.std_error)
    return abs(a.mean - b.mean) <= n_se * se


def block_uniforms(seed: int, block: int, shape) -> np.ndarray:
    """Uniforms on the open interval (0, 1) for one block of replications."""
    key = (int(seed) & _MASK64) | (int(block) << 64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return (rng.integers(0, 1 << 53, size=shape, dtype=np.int64) + 0.5) / float(1 << 53)


def _draw_w(u, m):
    if m == math.inf:
        return np.ones_like(u)
    # chdtri inverts the upper tail; u and 1 - u have the same law
    return np.sqrt(special.chdtri(m, u) / m)


class _Accumulator:
    def __init__(self):
        self.parts = []

    def add(self, cover, length):
        self.parts.append(
            (cover.size, float(np.sum(cover)), float(np.sum(length)), float(np.sum(length * length)))
        )

    def estimates(self, seed):
        n = sum(p[0] for p in self.parts)
        hits = math.fsum(p[1] for p in self.parts)
        total = math.fsum(p[2] for p in self.parts)
        sq = math.fsum(p[3] for p in self.parts)
        p_hat = hits / n
        cov_se = math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / (n - 1)) if n > 1 else 0.0
        mean = total / n
        var = max(sq - n * mean * mean, 0.0) / (n - 1) if n > 1 else 0.0
        return RiskEstimate(
            McEstimate(p_hat, cov_se, n, seed),
            McEstimate(mean, math.sqrt(var / n), n, seed),
        )


def _blocks(n_reps):
    n_blocks = -(-n_reps // BLOCK_SIZE)
    return [(j, min(BLOCK_SIZE, n_reps - j * BLOCK_SIZE)) for j in range(n_blocks)]


def _run_blocks(work, n_reps, workers):
    blocks = _blocks(n_reps)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda jb: work(*jb), blocks))
    return [work(j, nb) for j, nb in blocks]


def _check(rho, m, n_reps):
    if not -1.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (-1, 1), got {rho}")
    if m != math.inf and (m != int(m) or m < 1):
        raise DomainError(f"m must be a positive integer, got {m}")
    if n_reps < 1:
        raise DomainError("n_reps must be at least 1")


def simulate_risk(
    bs: BSFunctions,
    gamma: float,
    rho: float,
    m,
    alpha: float,
    n_reps: int,
    seed: int,
    workers: int = 1,
) -> RiskEstimate:
    """Simulate the standardized problem at (gamma, rho, m).

    Each replication draws (U, H) bivariate normal with means (0, gamma),
    unit variances and correlation rho, and W with W^2 ~ chi^2_m / m. J
    covers theta when |U - W b(H/W)| <= W s(|H|/W); its length relative to
    the expected length of the usual interval is W s(|H|/W) / (t E W).
    """
    _check(rho, m, n_reps)
    t = t_quantile(m, alpha)
    require_F_d(bs, t)
    scale = 1.0 / (t * expected_W(m))
    c = math.sqrt(1.0 - rho * rho)

    def work(j, nb):
        u = block_uniforms(seed, j, (3, nb))
        z1, z2 = special.ndtri(u[0]), special.ndtri(u[1])
        w = _draw_w(u[2], m)
        h = gamma + rho * z1 + c * z2
        x = h / w
        half = w * bs.s(x)
        cover = np.abs(z1 - w * bs.b(x)) <= half
        return cover.astype(float), half * scale

    acc = _Accumulator()
    for cover, length in _run_blocks(work, n_reps, workers):
        acc.add(cover, length)
    return acc.estimates(seed)


def simulate_from_design(
    problem: DesignProblem,
    beta,
    sigma: float,
    bs: BSFunctions,
    n_reps: int,
    seed: int,
    workers: int = 1,
) -> RiskEstimate:
    """Full-pipeline simulation: draw Y = X beta + eps, fit, build J(b, s).

    Coverage is of theta = a'beta; length is reported relative to the
    expected length 2 t sqrt(v11) sigma E(W) of the usual interval.
    """
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    geom = problem.geometry
    m = geom.m
    _check(geom.rho, m, n_reps)
    t = t_quantile(m, problem.alpha)
    require_F_d(bs, t)
    beta = np.asarray(beta, dtype=float)
    mean_y = problem.X @ beta
    theta = float(problem.a @ beta)
    sqrt_v11, sqrt_v22 = math.sqrt(geom.v11), math.sqrt(geom.v22)
    scale = 1.0 / (t * sqrt_v11 * sigma * expected_W(m))

    def work(j, nb):
        u = block_uniforms(seed, j, (problem.n, nb))
        y = mean_y[:, None] + sigma * special.ndtri(u)
        beta_hat, s2 = fit_least_squares(problem.X, y)
        theta_hat = problem.a @ beta_hat
        tau_hat = problem.c @ beta_hat - problem.t
        sigma_hat = np.sqrt(s2)
        x = tau_hat / (sigma_hat * sqrt_v22)
        center = theta_hat - sqrt_v11 * sigma_hat * bs.b(x)
        half = sqrt_v11 * sigma_hat * bs.s(x)
        cover = np.abs(theta - center) <= half
        return cover.astype(float), half * scale

    acc = _Accumulator()
    for cover, length in _run_blocks(work, n_reps, workers):
        acc.add(cover, length)
    return acc.estimates(seed)
