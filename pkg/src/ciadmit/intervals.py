"""The interval family J(b, s) and its finitely-parametrized members.

An interval is described by a pair of functions of the standardized
statistic x = tau_hat / (sigma_hat sqrt(v22)):

    J(b, s) = [theta_hat - sqrt(v11) sigma_hat b(x)  +-  sqrt(v11) sigma_hat s(|x|)]

``b`` is odd, ``s`` positive, and beyond some d > 0 they equal 0 and t(m).
:class:`BSFunctions` stores them on [0, d] as segments over explicit knots;
each segment carries its own left and right end values and is either
constant (``step``) or interpolated (``linear``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .design import Geometry, SufficientStats
from .errors import DegenerateDataError, DomainError, IntervalSpecError
from .numerics import t_quantile

MODES = ("step", "linear")

# relative tolerance for "equal to t(m)" and jump detection
_REL = 1e-12


# stored t_m vs t(m): allows quantiles written out to ~10 digits
_REL_QUANTILE = 1e-9


def _close(a, b, rel=_REL):
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


@dataclass(frozen=True, eq=False)
class BSFunctions:
    """Piecewise description of (b, s) on [0, d] plus the tail beyond d.

    Parameters
    ----------
    d : float
        Right end of the modified region.
    t_m : float
        The quantile t(m); s equals it beyond d.
    knots : sequence of float
        0 = x_0 < ... < x_K = d.
    b_left, b_right, s_left, s_right : sequence of float
        Values of b and s at the left and right end of each of the K
        segments. Step segments use the left value throughout.
    modes : sequence of str
        ``"step"`` or ``"linear"`` per segment.
    b_tail, s_tail : float
        Values used for x >= d. Members of F(d) have (0, t_m); other values
        are representable so that :func:`validate_F_d` can report them.
    """

    d: float
    t_m: float
    knots: np.ndarray
    b_left: np.ndarray
    b_right: np.ndarray
    s_left: np.ndarray
    s_right: np.ndarray
    modes: tuple = ()
    b_tail: float = 0.0
    s_tail: float | None = None
    label: str = ""

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        knots = np.array(self.knots, dtype=float)
        K = knots.size - 1
        if K < 1:
            raise IntervalSpecError("need at least two knots")
        arrays = {}
        for name in ("b_left", "b_right", "s_left", "s_right"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (K,):
                raise IntervalSpecError(f"{name} must have {K} entries, got shape {arr.shape}")
            arrays[name] = arr
        modes = tuple(self.modes) if self.modes else ("step",) * K
        if len(modes) != K or any(md not in MODES for md in modes):
            raise IntervalSpecError(f"modes must be {K} entries from {MODES}, got {modes}")
        if knots[0] != 0.0 or not np.all(np.diff(knots) > 0):
            raise IntervalSpecError("knots must start at 0 and be strictly increasing")
        if not _close(knots[-1], self.d) or not self.d > 0:
            raise IntervalSpecError(f"last knot {knots[-1]} must equal d = {self.d} > 0")
        knots[-1] = self.d
        for md, i in zip(modes, range(K)):
            if md == "step":
                arrays["b_right"][i] = arrays["b_left"][i]
                arrays["s_right"][i] = arrays["s_left"][i]
        for name, arr in arrays.items():
            arr.setflags(write=False)
            set_(name, arr)
        knots.setflags(write=False)
        set_("knots", knots)
        set_("modes", modes)
        set_("d", float(self.d))
        set_("t_m", float(self.t_m))
        set_("b_tail", float(self.b_tail))
        set_("s_tail", float(self.t_m if self.s_tail is None else self.s_tail))

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_knot_values(cls, knots, b, s, mode="step", t_m=None, **kwargs):
        """Build from values at the knots.

        With ``mode="step"`` ``b`` and ``s`` have one entry per segment; with
        ``mode="linear"`` one entry per knot (a continuous polyline).
        """
        knots = np.asarray(knots, dtype=float)
        b = np.asarray(b, dtype=float)
        s = np.asarray(s, dtype=float)
        K = knots.size - 1
        if mode == "step":
            if b.shape != (K,) or s.shape != (K,):
                raise IntervalSpecError(f"step mode needs {K} values of b and s")
            return cls(knots[-1], t_m, knots, b, b, s, s, ("step",) * K, **kwargs)
        if mode == "linear":
            if b.shape != (K + 1,) or s.shape != (K + 1,):
                raise IntervalSpecError(f"linear mode needs {K + 1} values of b and s")
            return cls(knots[-1], t_m, knots, b[:-1], b[1:], s[:-1], s[1:], ("linear",) * K, **kwargs)
        raise IntervalSpecError(f"unknown mode {mode!r}")

    @property
    def n_segments(self) -> int:
        return self.knots.size - 1

    # -- evaluation ------------------------------------------------------------

    def _segment_values(self, ax, left, right, tail):
        ax = np.asarray(ax, dtype=float)
        idx = np.searchsorted(self.knots, ax, side="right") - 1
        inside = ax < self.d
        i = np.clip(idx, 0, self.n_segments - 1)
        x0 = self.knots[i]
        width = self.knots[i + 1] - x0
        frac = (ax - x0) / width
        linear = np.array([md == "linear" for md in self.modes])[i]
        val = np.where(linear, left[i] + (right[i] - left[i]) * frac, left[i])
        return np.where(inside, val, tail)

    def b(self, x):
        """Odd extension of b; b(0) = 0."""
        x = np.asarray(x, dtype=float)
        out = np.sign(x) * self._segment_values(np.abs(x), self.b_left, self.b_right, self.b_tail)
        return float(out) if out.ndim == 0 else out

    def s(self, x):
        """s evaluated at |x|."""
        x = np.asarray(x, dtype=float)
        out = self._segment_values(np.abs(x), self.s_left, self.s_right, self.s_tail)
        return float(out) if out.ndim == 0 else out

    def __call__(self, x):
        return self.b(x), self.s(x)

    @property
    def declared_breakpoints(self) -> tuple:
        """Abscissae in [0, d] where b or s jumps."""
        out = []
        if not _close(self.b_left[0], 0.0):
            out.append(0.0)
        for i in range(1, self.n_segments):
            if not (_close(self.b_right[i - 1], self.b_left[i]) and _close(self.s_right[i - 1], self.s_left[i])):
                out.append(float(self.knots[i]))
        if not (_close(self.b_right[-1], self.b_tail) and _close(self.s_right[-1], self.s_tail)):
            out.append(self.d)
        return tuple(out)

    def integral_s(self) -> float:
        """Exact integral of s over [0, d]."""
        widths = np.diff(self.knots)
        return float(np.sum(0.5 * (self.s_left + self.s_right) * widths))

    def sample_abscissae(self, per_segment: int = 0) -> np.ndarray:
        """Knots, segment midpoints and ``per_segment`` extra interior points."""
        pts = [self.knots]
        for i in range(self.n_segments):
            a, c = self.knots[i], self.knots[i + 1]
            pts.append(np.linspace(a, c, per_segment + 3)[1:-1])
        return np.unique(np.concatenate(pts))

    def end_values(self):
        """(b, s) one-sided limits at both ends of every segment, shape (2K,)."""
        b = np.concatenate([self.b_left, self.b_right])
        s = np.concatenate([self.s_left, self.s_right])
        return b, s

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        doc = {"d": self.d, "t_m": self.t_m, "knots": self.knots.tolist()}
        continuous = all(
            _close(self.b_right[i - 1], self.b_left[i]) and _close(self.s_right[i - 1], self.s_left[i])
            for i in range(1, self.n_segments)
        )
        if all(md == "step" for md in self.modes):
            doc.update(mode="step", b=self.b_left.tolist(), s=self.s_left.tolist())
        elif all(md == "linear" for md in self.modes) and continuous:
            doc.update(
                mode="linear",
                b=self.b_left.tolist() + [float(self.b_right[-1])],
                s=self.s_left.tolist() + [float(self.s_right[-1])],
            )
        else:
            doc.update(
                mode=list(self.modes),
                b=[[float(l), float(r)] for l, r in zip(self.b_left, self.b_right)],
                s=[[float(l), float(r)] for l, r in zip(self.s_left, self.s_right)],
            )
        if self.b_tail != 0.0 or self.s_tail != self.t_m:
            doc["tail"] = {"b": self.b_tail, "s": self.s_tail}
        if self.label:
            doc["label"] = self.label
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "BSFunctions":
        """Inverse of :meth:`to_dict`.

        ``mode`` is ``"step"`` (one value per segment), ``"linear"`` (one
        value per knot) or a list of per-segment modes with ``b`` and ``s``
        given as ``[left, right]`` pairs.
        """
        try:
            knots = doc["knots"]
            mode = doc.get("mode", "step")
            tail = doc.get("tail", {})
            extra = {"b_tail": tail.get("b", 0.0), "s_tail": tail.get("s"), "label": doc.get("label", "")}
            t_m = float(doc["t_m"])
            if "d" in doc and not _close(float(doc["d"]), float(knots[-1])):
                raise IntervalSpecError(f"d = {doc['d']} does not match the last knot {knots[-1]}")
            if isinstance(mode, str):
                return cls.from_knot_values(knots, doc["b"], doc["s"], mode=mode, t_m=t_m, **extra)
            b = np.asarray(doc["b"], dtype=float).reshape(-1, 2)
            s = np.asarray(doc["s"], dtype=float).reshape(-1, 2)
            return cls(knots[-1], t_m, knots, b[:, 0], b[:, 1], s[:, 0], s[:, 1], tuple(mode), **extra)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, IntervalSpecError):
                raise
            raise IntervalSpecError(f"malformed interval document: {exc}") from exc

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "BSFunctions":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise IntervalSpecError(f"invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise IntervalSpecError("interval document must be a JSON object")
        return cls.from_dict(doc)

    def sampled_table(self, n: int = 201, x_max: float | None = None):
        """Rows (x, b(x), s(x)) on a grid over [0, x_max] that includes all knots."""
        x_max = 1.25 * self.d if x_max is None else x_max
        x = np.unique(np.concatenate([np.linspace(0.0, x_max, n), self.knots]))
        return np.column_stack([x, self.b(x), self.s(x)])


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_F_d(bs: BSFunctions, t_m: float | None = None) -> list[str]:
    """List the ways ``bs`` fails to be a member of F(d); empty if it is one.

    ``t_m`` optionally checks the stored quantile against the expected t(m).
    """
    problems = []
    values = np.concatenate([bs.b_left, bs.b_right, bs.s_left, bs.s_right, [bs.b_tail, bs.s_tail, bs.t_m]])
    if not np.all(np.isfinite(values)):
        problems.append("b and s must be finite (bounded)")
    if np.any(np.concatenate([bs.s_left, bs.s_right]) <= 0):
        problems.append("s must be strictly positive")
    if not bs.t_m > 0:
        problems.append("t_m must be positive")
    if bs.b_tail != 0.0:
        problems.append(f"b must vanish for |x| >= d, tail value is {bs.b_tail}")
    if not _close(bs.s_tail, bs.t_m):
        problems.append(f"s must equal t_m = {bs.t_m} for x >= d, tail value is {bs.s_tail}")
    if t_m is not None and not _close(bs.t_m, t_m, _REL_QUANTILE):
        problems.append(f"stored t_m = {bs.t_m} differs from t(m) = {t_m}")
    return problems


def require_F_d(bs: BSFunctions, t_m: float | None = None) -> BSFunctions:
    problems = validate_F_d(bs, t_m)
    if problems:
        raise IntervalSpecError("interval is not a member of F(d): " + "; ".join(problems), problems)
    return bs


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def usual_interval(m, alpha: float, d: float = 1.0) -> BSFunctions:
    """b = 0, s = t(m): the textbook t interval."""
    t = t_quantile(m, alpha)
    return BSFunctions.from_knot_values([0.0, d], [0.0], [t], mode="step", t_m=t, label="usual")


def _check_rho(rho):
    if not -1.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (-1, 1), got {rho}")


def naive_pretest(q: float, rho: float, m, alpha: float, t_k: float | None = None) -> BSFunctions:
    """Interval reported after a preliminary test of tau = 0 with cutoff ``q``.

    When |x| <= q the constrained-model interval is used, centred at
    theta_hat - (v12/v22) tau_hat with half-width t_k sqrt(v11 (1 - rho^2))
    sigma_hat, i.e. b(x) = rho x and s = t_k sqrt(1 - rho^2). ``t_k``
    defaults to t(m).
    """
    if not q > 0:
        raise DomainError(f"q must be positive, got {q}")
    _check_rho(rho)
    t = t_quantile(m, alpha)
    t_k = t if t_k is None else t_k
    width = t_k * math.sqrt(1.0 - rho * rho)
    return BSFunctions.from_knot_values(
        [0.0, q], [0.0, rho * q], [width, width], mode="linear", t_m=t, label=f"naive(q={q:g})"
    )


@dataclass(frozen=True)
class WeightFunction:
    """Mixing weight h: [0, inf) -> [0, 1] with optional jump points.

    At a jump ``x`` the function takes its left limit; the right limit is
    taken to be ``fn`` evaluated just above ``x``.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    jumps: tuple = ()
    name: str = "h"

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def right_limit(self, x: float) -> float:
        if x in self.jumps:
            return float(self(x + 1e-12 * max(1.0, abs(x))))
        return float(self(x))


def smoothstep(d: float) -> WeightFunction:
    """Cubic h(x) = 3(x/d)^2 - 2(x/d)^3 on [0, d], 1 beyond."""

    def fn(x):
        u = np.clip(x / d, 0.0, 1.0)
        return u * u * (3.0 - 2.0 * u)

    return WeightFunction(fn, (), f"smoothstep(d={d:g})")


def unit_step(q: float) -> WeightFunction:
    """h(x) = 0 on [0, q], 1 for x > q."""
    return WeightFunction(lambda x: (x > q).astype(float), (float(q),), f"step(q={q:g})")


def smooth_mixture(
    h: WeightFunction | str,
    rho: float,
    m,
    alpha: float,
    d: float,
    n_segments: int = 64,
    t_k: float | None = None,
) -> BSFunctions:
    """Mixture h I + (1 - h) K of the usual and constrained-model intervals.

    b(x) = (1 - h(x)) rho x and s(x) = (1 - h) t_k sqrt(1 - rho^2) + h t(m),
    sampled onto ``n_segments`` linear segments over [0, d] (plus the jump
    points of h). h must be nondecreasing and reach 1 at d.
    """
    _check_rho(rho)
    if not d > 0:
        raise DomainError(f"d must be positive, got {d}")
    if isinstance(h, str):
        if h != "smoothstep":
            raise DomainError(f"unknown weight function {h!r}")
        h = smoothstep(d)
    t = t_quantile(m, alpha)
    t_k = t if t_k is None else t_k
    base = t_k * math.sqrt(1.0 - rho * rho)
    jumps = [j for j in h.jumps if 0.0 < j < d]
    knots = np.unique(np.concatenate([np.linspace(0.0, d, n_segments + 1), jumps]))
    left_h = np.array([h.right_limit(x) for x in knots[:-1]])
    right_h = h(knots[1:])
    path = np.append(np.column_stack([left_h, right_h]).ravel(), h.right_limit(d))
    if np.any(np.diff(path) < -1e-12) or np.any(path < -1e-12) or np.any(path > 1 + 1e-12):
        raise IntervalSpecError(f"{h.name} is not a nondecreasing map into [0, 1]")
    if abs(h.right_limit(d) - 1.0) > 1e-12:
        raise IntervalSpecError(f"{h.name} must reach 1 at d = {d}; got {h.right_limit(d)}")
    x0, x1 = knots[:-1], knots[1:]
    return BSFunctions(
        d,
        t,
        knots,
        (1.0 - left_h) * rho * x0,
        (1.0 - right_h) * rho * x1,
        (1.0 - left_h) * base + left_h * t,
        (1.0 - right_h) * base + right_h * t,
        ("linear",) * (knots.size - 1),
        label=f"mixture({h.name})",
    )


def random_member(
    rng: np.random.Generator,
    d: float,
    t_m: float,
    max_segments: int = 6,
    s_range: tuple = (0.2, 2.0),
    b_range: tuple = (-1.0, 1.0),
) -> BSFunctions:
    """Draw a random member of F(d): random knots, random step/linear segments.

    s values are uniform on ``s_range`` times t_m and b values on ``b_range``
    times t_m.
    """
    K = int(rng.integers(1, max_segments + 1))
    inner = np.sort(rng.uniform(0.0, d, K - 1))
    knots = np.concatenate([[0.0], inner, [d]])
    if np.any(np.diff(knots) <= 1e-9 * d):
        knots = np.linspace(0.0, d, K + 1)
    modes = tuple(rng.choice(MODES, size=K))
    draw_s = lambda: rng.uniform(s_range[0] * t_m, s_range[1] * t_m, K)
    draw_b = lambda: rng.uniform(b_range[0] * t_m, b_range[1] * t_m, K)
    b_left, b_right, s_left, s_right = draw_b(), draw_b(), draw_s(), draw_s()
    return BSFunctions(d, t_m, knots, b_left, b_right, s_left, s_right, modes, label="random")


# ---------------------------------------------------------------------------
# Realization and pointwise checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntervalRealization:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise DomainError(f"lower endpoint {self.lower} exceeds upper {self.upper}")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    @property
    def center(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def evaluate_interval(bs: BSFunctions, stats: SufficientStats, geom: Geometry) -> IntervalRealization:
    """Endpoints of J(b, s) for observed (theta_hat, tau_hat, sigma_hat)."""
    if not stats.sigma_hat > 0:
        raise DegenerateDataError("sigma_hat = 0: the argument of b and s is undefined")
    scale = math.sqrt(geom.v11) * stats.sigma_hat
    x = stats.tau_hat / (stats.sigma_hat * math.sqrt(geom.v22))
    center = stats.theta_hat - scale * bs.b(x)
    half = scale * bs.s(x)
    return IntervalRealization(center - half, center + half)


def pointwise_length_compare(bs: BSFunctions, m, alpha: float) -> dict:
    """Compare s with t(m) on knots, segment ends and midpoints.

    Returns ``{"never_longer": bool, "strictly_shorter_somewhere": bool}``.
    """
    t = t_quantile(m, alpha)
    _, s_ends = bs.end_values()
    s_vals = np.concatenate([s_ends, bs.s(bs.sample_abscissae(per_segment=3)), [bs.s_tail]])
    tol = _REL * max(1.0, t)
    return {
        "never_longer": bool(np.all(s_vals <= t + tol)),
        "strictly_shorter_somewhere": bool(np.any(s_vals < t - tol)),
    }
