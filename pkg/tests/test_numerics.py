import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ciadmit.errors import AccuracyError, DomainError, EvaluationError
from ciadmit.numerics import (
    DEFAULT_SPEC,
    Phi,
    QuadratureSpec,
    composite_nodes,
    expected_W,
    f_W,
    integrate_1d,
    integrate_semi_infinite_w,
    phi,
    psi,
    t_quantile,
    t_two_sided_tail,
    w_bounds,
    w_rule,
    z_quantile,
)

mp.mp.dps = 40


def mp_Phi(x):
    return float(mp.ncdf(mp.mpf(x)))


def mp_t_quantile(m, alpha):
    """Bisection on the two-sided t tail, via the regularized incomplete beta."""
    m = mp.mpf(m)
    tail = lambda t: mp.betainc(m / 2, mp.mpf(1) / 2, 0, m / (m + t * t), regularized=True)
    lo, hi = mp.mpf("1e-6"), mp.mpf(1e6)
    for _ in range(200):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if tail(mid) > alpha else (lo, mid)
    return float((lo + hi) / 2)


class TestNormal:
    @pytest.mark.parametrize("x", [-37.0, -20.0, -8.5, -3.0, -1.0, -1e-8, 0.0, 0.3, 1.96, 5.0, 8.0])
    def test_Phi_matches_mpmath(self, x):
        assert abs(Phi(x) - mp_Phi(x)) <= 1e-13

    @pytest.mark.parametrize("x", [-30.0, -12.0, -6.0])
    def test_Phi_lower_tail_relative(self, x):
        ref = mp_Phi(x)
        assert Phi(x) == pytest.approx(ref, rel=1e-12)

    def test_phi_values(self):
        assert phi(0.0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=1e-15)
        xs = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(phi(xs), [float(mp.npdf(x)) for x in xs], rtol=1e-14)

    @given(st.floats(-30, 30))
    def test_symmetry(self, x):
        assert Phi(x) + Phi(-x) == pytest.approx(1.0, abs=1e-15)

    def test_psi_conditional_mass(self):
        # P(x <= N(mu, v) <= y)
        assert psi(-1.0, 1.0, 0.0, 1.0) == pytest.approx(0.6826894921370859, abs=1e-15)
        assert psi(0.0, 2.0, 1.0, 4.0) == pytest.approx(2 * (mp_Phi(0.5) - 0.5), abs=1e-15)

    def test_psi_far_upper_tail_keeps_precision(self):
        ref = float(mp.ncdf(-10) - mp.ncdf(-11))
        assert psi(10.0, 11.0, 0.0, 1.0) == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("bad", [(1.0, 0.0, 0.0, 1.0), (0.0, 1.0, 0.0, 0.0), (0.0, 1.0, 0.0, -1.0)])
    def test_psi_domain(self, bad):
        with pytest.raises(DomainError):
            psi(*bad)

    def test_z_quantile(self):
        assert z_quantile(0.05) == pytest.approx(1.959963984540054, abs=1e-13)
        assert z_quantile(0.05) == pytest.approx(1.959964, abs=1e-6)


class TestStudentT:
    @pytest.mark.parametrize(
        "m, alpha", [(1, 0.05), (1, 0.01), (2, 0.05), (5, 0.05), (5, 0.1), (10, 0.05), (30, 0.05), (200, 0.01)]
    )
    def test_quantile_matches_incomplete_beta_root(self, m, alpha):
        assert t_quantile(m, alpha) == pytest.approx(mp_t_quantile(m, alpha), rel=1e-12)

    def test_reference_values(self):
        assert t_quantile(5, 0.05) == pytest.approx(2.570582, abs=1e-6)
        assert t_quantile(1, 0.5) == pytest.approx(1.0, abs=1e-14)
        # m = 1 is Cauchy: t = tan(pi (1 - alpha) / 2)
        assert t_quantile(1, 0.01) == pytest.approx(math.tan(math.pi * 0.495), rel=1e-12)

    def test_infinite_m_is_normal(self):
        assert t_quantile(math.inf, 0.05) == z_quantile(0.05)
        assert t_quantile(10**6, 0.05) == pytest.approx(z_quantile(0.05), abs=1e-5)

    @given(st.integers(1, 500), st.floats(0.001, 0.5))
    @settings(max_examples=60, deadline=None)
    def test_tail_inverts_quantile(self, m, alpha):
        assert t_two_sided_tail(t_quantile(m, alpha), m) == pytest.approx(alpha, rel=1e-10)

    @pytest.mark.parametrize("m, alpha", [(0, 0.05), (2.5, 0.05), (5, 0.0), (5, 1.0), (-1, 0.1)])
    def test_domain(self, m, alpha):
        with pytest.raises(DomainError):
            t_quantile(m, alpha)


class TestW:
    @pytest.mark.parametrize("m", [1, 2, 3, 5, 30, 100])
    def test_density_normalized_and_second_moment(self, m):
        lo, hi = 0.0, 20.0
        mass = integrate.quad(lambda w: f_W(w, m), lo, hi, points=[1.0], limit=200, epsabs=1e-13)[0]
        second = integrate.quad(lambda w: w * w * f_W(w, m), lo, hi, points=[1.0], limit=200, epsabs=1e-13)[0]
        assert mass == pytest.approx(1.0, abs=1e-10)
        assert second == pytest.approx(1.0, abs=1e-10)

    def test_density_closed_values(self):
        # m = 2: f(w) = 2 w exp(-w^2)
        assert f_W(1.0, 2) == pytest.approx(2.0 / math.e, rel=1e-14)
        # m = 1: half-normal
        assert f_W(0.5, 1) == pytest.approx(2.0 * float(mp.npdf(0.5)), rel=1e-14)

    @pytest.mark.parametrize("m", [1, 2, 5, 30, 1000])
    def test_expected_W_mpmath(self, m):
        ref = mp.sqrt(mp.mpf(2) / m) * mp.gamma(mp.mpf(m + 1) / 2) / mp.gamma(mp.mpf(m) / 2)
        assert expected_W(m) == pytest.approx(float(ref), rel=1e-13)

    @pytest.mark.parametrize("m", [1, 2, 5, 30])
    def test_expected_W_quadrature(self, m):
        assert abs(integrate_semi_infinite_w(lambda w: w, m) - expected_W(m)) <= 1e-10

    def test_infinite_m_point_mass(self):
        w, wt = w_rule(math.inf, DEFAULT_SPEC)
        assert w.tolist() == [1.0] and wt.tolist() == [1.0]
        assert expected_W(math.inf) == 1.0

    def test_bounds_contain_mass(self):
        for m in (1, 2, 5, 30):
            lo, hi = w_bounds(m, DEFAULT_SPEC)
            assert 0.0 <= lo < 1.0 < hi
        assert w_bounds(5, QuadratureSpec(w_upper=3.0))[1] == 3.0


class TestQuadrature:
    def test_composite_nodes_respects_breakpoints(self):
        x, wt = composite_nodes(0.0, 3.0, DEFAULT_SPEC, breakpoints=(0.7, 2.2))
        assert wt.sum() == pytest.approx(3.0, abs=1e-14)
        # a step at 0.7 is integrated exactly
        assert np.dot(wt, (x > 0.7).astype(float)) == pytest.approx(2.3, abs=1e-13)

    def test_empty_range(self):
        x, wt = composite_nodes(1.0, 1.0, DEFAULT_SPEC)
        assert x.size == 0 and wt.size == 0

    @pytest.mark.parametrize("k", [0, 3, 17, 39])
    def test_polynomial_exactness(self, k):
        val = integrate_1d(lambda x: x**k, 0.0, 1.0)
        assert val == pytest.approx(1.0 / (k + 1), rel=1e-13)

    def test_verification_flags_unresolved_integrand(self):
        spec = QuadratureSpec(panels_per_unit=0.1, nodes_per_panel=2, abs_tol=1e-12)
        with pytest.raises(AccuracyError):
            integrate_1d(lambda x: np.sin(40 * x), 0.0, 5.0, spec)

    def test_nonfinite_integrand(self):
        with pytest.raises(EvaluationError):
            integrate_1d(lambda x: np.where(x > 0.5, np.nan, x), 0.0, 1.0)

    def test_spec_from_mapping_aliases(self):
        spec = QuadratureSpec.from_mapping({"nodes": 30, "truncation": 9.0, "abs_tol": 1e-10})
        assert spec.nodes_per_panel == 30 and spec.gamma_truncation == 9.0
        assert spec.doubled().nodes_per_panel == 60 and not spec.doubled().verify

    @pytest.mark.parametrize("kw", [{"nodes_per_panel": 0}, {"panels_per_unit": -1.0}, {"abs_tol": 0.0}])
    def test_spec_domain(self, kw):
        with pytest.raises(DomainError):
            QuadratureSpec(**kw)
