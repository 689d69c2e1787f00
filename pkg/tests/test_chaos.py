import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import hermite_e
from scipy.special import roots_genlaguerre

from arwave import chaos
from arwave.errors import OrderTooLarge, OrderUnsupported, ResolutionTooLow
from arwave.lattice import decompose, mu_hat4
from arwave.rng import substream
from arwave.wavefield import sample_coefficients


def coeffs_for(n, index=0, seed=0):
    return sample_coefficients(decompose(n), substream(seed, index))


def alpha_oracle(two_a, two_b):
    """E[|Z| H_2a(Z1) H_2b(Z2)] for a standard Gaussian Z in R^2, in polar coordinates.

    With u = r^2/2 the radial integral is a polynomial in u against u^(1/2) e^(-u),
    so generalized Gauss-Laguerre is exact; the angular trapezoid rule is exact
    for trigonometric polynomials.
    """
    u, w = roots_genlaguerre(40, 0.5)
    phi = 2 * math.pi * np.arange(256) / 256
    r = np.sqrt(2 * u)[:, None]
    val = chaos.hermite(two_a, r * np.cos(phi)) * chaos.hermite(two_b, r * np.sin(phi))
    return float(math.sqrt(2) * (w[:, None] * val).sum() / 256)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 30), st.floats(-6, 6))
def test_hermite_matches_numpy(q, t):
    ref = hermite_e.hermeval(t, [0] * q + [1])
    assert chaos.hermite(q, t) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_hermite_at_zero():
    for q in range(0, 21):
        assert chaos.hermite_at_zero(q) == round(hermite_e.hermeval(0.0, [0] * q + [1]))
    assert chaos.hermite_at_zero(8) == 105


def test_hermite_limits():
    with pytest.raises(OrderTooLarge):
        chaos.hermite(65, 0.1)
    with pytest.raises(ValueError):
        chaos.hermite(-1, 0.1)


def test_beta():
    assert chaos.beta_coeff(0) == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert chaos.beta_coeff(2) == pytest.approx(-1 / math.sqrt(2 * math.pi))
    assert chaos.beta_coeff(4) == pytest.approx(3 / math.sqrt(2 * math.pi))
    with pytest.raises(ValueError):
        chaos.beta_coeff(3)


def test_p_poly_exact():
    assert chaos.p_poly(0) == 1
    assert chaos.p_poly(1) == Fraction(1, 2)  # -1 + 6/4
    assert chaos.p_poly(2) == 1 - Fraction(2 * 6, 4) + Fraction(120, 4 * 16)


@pytest.mark.parametrize("a,b", [(0, 0), (2, 0), (0, 2), (2, 2), (4, 0), (4, 2), (2, 4), (6, 0), (6, 2), (4, 4), (8, 0)])
def test_alpha_against_gaussian_expectation(a, b):
    assert chaos.alpha_coeff(a, b) == pytest.approx(alpha_oracle(a, b), rel=1e-10, abs=1e-12)


def test_alpha_symmetric_and_bounded():
    for a in range(0, 12, 2):
        for b in range(0, 12, 2):
            assert chaos.alpha_rational(a, b) == chaos.alpha_rational(b, a)
    with pytest.raises(OrderTooLarge):
        chaos.alpha_coeff(40, 26)
    with pytest.raises(ValueError):
        chaos.alpha_coeff(1, 2)


def test_coefficient_table():
    tab = chaos.coefficient_table(8)
    assert set(tab.beta) == {0, 2, 4, 6, 8}
    assert all(i + j <= 8 and i % 2 == 0 == j % 2 for i, j in tab.alpha)
    assert len(tab.alpha) == 15


@pytest.mark.parametrize("n,index", [(65, 0), (65, 1), (1105, 0), (25, 3)])
def test_closed_form_matches_quadrature(n, index):
    co = coeffs_for(n, index)
    m = 8 * math.isqrt(n - 1) + 8
    cf = chaos.fourth_chaos_closed_form(co)
    q = chaos.chaos_projection_quadrature(co, 4, m)
    assert q == pytest.approx(cf, rel=1e-9, abs=1e-12 * chaos.fourth_chaos_scale(co.lattice))


def test_quadrature_is_resolution_independent():
    co = coeffs_for(65)
    a = chaos.chaos_projection_quadrature(co, 6, 72)
    b = chaos.chaos_projection_quadrature(co, 6, 144)
    assert a == pytest.approx(b, rel=1e-10)


def test_second_chaos_vanishes():
    for idx in range(3):
        co = coeffs_for(65, idx)
        assert abs(chaos.second_chaos_quadrature(co, 72)) < 1e-12


def test_quadrature_guards():
    co = coeffs_for(65)
    with pytest.raises(OrderUnsupported):
        chaos.chaos_projection_quadrature(co, 5, 128)
    with pytest.raises(ResolutionTooLow):
        chaos.chaos_projection_quadrature(co, 4, 32)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([5, 25, 65, 85, 1105]), st.integers(0, 10**6))
def test_w_vector_identities(n, index):
    co = coeffs_for(n, index)
    w = chaos.w_vector(co)
    assert w[0] == pytest.approx(w[1] + w[2], abs=1e-12)
    quad = chaos.quadratic_part(w)
    assert quad == pytest.approx(w[0] ** 2 - 2 * w[1] ** 2 - 2 * w[2] ** 2 - 4 * w[3] ** 2, abs=1e-10)
    assert quad <= 0.0
    assert chaos.r_statistic(co) > 0.0


def test_closed_form_variance_finite_n():
    # Var(L[4]) = E/(512 N^2) (1 + mu^2 - 2/N), from Exp(1) moments (oracle: simulation)
    ls = decompose(65)
    moduli = substream(5, 0).standard_exponential((200_000, len(ls.half_points)))
    l4 = chaos.fourth_chaos_from_moduli(ls, moduli)
    v = np.var(l4, ddof=1)
    assert v == pytest.approx(chaos.fourth_chaos_variance_finite(ls), rel=0.02)
    assert abs(l4.mean()) < 4 * math.sqrt(v / l4.size)


def test_variance_factors():
    ls = decompose(1105)
    mu = float(mu_hat4(ls))
    N = ls.cardinality
    assert chaos.variance_factor(ls, "displayed") == pytest.approx(1 + mu * mu + 34 / N)
    assert chaos.variance_factor(ls, "exact") == pytest.approx(1 + mu * mu - 2 / N)
    assert chaos.fourth_chaos_variance_leading(ls) < chaos.fourth_chaos_variance_exact(ls)
    with pytest.raises(ValueError):
        chaos.variance_factor(ls, "other")


def test_summary():
    co = coeffs_for(65)
    s = chaos.summarize(co)
    d = s.as_dict()
    assert set(d) == {"w", "r_stat", "fourth_chaos", "m_stat", "mu4"}
    assert d["fourth_chaos"] == chaos.fourth_chaos_closed_form(co)
    assert d["m_stat"] == chaos.m_statistic(co)
