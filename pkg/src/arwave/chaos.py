"""Wiener chaos machinery for the nodal length.

Hermite polynomials, the alpha/beta coefficient tables, the chaotic
projection of order q by grid quadrature, and the closed-form fourth chaos
L_n[4] in terms of the W-vector and R statistic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import OrderTooLarge, OrderUnsupported, ResolutionTooLow
from .lattice import LatticeSet, mu_hat4
from .wavefield import WaveCoefficients, _ceil_sqrt, evaluate_grid

MAX_HERMITE = 64
MAX_ALPHA = 32
SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def hermite(q: int, t):
    """Probabilists' Hermite polynomial H_q(t) (scalar or array)."""
    if q < 0:
        raise ValueError("order must be nonnegative")
    if q > MAX_HERMITE:
        raise OrderTooLarge(f"Hermite order {q} exceeds {MAX_HERMITE}")
    t = np.asarray(t, dtype=np.float64)
    h0 = np.ones_like(t)
    if q == 0:
        return h0 if h0.ndim else float(h0)
    h1 = t.copy()
    for k in range(1, q):
        h0, h1 = h1, t * h1 - k * h0
    return h1 if h1.ndim else float(h1)


def hermite_at_zero(q: int) -> int:
    """H_q(0) exactly: 0 for odd q, (-1)^l (2l-1)!! for q = 2l."""
    if q % 2:
        return 0
    l = q // 2
    return (-1) ** l * math.prod(range(1, q, 2))


def _even_half(v: int, name: str) -> int:
    if v < 0 or v % 2:
        raise ValueError(f"{name} must be a nonnegative even integer, got {v}")
    return v // 2


def beta_coeff(two_l: int) -> float:
    l = _even_half(two_l, "index")
    if two_l > MAX_HERMITE:
        raise OrderTooLarge(f"Hermite order {two_l} exceeds {MAX_HERMITE}")
    return hermite_at_zero(2 * l) * INV_SQRT_2PI


@lru_cache(maxsize=None)
def p_poly(N: int, x: Fraction = Fraction(1, 4)) -> Fraction:
    """p_N(x) = sum_j (-1)^(j+N) C(N,j) (2j+1)!/(j!)^2 x^j, exactly."""
    x = Fraction(x)
    total = Fraction(0)
    for j in range(N + 1):
        term = Fraction(math.comb(N, j) * math.factorial(2 * j + 1), math.factorial(j) ** 2) * x**j
        total += term if (j + N) % 2 == 0 else -term
    return total


@lru_cache(maxsize=None)
def alpha_rational(two_a: int, two_b: int) -> Fraction:
    """alpha_{2a,2b} / sqrt(pi/2) as an exact rational."""
    a = _even_half(two_a, "first index")
    b = _even_half(two_b, "second index")
    if a + b > MAX_ALPHA:
        raise OrderTooLarge(f"a+b={a + b} exceeds {MAX_ALPHA}")
    pref = Fraction(math.factorial(2 * a) * math.factorial(2 * b), math.factorial(a) * math.factorial(b) * 2 ** (a + b))
    return pref * p_poly(a + b)


def alpha_coeff(two_a: int, two_b: int) -> float:
    return SQRT_HALF_PI * float(alpha_rational(two_a, two_b))


@dataclass(frozen=True)
class CoefficientTable:
    beta: dict
    alpha: dict
    max_order: int


@lru_cache(maxsize=8)
def coefficient_table(max_order: int = 8) -> CoefficientTable:
    """beta_{2l} for 2l <= max_order and alpha_{2a,2b} for 2a+2b <= max_order."""
    if max_order % 2 or max_order < 0:
        raise ValueError("max_order must be a nonnegative even integer")
    beta = {2 * l: beta_coeff(2 * l) for l in range(max_order // 2 + 1)}
    alpha = {
        (2 * a, 2 * (u - a)): alpha_coeff(2 * a, 2 * (u - a)) for u in range(max_order // 2 + 1) for a in range(u + 1)
    }
    return CoefficientTable(beta=beta, alpha=alpha, max_order=max_order)


# -- projection by quadrature -----------------------------------------------

QUADRATURE_ORDERS = (4, 6, 8)


def _projection(coeffs: WaveCoefficients, q: int, m: int) -> float:
    n = coeffs.lattice.n
    grid = evaluate_grid(coeffs, m, "spectral" if m > 2 * _ceil_sqrt(n) else "direct", with_hess=False)
    T = grid.values
    d1 = grid.grad[..., 0]
    d2 = grid.grad[..., 1]
    Q = q // 2
    tab = coefficient_table(q)
    hT = {2 * j: hermite(2 * j, T) for j in range(Q + 1)}
    h1 = {2 * j: hermite(2 * j, d1) for j in range(Q + 1)}
    h2 = {2 * j: hermite(2 * j, d2) for j in range(Q + 1)}
    terms = []
    for u in range(Q + 1):
        for k in range(u + 1):
            i, j, l = 2 * k, 2 * u - 2 * k, 2 * Q - 2 * u
            w = tab.alpha[(i, j)] * tab.beta[l] / (math.factorial(i) * math.factorial(j) * math.factorial(l))
            terms.append(w * math.fsum((hT[l] * h1[i] * h2[j]).ravel().tolist()) / (m * m))
    return math.sqrt(4.0 * math.pi**2 * n / 2.0) * math.fsum(terms)


def chaos_projection_quadrature(coeffs: WaveCoefficients, q: int, m: int) -> float:
    """Order-q chaotic projection of the nodal length by rectangle-rule quadrature.

    The integrand is a trigonometric polynomial with frequencies below
    q*sqrt(n) per axis, so the rule is exact once m exceeds that.
    """
    if q not in QUADRATURE_ORDERS:
        raise OrderUnsupported(f"q must be one of {QUADRATURE_ORDERS}, got {q}")
    n = coeffs.lattice.n
    if m < 8 * _ceil_sqrt(n):
        raise ResolutionTooLow(f"quadrature needs m >= 8*ceil(sqrt(n)) = {8 * _ceil_sqrt(n)}")
    return _projection(coeffs, q, m)


def second_chaos_quadrature(coeffs: WaveCoefficients, m: int) -> float:
    """The q=2 analogue of the projection; vanishes identically."""
    if m < 8 * _ceil_sqrt(coeffs.lattice.n):
        raise ResolutionTooLow("quadrature needs m >= 8*ceil(sqrt(n))")
    return _projection(coeffs, 2, m)


# -- closed forms -------------------------------------------------------------


def _moduli(coeffs: WaveCoefficients) -> np.ndarray:
    return np.abs(coeffs.a) ** 2


def _weights(ls: LatticeSet) -> np.ndarray:
    h = ls.half_array().astype(np.float64)
    return np.stack([np.full(len(h), float(ls.n)), h[:, 0] ** 2, h[:, 1] ** 2, h[:, 0] * h[:, 1]], axis=1)


def w_from_moduli(ls: LatticeSet, moduli: np.ndarray) -> np.ndarray:
    """W-vector for one (k,) or many (T, k) draws of |a_lambda|^2."""
    pref = 1.0 / (ls.n * math.sqrt(ls.cardinality / 2.0))
    return pref * ((np.asarray(moduli) - 1.0) @ _weights(ls))


def r_from_moduli(ls: LatticeSet, moduli: np.ndarray) -> np.ndarray:
    return np.sum(np.asarray(moduli) ** 2, axis=-1) / ls.cardinality


def w_vector(coeffs: WaveCoefficients) -> np.ndarray:
    return w_from_moduli(coeffs.lattice, _moduli(coeffs))


def r_statistic(coeffs: WaveCoefficients) -> float:
    return float(r_from_moduli(coeffs.lattice, _moduli(coeffs)))


def quadratic_part(w) -> np.ndarray:
    """W1^2 - 2W2^2 - 2W3^2 - 4W4^2, written as -(W2-W3)^2 - 4W4^2 using W1 = W2 + W3."""
    w = np.asarray(w)
    return -((w[..., 1] - w[..., 2]) ** 2) - 4.0 * w[..., 3] ** 2


def fourth_chaos_scale(ls: LatticeSet) -> float:
    """sqrt(E_n / (512 N_n^2))."""
    return math.sqrt(ls.energy / (512.0 * ls.cardinality**2))


def fourth_chaos_from_moduli(ls: LatticeSet, moduli: np.ndarray) -> np.ndarray:
    w = w_from_moduli(ls, moduli)
    return fourth_chaos_scale(ls) * (quadratic_part(w) + r_from_moduli(ls, moduli))


def fourth_chaos_closed_form(coeffs: WaveCoefficients) -> float:
    return float(fourth_chaos_from_moduli(coeffs.lattice, _moduli(coeffs)))


NORMALIZATIONS = ("displayed", "exact")


def variance_factor(ls: LatticeSet, norm: str = "displayed") -> float:
    """Var(L_n[4]) / (E_n/(512 N_n^2)).

    ``displayed``: 1 + mu^2 + 34/N, the commonly quoted form, which overstates it.
    ``exact``: 1 + mu^2 - 2/N, the variance of the closed form at finite N
    (second moments of exponential |a|^2 plus the fourth cumulant of R).
    """
    mu = float(mu_hat4(ls))
    N = ls.cardinality
    if norm == "displayed":
        return 1.0 + mu * mu + 34.0 / N
    if norm == "exact":
        return 1.0 + mu * mu - 2.0 / N
    raise ValueError(f"norm must be one of {NORMALIZATIONS}")


def fourth_chaos_variance_exact(ls: LatticeSet) -> float:
    """E_n/(512 N_n^2) (1 + mu^2 + 34/N_n)."""
    return fourth_chaos_scale(ls) ** 2 * variance_factor(ls, "displayed")


def fourth_chaos_variance_finite(ls: LatticeSet) -> float:
    """Actual variance of the closed form at finite N: E_n/(512 N_n^2) (1 + mu^2 - 2/N_n)."""
    return fourth_chaos_scale(ls) ** 2 * variance_factor(ls, "exact")


def fourth_chaos_variance_leading(ls: LatticeSet) -> float:
    """Leading asymptotic E_n/(512 N_n^2) (1 + mu^2)."""
    mu = float(mu_hat4(ls))
    return fourth_chaos_scale(ls) ** 2 * (1.0 + mu * mu)


def m_from_moduli(ls: LatticeSet, moduli: np.ndarray, norm: str = "displayed") -> np.ndarray:
    return quadratic_part(w_from_moduli(ls, moduli)) / math.sqrt(variance_factor(ls, norm))


def m_statistic(coeffs: WaveCoefficients, norm: str = "displayed") -> float:
    """Standardized dominant term M_n = f(W2, W3, W4) / sqrt(variance factor)."""
    return float(m_from_moduli(coeffs.lattice, _moduli(coeffs), norm))


def standardized_from_moduli(ls: LatticeSet, moduli: np.ndarray, norm: str = "displayed") -> np.ndarray:
    """L_n[4] divided by its standard deviation under ``norm``."""
    return fourth_chaos_from_moduli(ls, moduli) / (fourth_chaos_scale(ls) * math.sqrt(variance_factor(ls, norm)))


@dataclass(frozen=True)
class ChaosSummary:
    w: tuple
    r_stat: float
    fourth_chaos: float
    m_stat: float
    mu4: float

    def as_dict(self) -> dict:
        return {
            "w": list(self.w),
            "r_stat": self.r_stat,
            "fourth_chaos": self.fourth_chaos,
            "m_stat": self.m_stat,
            "mu4": self.mu4,
        }


def summarize(coeffs: WaveCoefficients, norm: str = "displayed") -> ChaosSummary:
    ls = coeffs.lattice
    mod = _moduli(coeffs)
    w = w_from_moduli(ls, mod)
    return ChaosSummary(
        w=tuple(float(v) for v in w),
        r_stat=float(r_from_moduli(ls, mod)),
        fourth_chaos=float(fourth_chaos_from_moduli(ls, mod)),
        m_stat=float(m_from_moduli(ls, mod, norm)),
        mu4=float(mu_hat4(ls)),
    )
