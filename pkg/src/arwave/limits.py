"""Limit objects and deviation machinery.

M_eta and its tail, the covariance matrices Gamma(eta) and Sigma_eta, the
quadratic CGF psi with its Legendre transform, the rate function of the
standardized fourth chaos, and a brute-force contraction oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConvergenceFailure, MgfDivergent
from .lattice import decompose

IMAGE_TOL = 1e-10


def _check_eta(eta: float) -> float:
    eta = float(eta)
    if not -1.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [-1, 1], got {eta}")
    return eta


# -- M_eta ----------------------------------------------------------------------


def m_eta_map(eta: float, x1, x2):
    """(2 - (1+eta) x1^2 - (1-eta) x2^2) / (2 sqrt(1+eta^2))."""
    eta = _check_eta(eta)
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    return (2.0 - (1.0 + eta) * x1 * x1 - (1.0 - eta) * x2 * x2) / (2.0 * math.sqrt(1.0 + eta * eta))


def sample_M_eta(eta: float, rng: np.random.Generator, size=None):
    x = rng.standard_normal((2,) if size is None else (2, size))
    out = m_eta_map(eta, x[0], x[1])
    return float(out) if size is None else out


def support_sup(eta: float) -> float:
    return 1.0 / math.sqrt(1.0 + _check_eta(eta) ** 2)


def _chi2_mix_log_survival(a: float, b: float, c: float) -> float:
    """log P(a X1^2 + b X2^2 >= c) for a >= b >= 0, c > 0.

    Conditioning on X1 and writing s = c/a - X1^2,
        P = e^{-c/(2a)} [erfcx(sqrt(c/(2a)))
                         + int_0^{c/a} erfcx(sqrt(a s/(2b))) e^{-k s} (c/a - s)^{-1/2} ds / sqrt(2 pi)]
    with k = (a - b)/(2b). The prefactor carries the whole exponential decay,
    so the bracket stays O(1) and the result keeps full relative accuracy.
    """
    if b <= 0.0:
        return math.log(special.erfc(math.sqrt(c / (2.0 * a))))
    top = c / a
    k = (a - b) / (2.0 * b)
    r = a / (2.0 * b)
    g = lambda s: special.erfcx(math.sqrt(r * s)) * math.exp(-k * s)
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    cut = 40.0 / k if k > 0 else math.inf
    if cut < top:
        head, _ = integrate.quad(lambda s: g(s) / math.sqrt(top - s), 0.0, cut, **opts)
        tail, _ = integrate.quad(g, cut, top, weight="alg", wvar=(0.0, -0.5), **opts)
        body = head + tail
    else:
        body, _ = integrate.quad(g, 0.0, top, weight="alg", wvar=(0.0, -0.5), **opts)
    bracket = special.erfcx(math.sqrt(c / (2.0 * a))) + body / math.sqrt(2.0 * math.pi)
    return -c / (2.0 * a) + math.log(bracket)


def log_tail_probability_M_eta(eta: float, t: float) -> float:
    """log P(M_eta <= -t)."""
    eta = _check_eta(eta)
    if t <= 0:
        raise ValueError("t must be positive")
    c = 2.0 * math.sqrt(1.0 + eta * eta) * t + 2.0
    a, b = 1.0 + abs(eta), 1.0 - abs(eta)
    return _chi2_mix_log_survival(a, b, c)


def tail_probability_M_eta(eta: float, t: float) -> float:
    return math.exp(log_tail_probability_M_eta(eta, t))


def tail_slope(eta: float, t: float) -> float:
    """-log P(M_eta <= -t) / t."""
    return -log_tail_probability_M_eta(eta, t) / t


# -- covariance structure -------------------------------------------------------


def sigma_matrix(eta: float) -> np.ndarray:
    eta = _check_eta(eta)
    p, q = (3.0 + eta) / 8.0, (1.0 - eta) / 8.0
    return np.array([[p, q, 0.0], [q, p, 0.0], [0.0, 0.0, q]])


def gamma_matrix(eta: float) -> np.ndarray:
    """Limit covariance of (W1, W2, W3, W4); W1 = W2 + W3 makes it singular."""
    g = np.zeros((4, 4))
    g[1:, 1:] = sigma_matrix(eta)
    g[0, 1] = g[1, 0] = g[0, 2] = g[2, 0] = 0.5
    g[0, 0] = 1.0
    return g


def gamma_eigenvalues_expected(eta: float) -> np.ndarray:
    eta = _check_eta(eta)
    return np.sort(np.array([0.0, 1.5, (1.0 - eta) / 8.0, (1.0 + eta) / 4.0]))


@dataclass(frozen=True)
class EtaParams:
    eta: float
    sigma: np.ndarray
    gamma: np.ndarray

    @classmethod
    def of(cls, eta: float) -> "EtaParams":
        return cls(eta=_check_eta(eta), sigma=sigma_matrix(eta), gamma=gamma_matrix(eta))

    def gamma_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.gamma)

    def singular(self) -> bool:
        return abs(self.eta) == 1.0

    def as_dict(self) -> dict:
        return {
            "eta": self.eta,
            "sigma": self.sigma.tolist(),
            "gamma": self.gamma.tolist(),
            "gamma_eigenvalues": self.gamma_eigenvalues().tolist(),
            "expected_eigenvalues": gamma_eigenvalues_expected(self.eta).tolist(),
        }


def psi(theta, eta: float) -> float:
    """1/2 <theta, Sigma_eta theta>."""
    th = np.asarray(theta, dtype=np.float64)
    return 0.5 * float(th @ sigma_matrix(eta) @ th)


def _sigma_eigen(eta: float):
    # orthonormal eigenbasis: (1,1,0)/sqrt2 -> 1/2, (1,-1,0)/sqrt2 -> (1+eta)/4, e3 -> (1-eta)/8
    r = 1.0 / math.sqrt(2.0)
    vecs = np.array([[r, r, 0.0], [r, -r, 0.0], [0.0, 0.0, 1.0]])
    vals = np.array([0.5, (1.0 + eta) / 4.0, (1.0 - eta) / 8.0])
    return vals, vecs


def psi_star(x, eta: float) -> float:
    """Legendre transform of psi: 1/2 x^T Sigma^+ x on the image of Sigma, +inf off it."""
    eta = _check_eta(eta)
    vals, vecs = _sigma_eigen(eta)
    c = vecs @ np.asarray(x, dtype=np.float64)
    total = 0.0
    for lam, ci in zip(vals, c):
        if lam <= 0.0:
            if abs(ci) > IMAGE_TOL:
                return math.inf
            continue
        total += 0.5 * ci * ci / lam
    return total


# -- rate functions -------------------------------------------------------------


def contraction_map(x) -> float:
    """f(x) = -(x1 - x2)^2 - 4 x3^2, the quadratic part of the fourth chaos in (W2, W3, W4)."""
    x = np.asarray(x, dtype=np.float64)
    return -((x[..., 0] - x[..., 1]) ** 2) - 4.0 * x[..., 2] ** 2


def rate_function_f(y: float, eta: float) -> float:
    """I_f(y) = inf{psi*(x): f(x) = y} = -y/(1+|eta|) for y <= 0."""
    eta = _check_eta(eta)
    return math.inf if y > 0 else -y / (1.0 + abs(eta))


def rate_function(y: float, eta: float) -> float:
    """I_eta(y) = -y sqrt(1+eta^2)/(1+|eta|) for y <= 0, +inf for y > 0."""
    eta = _check_eta(eta)
    if y > 0:
        return math.inf
    return -y * math.sqrt(1.0 + eta * eta) / (1.0 + abs(eta))


@dataclass(frozen=True)
class RateQuery:
    y: float
    eta: float
    value: float

    @classmethod
    def of(cls, y: float, eta: float) -> "RateQuery":
        return cls(y=float(y), eta=float(eta), value=rate_function(y, eta))

    def as_dict(self) -> dict:
        return {"y": self.y, "eta": self.eta, "value": "inf" if math.isinf(self.value) else self.value}


def _min_over_sum(eta: float, d: float, x3: float, h: float) -> tuple[float, float]:
    """Minimize psi* over the free coordinate s = x1 + x2 with d = x1 - x2 and x3 fixed.

    psi* is quadratic in s, so three evaluations determine it exactly.
    """
    point = lambda s: (0.5 * (s + d), 0.5 * (s - d), x3)
    f0, fp, fm = (psi_star(point(s), eta) for s in (0.0, h, -h))
    if math.isinf(f0) or math.isinf(fp) or math.isinf(fm):
        return math.inf, 0.0
    curv = (fp + fm - 2.0 * f0) / (h * h)
    if curv <= 0.0:
        raise ConvergenceFailure("psi* is not strictly convex along the free direction")
    s = -(fp - fm) / (2.0 * h * curv)
    return psi_star(point(s), eta), s


def rate_function_bruteforce_details(y: float, eta: float, grid_radius: float = 1.0, resolution: int = 400):
    """Numeric inf of psi* on {f(x) = y}; returns (value, minimizer).

    The constraint set is {d^2 + 4 x3^2 = -y} x {s free}; the ellipse is
    scanned at ``resolution`` angles (including the axes, where the singular
    cases live) and the best angle refined by bounded scalar minimization.
    """
    eta = _check_eta(eta)
    if y >= 0:
        raise ValueError("the oracle needs y < 0")
    if resolution < 200:
        raise ValueError("resolution must be at least 200")
    rad = math.sqrt(-y)

    def along(phi):
        return _min_over_sum(eta, rad * math.cos(phi), 0.5 * rad * math.sin(phi), grid_radius)

    res = 4 * ((resolution + 3) // 4)  # multiples of pi/2 lie on the grid
    phis = 2.0 * math.pi * np.arange(res) / res
    vals = np.array([along(p)[0] for p in phis])
    if not np.isfinite(vals).any():
        raise ConvergenceFailure("no feasible point of the constraint lies in the image of Sigma")
    i = int(np.argmin(vals))
    best_phi, best = phis[i], vals[i]
    step = 2.0 * math.pi / res
    lo, hi = best_phi - step, best_phi + step
    if np.isfinite(vals[(i - 1) % res]) and np.isfinite(vals[(i + 1) % res]):
        opt = optimize.minimize_scalar(
            lambda p: along(p)[0], bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
        )
        if not opt.success:
            raise ConvergenceFailure(f"angle refinement failed: {opt.message}")
        if opt.fun <= best:
            best_phi, best = float(opt.x), float(opt.fun)
        elif opt.fun > best + 1e-9:
            raise ConvergenceFailure("refinement stalled above the grid minimum")
    val, s = along(best_phi)
    d, x3 = rad * math.cos(best_phi), 0.5 * rad * math.sin(best_phi)
    return val, np.array([0.5 * (s + d), 0.5 * (s - d), x3])


def rate_function_bruteforce(y: float, eta: float, grid_radius: float = 1.0, resolution: int = 400) -> float:
    """Oracle for I_f(y); I_eta(y) = I_f(y sqrt(1+eta^2))."""
    return rate_function_bruteforce_details(y, eta, grid_radius, resolution)[0]


# -- cumulant generating function -----------------------------------------------


def _directions(n: int) -> np.ndarray:
    h = decompose(n).half_array().astype(np.float64)
    return np.stack([h[:, 0] ** 2, h[:, 1] ** 2, h[:, 0] * h[:, 1]], axis=1) / n


def cgf_Sn(theta, n: int, alpha: float) -> float:
    """(1/alpha) log E exp(sqrt(alpha) <theta, S_n>) with S_n = (W2, W3, W4).

    Each |a_lambda|^2 is Exp(1), so log E e^{t(|a|^2-1)} = -t - log(1-t) exactly.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    ls = decompose(n)
    t = _directions(n) @ np.asarray(theta, dtype=np.float64) * math.sqrt(2.0 * alpha / ls.cardinality)
    if np.any(t >= 1.0):
        raise MgfDivergent(f"max t_lambda = {t.max():.4g} >= 1; theta outside the effective domain")
    return math.fsum((-t - np.log1p(-t)).tolist()) / alpha


def speed_ratio(n: int, alpha: float) -> float:
    """alpha / log N_n; the moderate-deviation regime needs this to stay small."""
    return alpha / math.log(decompose(n).cardinality)
