"""Lattice points on circles: the frequency sets of toral eigenfunctions.

Everything here is exact integer / rational arithmetic. Floating point only
appears in :func:`search_eta`'s prefilter, and every hit is re-checked with
:class:`fractions.Fraction` before it is returned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import NotRepresentable

Point = tuple[int, int]


@dataclass(frozen=True)
class LatticeSet:
    """All integer points on the circle of radius sqrt(n).

    ``points`` is sorted lexicographically; ``half_points`` holds one
    representative of each pair {lambda, -lambda}: the points with positive
    second coordinate, plus (sqrt(n), 0) when n is a perfect square.
    """

    n: int
    points: tuple[Point, ...]
    half_points: tuple[Point, ...]

    @property
    def cardinality(self) -> int:
        return len(self.points)

    @property
    def energy(self) -> float:
        return 4.0 * math.pi**2 * self.n

    def half_array(self) -> np.ndarray:
        """``half_points`` as an int64 array of shape (N/2, 2)."""
        return np.array(self.half_points, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True)
class LatticeMoments:
    n: int
    cardinality: int
    sum_l1_sq: int
    sum_l1_4: int
    sum_l1sq_l2sq: int
    sum_l1cub_l2: int
    sum_l1_l2cub: int
    mu4: Fraction

    def identities_hold(self) -> bool:
        n, N, mu = self.n, self.cardinality, self.mu4
        return (
            self.sum_l1_sq * 2 == n * N
            and self.sum_l1cub_l2 == 0
            and self.sum_l1_l2cub == 0
            and Fraction(self.sum_l1_4) == Fraction(n * n * N) * (3 + mu) / 8
            and Fraction(self.sum_l1sq_l2sq) == Fraction(n * n * N) * (1 - mu) / 8
        )


def _half(points: list[Point], n: int) -> tuple[Point, ...]:
    half = [p for p in points if p[1] > 0]
    r = math.isqrt(n)
    if r * r == n:
        half.append((r, 0))
    return tuple(sorted(half))


@lru_cache(maxsize=256)
def decompose(n: int) -> LatticeSet:
    """Enumerate every (a, b) with a^2 + b^2 = n by a direct scan over a."""
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    r = math.isqrt(n)
    points: list[Point] = []
    for a in range(-r, r + 1):
        rest = n - a * a
        b = math.isqrt(rest)
        if b * b == rest:
            points.append((a, -b))
            if b:
                points.append((a, b))
    if not points:
        raise NotRepresentable(f"{n} is not a sum of two squares")
    points.sort()
    return LatticeSet(n=n, points=tuple(points), half_points=_half(points, n))


def mu_hat4(ls: LatticeSet) -> Fraction:
    """Fourth Fourier coefficient of the spectral measure, exactly.

    Re((l1 + i l2)^4) = l1^4 - 6 l1^2 l2^2 + l2^4; the imaginary part cancels
    under the reflection (a, b) -> (a, -b).
    """
    s = sum(a**4 - 6 * a * a * b * b + b**4 for a, b in ls.points)
    return Fraction(s, ls.n * ls.n * ls.cardinality)


def moments(ls: LatticeSet) -> LatticeMoments:
    pts = ls.points
    return LatticeMoments(
        n=ls.n,
        cardinality=ls.cardinality,
        sum_l1_sq=sum(a * a for a, _ in pts),
        sum_l1_4=sum(a**4 for a, _ in pts),
        sum_l1sq_l2sq=sum(a * a * b * b for a, b in pts),
        sum_l1cub_l2=sum(a**3 * b for a, b in pts),
        sum_l1_l2cub=sum(a * b**3 for a, b in pts),
        mu4=mu_hat4(ls),
    )


@lru_cache(maxsize=4)
def lattice_table(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-level cardinality and fourth-moment numerator for every n <= n_max.

    Returns ``(counts, quartic)`` where ``counts[n] = N_n`` and
    ``quartic[n] = sum over Lambda_n of l1^4 - 6 l1^2 l2^2 + l2^4``, both exact
    int64. Scans the quarter plane a, b >= 0 with point multiplicities.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if n_max > 10**8:
        raise ValueError("lattice_table is limited to n_max <= 1e8")
    counts = np.zeros(n_max + 1, dtype=np.int64)
    quartic = np.zeros(n_max + 1, dtype=np.int64)
    r = math.isqrt(n_max)
    for a in range(r + 1):
        bmax = math.isqrt(n_max - a * a)
        b = np.arange(bmax + 1, dtype=np.int64)
        s = a * a + b * b
        mult = (1 if a == 0 else 2) * np.where(b == 0, 1, 2)
        # s is strictly increasing in b, so fancy-index accumulation has no collisions
        counts[s] += mult
        quartic[s] += mult * (a**4 - 6 * a * a * b * b + b**4)
    return counts, quartic


def search_eta(target: float, tol: float, n_max: int, min_N: int = 4) -> list[tuple[int, int, Fraction]]:
    """Levels n <= n_max with |mu_hat4 - target| <= tol and N_n >= min_N.

    Returns ``(n, N_n, mu_hat4)`` triples sorted by n; possibly empty.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    counts, quartic = lattice_table(n_max)
    ns = np.arange(n_max + 1, dtype=np.float64)
    ok = counts >= max(min_N, 1)
    ok[0] = False
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = quartic / (ns * ns * np.maximum(counts, 1))
    cand = np.nonzero(ok & (np.abs(mu - target) <= tol + 1e-9))[0]
    t, e = Fraction(target), Fraction(tol)
    out = []
    for n in cand.tolist():
        mu_exact = Fraction(int(quartic[n]), n * n * int(counts[n]))
        if abs(mu_exact - t) <= e:
            out.append((n, int(counts[n]), mu_exact))
    return out


def pick_level(multiplicity: int, eta: float = 0.0, n_max: int = 2_000_000) -> LatticeSet:
    """Level with exactly ``multiplicity`` lattice points whose mu_hat4 is closest to eta.

    Ties go to the smallest n. Used to build the fixed-N sequences of the
    experiments.
    """
    counts, quartic = lattice_table(n_max)
    ns = np.nonzero(counts == multiplicity)[0]
    if ns.size == 0:
        raise NotRepresentable(f"no level n <= {n_max} has N_n = {multiplicity}")
    nf = ns.astype(np.float64)
    mu = quartic[ns] / (nf * nf * multiplicity)
    best = int(ns[np.argmin(np.abs(mu - eta))])
    return decompose(best)
