"""Nodal length of a sampled field.

The zero set is traced cell by cell (marching squares on the periodic grid).
Two refinements over plain linear marching squares keep the discretization
error at fourth order in the cell size:

* the crossing on each sign-changing edge is the root of the cubic Hermite
  interpolant built from the node values and the tangential derivative;
* each segment length is the arc length of the cubic through both crossings
  whose end slopes match the level-curve tangents (perpendicular to the
  interpolated gradient), not the chord length.

Saddle cells are split by the sign of the exact value at the cell center, and
their segments, like segments whose end tangents are too steep for the cubic,
are measured by following the exact level curve with a predictor-corrector
tracer. ``method="linear"`` gives plain chord-length marching squares.

Segment geometry is computed in cell-local coordinates, so shifting the field
by whole grid steps reproduces the same multiset of segment lengths (bit for
bit except traced segments, which agree to rounding); totals use
:func:`math.fsum` and are therefore order independent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateField, MaxResolutionExceeded, RadiusOutOfRange
from .wavefield import FieldGrid, WaveCoefficients, _ceil_sqrt, evaluate_grid

# Gauss-Legendre nodes/weights mapped to [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W

MAX_SLOPE = 1.5  # end slopes beyond ~56 degrees only occur in unresolved cells
MAX_RESOLUTION = 2**14


@dataclass
class NodalMeasurement:
    length: float
    m: int
    segments: int
    refinement_history: list = field(default_factory=list)
    under_resolved: bool = False
    traced: int = 0


def default_resolution(n: int) -> int:
    return max(256, 8 * _ceil_sqrt(n))


# -- edge crossings ---------------------------------------------------------


def _hermite(t, f0, f1, d0, d1):
    t2 = t * t
    t3 = t2 * t
    return (2 * t3 - 3 * t2 + 1) * f0 + (t3 - 2 * t2 + t) * d0 + (-2 * t3 + 3 * t2) * f1 + (t3 - t2) * d1


def _hermite_dt(t, f0, f1, d0, d1):
    t2 = t * t
    return (6 * t2 - 6 * t) * (f0 - f1) + (3 * t2 - 4 * t + 1) * d0 + (3 * t2 - 2 * t) * d1


def _edge_roots(f0, f1, d0, d1, iters: int = 8):
    """Root in (0, 1) of the cubic Hermite interpolant; f0 and f1 differ in sign."""
    t = f0 / (f0 - f1)
    lo = np.zeros_like(t)
    hi = np.ones_like(t)
    pos0 = f0 > 0
    for _ in range(iters):
        p = _hermite(t, f0, f1, d0, d1)
        hit = p == 0.0
        same = (p > 0) == pos0
        lo = np.where(same & ~hit, t, lo)
        hi = np.where(same | hit, hi, t)
        dp = _hermite_dt(t, f0, f1, d0, d1)
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - p / dp
        bad = ~np.isfinite(tn) | (tn < lo) | (tn > hi)
        t = np.where(hit, t, np.where(bad, 0.5 * (lo + hi), tn))
    return t


def _edge_data(grid: FieldGrid, values: np.ndarray, positive: np.ndarray, axis: int, linear: bool = False):
    """Crossings on the edges from node (i,j) to its neighbour along ``axis``.

    Returns an (m, m) map from edge to crossing id (-1 when the edge has no
    sign change), the crossing parameters t in (0, 1) and the normalized
    gradients at the crossings.
    """
    m = grid.m
    h = 1.0 / m
    cross = positive != np.roll(positive, -1, axis=axis)
    i0, j0 = np.nonzero(cross)
    i1, j1 = ((i0 + 1) % m, j0) if axis == 0 else (i0, (j0 + 1) % m)
    ids = np.full((m, m), -1, dtype=np.int64)
    ids[i0, j0] = np.arange(i0.size)
    f0, f1 = values[i0, j0], values[i1, j1]
    g0, g1 = grid.grad[i0, j0], grid.grad[i1, j1]
    if linear:
        t = f0 / (f0 - f1)
    else:
        scale = grid.grad_scale * h
        t = _edge_roots(f0, f1, scale * g0[:, axis], scale * g1[:, axis])
    if grid.hess is not None and not linear:
        # derivative of (g1, g2) along the edge: x-edges use (h11, h12), y-edges (h12, h22)
        cols = (0, 1) if axis == 0 else (1, 2)
        hh0, hh1 = grid.hess[i0, j0], grid.hess[i1, j1]
        g = np.stack(
            [_hermite(t, g0[:, k], g1[:, k], h * hh0[:, c], h * hh1[:, c]) for k, c in enumerate(cols)],
            axis=-1,
        )
    else:
        g = (1.0 - t)[:, None] * g0 + t[:, None] * g1
    return ids, t, g


# -- segment assembly -------------------------------------------------------

TRACE_STEPS = 8  # tracer steps per cell width


@dataclass
class SegmentSet:
    """Nodal segments: start point on the torus, chord vector and arc length."""

    start: np.ndarray
    chord: np.ndarray
    length: np.ndarray
    traced: int = 0
    untraced: int = 0

    def __len__(self) -> int:
        return int(self.length.size)


def _prepare_values(grid: FieldGrid) -> np.ndarray:
    v = np.array(grid.values, dtype=np.float64, copy=True)
    if not np.any(v):
        raise DegenerateField("field vanishes identically on the grid")
    zeros = v == 0.0
    nz = int(zeros.sum())
    if nz > 0.01 * v.size:
        raise DegenerateField(f"{nz} of {v.size} grid values are exactly zero")
    if nz:
        v[zeros] = 1e-12 * np.max(np.abs(v))
    return v


def _local(edge, t):
    # cell-local coordinates of a crossing on edge 0..3 (bottom, right, top, left)
    x = np.select([edge == 0, edge == 1, edge == 2], [t, 1.0, t], 0.0)
    y = np.select([edge == 0, edge == 1, edge == 2], [0.0, t, 1.0], t)
    return np.stack([x, y], axis=-1)


def _end_slopes(p, q, gp, gq):
    """Level-curve slopes relative to the chord at both ends, and chord lengths."""
    chord = q - p
    c = np.hypot(chord[:, 0], chord[:, 1])
    ok = c > 0
    u = np.zeros_like(chord)
    u[ok] = chord[ok] / c[ok, None]
    nrm = np.stack([-u[:, 1], u[:, 0]], axis=-1)

    def slope(g):
        along = np.einsum("ij,ij->i", g, nrm)  # tangent (-g2, g1) dotted with u
        across = -np.einsum("ij,ij->i", g, u)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = across / along
        return np.where(np.isfinite(s), s, np.inf)

    return c, slope(gp), slope(gq)


def _curved_factor(a, b):
    """Arc length / chord of the cubic with end slopes a, b over the chord."""
    a = np.clip(a, -MAX_SLOPE, MAX_SLOPE)[:, None]
    b = np.clip(b, -MAX_SLOPE, MAX_SLOPE)[:, None]
    tau = _GL_X[None, :]
    dy = a * (1 - tau) * (1 - 3 * tau) + b * tau * (3 * tau - 2)
    return np.sqrt(1.0 + dy * dy) @ _GL_W


def _trace(grid: FieldGrid, start, chord, steps: int = TRACE_STEPS, max_steps: int = 6 * TRACE_STEPS):
    """Arc length of the exact level curve from ``start`` to ``start + chord``.

    Midpoint predictor along the unit tangent, two Newton corrections back
    onto the zero set. Returns lengths and a mask of curves that reached
    their end point; the rest keep their cubic estimate.
    """
    ev = grid.evaluator
    scale = grid.grad_scale
    ds = 1.0 / (grid.m * steps)
    target = start + chord
    x = start.copy()
    ref = chord / np.maximum(np.hypot(chord[:, 0], chord[:, 1]), 1e-300)[:, None]
    length = np.zeros(len(start))
    done = np.zeros(len(start), dtype=bool)

    def tangent(pts, prev):
        g = ev(pts)[1]
        t = np.stack([-g[:, 1], g[:, 0]], axis=-1)
        t /= np.maximum(np.hypot(t[:, 0], t[:, 1]), 1e-300)[:, None]
        t[np.einsum("ij,ij->i", t, prev) < 0] *= -1.0
        return t

    for _ in range(max_steps):
        act = np.nonzero(~done)[0]
        if act.size == 0:
            break
        xa = x[act]
        gap = target[act] - xa
        dist = np.hypot(gap[:, 0], gap[:, 1])
        fin = (np.einsum("ij,ij->i", gap, ref[act]) <= ds) & (dist <= 1.5 * ds)
        length[act[fin]] += dist[fin]
        done[act[fin]] = True
        act, xa = act[~fin], xa[~fin]
        if act.size == 0:
            break
        t1 = tangent(xa, ref[act])
        t2 = tangent(xa + 0.5 * ds * t1, t1)
        xn = xa + ds * t2
        for _ in range(2):
            v, g = ev(xn)
            g = g * scale
            xn -= (v / np.maximum(np.einsum("ij,ij->i", g, g), 1e-300))[:, None] * g
        dx = xn - xa
        dl = np.hypot(dx[:, 0], dx[:, 1])
        length[act] += dl
        ref[act] = dx / np.maximum(dl, 1e-300)[:, None]
        x[act] = xn
    return length, done


METHODS = ("hermite", "linear")


def extract_segments(grid: FieldGrid, method: str = "hermite") -> SegmentSet:
    """All nodal segments of the periodic grid.

    With ``method="hermite"``, segments whose end tangents are too steep for
    the cubic model and segments in saddle cells are measured by tracing the
    exact level curve between their end points when the grid carries an
    evaluator; traces that fail to reach their end point keep the cubic value.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    linear = method == "linear"
    v = _prepare_values(grid)
    m = grid.m
    h = 1.0 / m
    pos = v > 0
    idx_x, tx, gx = _edge_data(grid, v, pos, axis=0, linear=linear)
    idx_y, ty, gy = _edge_data(grid, v, pos, axis=1, linear=linear)
    t_all = np.concatenate([tx, ty])
    g_all = np.concatenate([gx, gy])
    idx_y = np.where(idx_y >= 0, idx_y + tx.size, -1)

    # crossing ids of the cell edges: bottom, right, top, left
    edges = np.stack(
        [idx_x, np.roll(idx_y, -1, axis=0), np.roll(idx_x, -1, axis=1), idx_y], axis=-1
    )
    count = (edges >= 0).sum(axis=-1)

    i2, j2 = np.nonzero(count == 2)
    e2 = edges[i2, j2]
    valid = e2 >= 0
    ea = np.argmax(valid, axis=1)
    eb = 3 - np.argmax(valid[:, ::-1], axis=1)

    i4, j4 = np.nonzero(count == 4)
    if grid.evaluator is not None:
        vc = np.asarray(grid.evaluator(np.stack([(i4 + 0.5) * h, (j4 + 0.5) * h], axis=-1))[0], dtype=np.float64)
    else:
        vc = v[i4, j4] + v[(i4 + 1) % m, j4] + v[i4, (j4 + 1) % m] + v[(i4 + 1) % m, (j4 + 1) % m]
    joined = (vc > 0) == pos[i4, j4]
    # joined: corners (1,0) and (0,1) are cut off -> (bottom,right), (left,top)
    # else:   corners (0,0) and (1,1) are cut off -> (bottom,left), (right,top)
    ci = np.concatenate([i2, i4, i4])
    cj = np.concatenate([j2, j4, j4])
    ea = np.concatenate([ea, np.zeros(i4.size, np.int64), np.where(joined, 3, 1)])
    eb = np.concatenate([eb, np.where(joined, 1, 3), np.full(i4.size, 2, np.int64)])
    ida = edges[ci, cj, ea]
    idb = edges[ci, cj, eb]

    p = _local(ea, t_all[ida])
    q = _local(eb, t_all[idb])
    start = (np.stack([ci, cj], axis=-1) + p) * h
    chord = (q - p) * h
    if linear:
        return SegmentSet(start, chord, np.hypot(chord[:, 0], chord[:, 1]))
    c, a, b = _end_slopes(p, q, g_all[ida], g_all[idb])
    length = h * c * _curved_factor(a, b)
    if grid.evaluator is None:
        return SegmentSet(start, chord, length)
    saddle = np.zeros(ci.size, dtype=bool)
    saddle[i2.size :] = True
    bad = saddle | ~(np.maximum(np.abs(a), np.abs(b)) <= MAX_SLOPE)
    bad = np.nonzero(bad)[0]
    if bad.size == 0:
        return SegmentSet(start, chord, length)
    traced, ok = _trace(grid, start[bad], chord[bad])
    length[bad[ok]] = traced[ok]
    return SegmentSet(start, chord, length, traced=int(ok.sum()), untraced=int((~ok).sum()))


# -- public measurements ----------------------------------------------------


def nodal_length(grid: FieldGrid, method: str = "hermite") -> NodalMeasurement:
    """Total nodal length.

    ``method="linear"`` is plain marching squares (chords between linearly
    interpolated crossings, O(h^2) bias); ``"hermite"`` is the high-order scheme.
    """
    seg = extract_segments(grid, method)
    return NodalMeasurement(
        length=math.fsum(seg.length.tolist()), m=grid.m, segments=len(seg), traced=seg.traced
    )


def _ball_fraction(start, chord, center, s):
    """Fraction of each straight segment lying inside the disk B(center, s) on the torus."""
    rel = start - np.asarray(center, dtype=np.float64)
    rel -= np.round(rel + 0.5 * chord)  # minimum image of the segment midpoint
    A = np.einsum("ij,ij->i", chord, chord)
    B = np.einsum("ij,ij->i", rel, chord)
    C = np.einsum("ij,ij->i", rel, rel) - s * s
    disc = B * B - A * C
    out = np.zeros_like(A)
    ok = (disc > 0) & (A > 0)
    r = np.sqrt(disc[ok])
    t1 = (-B[ok] - r) / A[ok]
    t2 = (-B[ok] + r) / A[ok]
    out[ok] = np.clip(np.minimum(t2, 1.0) - np.maximum(t1, 0.0), 0.0, 1.0)
    return out


def restrict(seg: SegmentSet, center=(0.5, 0.5), s: float = 0.25) -> float:
    """Length of the part of ``seg`` inside the ball B(center, s)."""
    if not 0.0 < s < 0.5:
        raise RadiusOutOfRange(f"radius must lie in (0, 1/2), got {s}")
    frac = _ball_fraction(seg.start, seg.chord, center, s)
    return math.fsum((seg.length * frac).tolist())


def nodal_length_restricted(
    grid: FieldGrid, center=(0.5, 0.5), s: float = 0.25, method: str = "hermite"
) -> NodalMeasurement:
    """Length of the zero set inside the Euclidean ball B(center, s) of the torus."""
    if not 0.0 < s < 0.5:
        raise RadiusOutOfRange(f"radius must lie in (0, 1/2), got {s}")
    seg = extract_segments(grid, method)
    frac = _ball_fraction(seg.start, seg.chord, center, s)
    return NodalMeasurement(
        length=math.fsum((seg.length * frac).tolist()),
        m=grid.m,
        segments=int(np.count_nonzero(frac)),
        traced=seg.traced,
    )


def _triangle_cdf(u, v0, v1, v2):
    """P(linear function <= u) for a uniform point of a triangle with sorted vertex values."""
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = (u - v0) ** 2 / ((v1 - v0) * (v2 - v0))
        upper = 1.0 - (v2 - u) ** 2 / ((v2 - v1) * (v2 - v0))
    return np.select([u <= v0, u >= v2, u <= v1], [0.0, 1.0, lower], upper)


def smoothed_from_grid(grid: FieldGrid, eps: float) -> float:
    """Integral of (2 eps)^-1 1{|T| <= eps} |grad T| for the piecewise-linear interpolant.

    Each cell is split into two triangles on which the interpolant is linear;
    the slab {|T| <= eps} is integrated exactly there.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    m = grid.m
    v00 = grid.values
    v10 = np.roll(v00, -1, axis=0)
    v01 = np.roll(v00, -1, axis=1)
    v11 = np.roll(v10, -1, axis=1)
    total = []
    # lower-right triangle (00, 10, 11) and upper-left (00, 11, 01); gradients in units of m
    for a, b, c, gx, gy in ((v00, v10, v11, v10 - v00, v11 - v10), (v00, v11, v01, v11 - v01, v01 - v00)):
        grad = m * np.hypot(gx, gy)
        srt = np.sort(np.stack([a, b, c]), axis=0)
        frac = _triangle_cdf(eps, *srt) - _triangle_cdf(-eps, *srt)
        total.append(grad * frac)
    area = 0.5 / (m * m)
    return math.fsum((area / (2 * eps) * (total[0] + total[1])).ravel().tolist())


def nodal_length_smoothed(coeffs: WaveCoefficients, eps: float, m: int) -> float:
    method = "spectral" if m > 2 * _ceil_sqrt(coeffs.lattice.n) else "direct"
    return smoothed_from_grid(evaluate_grid(coeffs, m, method, with_hess=False), eps)


def refine_until(coeffs: WaveCoefficients, rel_tol: float = 1e-3, m0: int | None = None) -> NodalMeasurement:
    """Double the grid resolution until successive lengths agree to ``rel_tol``."""
    n = coeffs.lattice.n
    if not 1e-6 < rel_tol < 1e-1:
        raise ValueError("rel_tol must lie in (1e-6, 1e-1)")
    m = m0 if m0 is not None else 8 * _ceil_sqrt(n)
    flagged = m < 8 * _ceil_sqrt(n)
    history: list[tuple[int, float]] = []
    while True:
        if m > MAX_RESOLUTION:
            raise MaxResolutionExceeded(f"no convergence up to m={MAX_RESOLUTION}; history={history}")
        method = "spectral" if m > 2 * _ceil_sqrt(n) else "direct"
        meas = nodal_length(evaluate_grid(coeffs, max(m, 8), method))
        history.append((meas.m, meas.length))
        if len(history) >= 2:
            prev = history[-2][1]
            if abs(meas.length - prev) <= rel_tol * abs(meas.length):
                meas.refinement_history = history
                meas.under_resolved = flagged
                return meas
        m *= 2
