import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arwave import nodal
from arwave.errors import DegenerateField, MaxResolutionExceeded, RadiusOutOfRange
from arwave.lattice import decompose
from arwave.rng import substream
from arwave.wavefield import evaluate_grid, grid_from_function, sample_coefficients

TAU = 2 * math.pi


def plane_wave(p, q, phase, m):
    """cos(2 pi (p x1 + q x2) + phase): zero set is 2 closed geodesics of total length 2 |(p, q)|."""
    f = lambda x1, x2: np.cos(TAU * (p * x1 + q * x2) + phase)
    g = lambda x1, x2: (-TAU * p * np.sin(TAU * (p * x1 + q * x2) + phase), -TAU * q * np.sin(TAU * (p * x1 + q * x2) + phase))
    h = lambda x1, x2: tuple(-TAU**2 * c * np.cos(TAU * (p * x1 + q * x2) + phase) for c in (p * p, p * q, q * q))
    return grid_from_function(f, m, g, h)


def egg_crate(m):
    f = lambda x1, x2: np.cos(TAU * x1) + np.cos(TAU * x2)
    g = lambda x1, x2: (-TAU * np.sin(TAU * x1), -TAU * np.sin(TAU * x2))
    h = lambda x1, x2: (-TAU**2 * np.cos(TAU * x1), 0 * x1, -TAU**2 * np.cos(TAU * x2))
    return grid_from_function(f, m, g, h)


def wave_grid(n, m, index=0, seed=0):
    co = sample_coefficients(decompose(n), substream(seed, index))
    return co, evaluate_grid(co, m)


@pytest.mark.parametrize("m", [32, 64, 256])
def test_vertical_lines(m):
    g = plane_wave(1, 0, 0.0, m)
    assert nodal.nodal_length(g).length == pytest.approx(2.0, abs=1e-12)
    assert nodal.nodal_length(g, "linear").length == pytest.approx(2.0, abs=1e-12)


def test_lines_through_saddles():
    # zero set: the two diagonals x1 +- x2 = 1/2, crossing at saddle points
    g = egg_crate(256)
    assert nodal.nodal_length(g).length == pytest.approx(2 * math.sqrt(2), rel=2e-3)
    assert nodal.nodal_length(g, "linear").length == pytest.approx(2 * math.sqrt(2), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(
    st.integers(-3, 3),
    st.integers(-3, 3),
    st.floats(0.01, TAU - 0.01),
)
def test_plane_wave_length(p, q, phase):
    if p == 0 and q == 0:
        return
    m = 96
    if phase in (0.5 * math.pi, 1.5 * math.pi):
        return
    length = nodal.nodal_length(plane_wave(p, q, phase, m)).length
    assert length == pytest.approx(2 * math.hypot(p, q), rel=1e-4)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.45), st.floats(0.0, 1.0))
def test_restricted_lines_equal_chords(c, s, y):
    # cos(2 pi (x1 - c) ) vanishes on x1 = c +- 1/4; chord of the ball at distance d is 2 sqrt(s^2 - d^2)
    phase = -TAU * c
    g = plane_wave(1, 0, phase, 64)
    center = (0.5, y)
    expected = 0.0
    for line in (c + 0.25, c - 0.25):
        d = abs((line - 0.5 + 0.5) % 1.0 - 0.5)
        if d < s:
            expected += 2 * math.sqrt(s * s - d * d)
    got = nodal.nodal_length_restricted(g, center, s).length
    assert got == pytest.approx(expected, abs=1e-6)


def test_restricted_examples():
    g = plane_wave(1, 0, 0.0, 64)
    assert nodal.nodal_length_restricted(g, (0.25, 0.0), 0.1).length == pytest.approx(0.2, abs=1e-12)
    assert nodal.nodal_length_restricted(g, (0.0, 0.0), 0.2).length == 0.0


@pytest.mark.parametrize("s", [0.0, 0.5, -0.1, 0.7])
def test_radius_out_of_range(s):
    with pytest.raises(RadiusOutOfRange):
        nodal.nodal_length_restricted(plane_wave(1, 0, 0.0, 32), (0.5, 0.5), s)


def test_degenerate_field():
    zero = grid_from_function(lambda a, b: 0 * a, 32, lambda a, b: (0 * a, 0 * b))
    with pytest.raises(DegenerateField):
        nodal.nodal_length(zero)
    # sin(2 pi x1) vanishes exactly on the column x1 = 0: 1/16 of the nodes
    with pytest.raises(DegenerateField):
        nodal.nodal_length(grid_from_function(lambda a, b: np.sin(TAU * a), 16, lambda a, b: (TAU * np.cos(TAU * a), 0 * b)))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.45), st.floats(0, 1), st.floats(0, 1))
def test_restricted_bounded_by_total(index, s, cx, cy):
    _, g = wave_grid(25, 64, index)
    seg = nodal.extract_segments(g)
    total = math.fsum(seg.length.tolist())
    r = nodal.restrict(seg, (cx, cy), s)
    assert 0.0 <= r <= total + 1e-12
    assert nodal.restrict(seg, (cx, cy), s * 0.9) <= r + 1e-12


def test_restricted_balls_average_to_area_fraction():
    # balls centered on a fine lattice cover the torus uniformly
    _, g = wave_grid(65, 128)
    seg = nodal.extract_segments(g)
    total = math.fsum(seg.length.tolist())
    s = 0.2
    k = 12
    vals = [nodal.restrict(seg, ((i + 0.5) / k, (j + 0.5) / k), s) for i in range(k) for j in range(k)]
    assert np.mean(vals) == pytest.approx(math.pi * s * s * total, rel=0.02)


def test_shift_invariance():
    _, g = wave_grid(65, 128, 4)
    base = nodal.nodal_length(g).length
    for k, l in [(1, 0), (7, 31), (64, 64)]:
        assert nodal.nodal_length(g.shifted(k, l)).length == pytest.approx(base, rel=1e-9)


def test_hermite_converges_faster_than_linear():
    co, g = wave_grid(65, 96, 2)
    ref = nodal.nodal_length(evaluate_grid(co, 768)).length
    herm = nodal.nodal_length(g).length
    lin = nodal.nodal_length(g, "linear").length
    lin_fine = nodal.nodal_length(evaluate_grid(co, 768), "linear").length
    assert abs(herm - ref) < abs(lin - ref)
    assert abs(herm - ref) < 2e-3 * ref
    assert abs(lin_fine - ref) < abs(lin - ref)


def test_segments_are_short_and_counted():
    _, g = wave_grid(25, 64)
    seg = nodal.extract_segments(g)
    meas = nodal.nodal_length(g)
    assert len(seg) == meas.segments > 0
    assert np.all(np.hypot(*seg.chord.T) <= math.sqrt(2) / 64 + 1e-12)
    assert np.all(seg.length >= np.hypot(*seg.chord.T) - 1e-12)


def test_smoothed_length():
    g = plane_wave(1, 0, 0.3, 1024)
    assert nodal.smoothed_from_grid(g, 1e-3) == pytest.approx(2.0, rel=1e-3)
    co, g = wave_grid(25, 512)
    exact = nodal.nodal_length(g).length
    assert nodal.nodal_length_smoothed(co, 0.01, 512) == pytest.approx(exact, rel=0.01)
    with pytest.raises(ValueError):
        nodal.smoothed_from_grid(g, 0.0)


def test_refine_until():
    co, _ = wave_grid(5, 32)
    meas = nodal.refine_until(co, 1e-4, m0=16)
    ms = [m for m, _ in meas.refinement_history]
    assert ms == [16 * 2**k for k in range(len(ms))]
    assert meas.under_resolved is True
    assert abs(meas.refinement_history[-1][1] - meas.refinement_history[-2][1]) <= 1e-4 * meas.length
    assert nodal.refine_until(co, 1e-3).under_resolved is False


def test_refine_until_gives_up(monkeypatch):
    monkeypatch.setattr(nodal, "MAX_RESOLUTION", 64)
    co, _ = wave_grid(65, 64)
    with pytest.raises(MaxResolutionExceeded) as info:
        nodal.refine_until(co, 2e-6)
    assert info.value.code == "max_resolution_exceeded"


def test_default_resolution():
    assert nodal.default_resolution(5) == 256
    assert nodal.default_resolution(32045) == 8 * 180
