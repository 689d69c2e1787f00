"""Arithmetic random waves: coefficients, pointwise and grid evaluation.

The field is synthesized in real form over the half set,

    T(x) = (2 / sqrt(N)) * sum_{lam in half} Re(a_lam exp(2 pi i <lam, x>)),

which is the full complex sum with a_{-lam} = conj(a_lam). Gradients are
stored normalized to unit variance, i.e. multiplied by (1/2pi) sqrt(2/n).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .errors import ResolutionTooLow
from .lattice import LatticeSet

GRID_MAGIC = b"ARWG"
_HEADER = struct.Struct("<4sIQ")  # magic, m, n -> 16 bytes


@dataclass(frozen=True)
class WaveCoefficients:
    lattice: LatticeSet
    a: np.ndarray  # complex, aligned with lattice.half_points

    def __post_init__(self):
        if self.a.shape != (len(self.lattice.half_points),):
            raise ValueError("one coefficient per half-lattice point is required")

    def as_dict(self) -> dict:
        return dict(zip(self.lattice.half_points, self.a.tolist()))

    @property
    def grad_scale(self) -> float:
        """Factor turning normalized derivatives back into d/dx_j."""
        return 2.0 * math.pi * math.sqrt(self.lattice.n / 2.0)


@dataclass
class FieldGrid:
    """Samples of a field on the periodic grid x_ij = (i/m, j/m).

    ``grad[..., k]`` and ``hess[..., k]`` are derivatives divided by
    ``grad_scale``; hess components are ordered (11, 12, 22). ``evaluator``,
    when present, maps points (..., 2) to exact ``(values, grads)`` with the
    same gradient normalization; nodal extraction uses it to resolve
    ambiguous or under-resolved cells.
    """

    m: int
    values: np.ndarray
    grad: np.ndarray
    n: int = 0
    grad_scale: float = 1.0
    hess: Optional[np.ndarray] = None
    evaluator: Optional[Callable[[np.ndarray], tuple]] = field(default=None, repr=False)

    def at(self, i: int, j: int) -> float:
        return float(self.values[i % self.m, j % self.m])

    def shifted(self, k: int, l: int) -> "FieldGrid":
        """Grid of x -> f(x + (k/m, l/m))."""
        roll = lambda arr: None if arr is None else np.roll(arr, (-k, -l), axis=(0, 1))
        ev = None
        if self.evaluator is not None:
            off = np.array([k / self.m, l / self.m])
            base = self.evaluator
            ev = lambda x: base(np.asarray(x) + off)
        return FieldGrid(self.m, roll(self.values), roll(self.grad), self.n, self.grad_scale, roll(self.hess), ev)

    def to_bytes(self) -> bytes:
        """Binary export: 16-byte header then row-major float64 values."""
        return _HEADER.pack(GRID_MAGIC, self.m, self.n) + np.ascontiguousarray(self.values, dtype="<f8").tobytes()


def read_grid_bytes(buf: bytes) -> tuple[int, int, np.ndarray]:
    magic, m, n = _HEADER.unpack_from(buf)
    if magic != GRID_MAGIC:
        raise ValueError("not a grid file")
    values = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    if values.size != m * m:
        raise ValueError("truncated grid file")
    return m, n, values.reshape(m, m)


def sample_coefficients(ls: LatticeSet, rng: np.random.Generator) -> WaveCoefficients:
    """Independent complex Gaussians with real and imaginary variance 1/2."""
    k = len(ls.half_points)
    z = rng.standard_normal((2, k))
    return WaveCoefficients(ls, (z[0] + 1j * z[1]) / math.sqrt(2.0))


def _norm(coeffs: WaveCoefficients) -> float:
    return 2.0 / math.sqrt(coeffs.lattice.cardinality)


def evaluate_points(coeffs: WaveCoefficients, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and normalized gradients at an array of points of shape (..., 2)."""
    x = np.asarray(x, dtype=np.float64)
    lam = coeffs.lattice.half_array().astype(np.float64)
    e = np.exp(2j * math.pi * (x @ lam.T)) * coeffs.a  # (..., k)
    c = _norm(coeffs)
    value = c * e.real.sum(axis=-1)
    # d/dx_j Re(a e) = Re(2 pi i lam_j a e); normalized by (1/2pi) sqrt(2/n)
    g = c * math.sqrt(2.0 / coeffs.lattice.n) * (1j * e @ lam).real
    return value, g


def evaluate(coeffs: WaveCoefficients, x) -> tuple[float, tuple[float, float]]:
    value, g = evaluate_points(coeffs, np.asarray(x, dtype=np.float64).reshape(1, 2))
    return float(value[0]), (float(g[0, 0]), float(g[0, 1]))


def _direct(coeffs: WaveCoefficients, m: int, with_hess: bool):
    lam = coeffs.lattice.half_array()
    t = np.arange(m) / m
    e1 = np.exp(2j * math.pi * np.outer(lam[:, 0], t))  # (k, m)
    e2 = np.exp(2j * math.pi * np.outer(lam[:, 1], t))
    c = _norm(coeffs)
    s = math.sqrt(2.0 / coeffs.lattice.n)
    l1, l2 = lam[:, 0].astype(float), lam[:, 1].astype(float)

    def synth(weights):
        return c * ((weights[:, None] * e1).T @ e2).real

    a = coeffs.a
    values = synth(a)
    grad = np.stack([s * synth(1j * l1 * a), s * synth(1j * l2 * a)], axis=-1)
    hess = None
    if with_hess:
        # second derivatives divided by grad_scale: (2 pi i)^2 l_j l_k / (2 pi sqrt(n/2))
        f = 2.0 * math.pi * s
        hess = np.stack([-f * synth(l1 * l1 * a), -f * synth(l1 * l2 * a), -f * synth(l2 * l2 * a)], axis=-1)
    return values, grad, hess


def _spectral(coeffs: WaveCoefficients, m: int, with_hess: bool):
    """Inverse FFT synthesis; two real fields per complex transform.

    For a Hermitian spectrum the inverse transform is real, so
    ifft2(A + iB) = f + i g splits into the two fields f and g.
    """
    lam = coeffs.lattice.half_array()
    l1, l2 = lam[:, 0].astype(float), lam[:, 1].astype(float)
    i1p, i2p = lam[:, 0] % m, lam[:, 1] % m
    i1n, i2n = (-lam[:, 0]) % m, (-lam[:, 1]) % m
    c = _norm(coeffs) / 2.0  # full-lattice sum (1/sqrt N) sum a e
    s = math.sqrt(2.0 / coeffs.lattice.n)
    a = coeffs.a

    def spectrum(w):
        spec = np.zeros((m, m), dtype=np.complex128)
        np.add.at(spec, (i1p, i2p), w)
        np.add.at(spec, (i1n, i2n), np.conj(w))
        return spec

    def pair(wf, wg):
        z = np.fft.ifft2(spectrum(wf) + 1j * spectrum(wg)) * (m * m * c)
        return z.real, z.imag

    f = 2.0 * math.pi * s
    values, g1 = pair(a, s * 1j * l1 * a)
    g2, h11 = pair(s * 1j * l2 * a, -f * l1 * l1 * a)
    grad = np.stack([g1, g2], axis=-1)
    hess = None
    if with_hess:
        h12, h22 = pair(-f * l1 * l2 * a, -f * l2 * l2 * a)
        hess = np.stack([h11, h12, h22], axis=-1)
    return values, grad, hess


def _ceil_sqrt(n: int) -> int:
    r = math.isqrt(n)
    return r if r * r == n else r + 1


def evaluate_grid(coeffs: WaveCoefficients, m: int, method: str = "spectral", with_hess: bool = True) -> FieldGrid:
    if m < 8:
        raise ValueError("grid resolution must be at least 8")
    if method == "spectral":
        if m <= 2 * _ceil_sqrt(coeffs.lattice.n):
            raise ResolutionTooLow(f"spectral synthesis needs m > 2*ceil(sqrt(n)), got m={m}")
        values, grad, hess = _spectral(coeffs, m, with_hess)
    elif method == "direct":
        values, grad, hess = _direct(coeffs, m, with_hess)
    else:
        raise ValueError(f"unknown method {method!r}")
    return FieldGrid(
        m=m,
        values=values,
        grad=grad,
        n=coeffs.lattice.n,
        grad_scale=coeffs.grad_scale,
        hess=hess,
        evaluator=lambda x: evaluate_points(coeffs, x),
    )


def grid_from_function(
    f: Callable, m: int, grad: Callable, hess: Optional[Callable] = None, n: int = 0
) -> FieldGrid:
    """Sample a deterministic periodic field; ``grad``/``hess`` give plain d/dx derivatives."""
    t = np.arange(m) / m
    x1, x2 = np.meshgrid(t, t, indexing="ij")
    g = np.stack(grad(x1, x2), axis=-1)
    h = None if hess is None else np.stack(hess(x1, x2), axis=-1)
    def ev(x):
        x = np.asarray(x, dtype=np.float64)
        return f(x[..., 0], x[..., 1]), np.stack(grad(x[..., 0], x[..., 1]), axis=-1)

    return FieldGrid(m=m, values=f(x1, x2), grad=g, n=n, grad_scale=1.0, hess=h, evaluator=ev)


def covariance(ls: LatticeSet, x) -> float:
    """r_n(x) = (1/N) sum over the full lattice of cos(2 pi <x, lam>)."""
    x = np.asarray(x, dtype=np.float64)
    lam = np.array(ls.points, dtype=np.float64)
    return float(np.cos(2.0 * math.pi * (lam @ x)).sum() / ls.cardinality)


def gradient_variance_check(ls: LatticeSet) -> Fraction:
    """Var of a partial derivative divided by 4 pi^2, exactly: (1/N) sum lam_1^2 = n/2."""
    s = sum(a * a for a, _ in ls.points)
    if 2 * s != ls.n * ls.cardinality:
        raise AssertionError("lattice second-moment identity failed")
    return Fraction(s, ls.cardinality)
