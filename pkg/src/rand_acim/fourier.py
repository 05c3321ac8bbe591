r"""Fourier--Galerkin discretisation of fiber transfer operators.

Coefficient vectors are indexed by mode ``m = -K..K`` at position ``m + K`` and
represent ``f(x) = sum_m c_m exp(2 pi i m x)``.  Galerkin matrices act on
**column** vectors: ``c_out = A @ c``, with

.. math::  A_{m,m'} = \int_0^1 e^{-2\pi i m T(x)} e^{2\pi i m' x}\,dx,

the matrix of :math:`\langle \phi_m, \mathcal{L}\phi_{m'}\rangle` written through
duality so that no inverse branches are needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ulam import write_xy_csv

__all__ = [
    "QuadratureFailure",
    "AlreadyWeighted",
    "FourierDensity",
    "GalerkinMatrix",
    "Kernel",
    "galerkin_matrix",
    "cesaro_weighting",
    "cesaro_average_explicit",
    "truncate",
    "fejer_multiplier",
    "fejer_kernel",
    "dirac_multiplier",
    "uniform_noise_multiplier",
    "convolve",
    "convolve_samples",
    "evaluate_density",
]

GL_ORDER = 16
DEFAULT_TOL = 1e-9
MAX_PANELS = 2**16


class QuadratureFailure(RuntimeError):
    """Adaptive subdivision budget exhausted before the tolerance was met."""


class AlreadyWeighted(ValueError):
    """Cesaro weighting applied twice."""


def _modes(K):
    return np.arange(-K, K + 1)


@dataclass(frozen=True)
class FourierDensity:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 1 or c.shape[0] % 2 == 0:
            raise ValueError("coefficient vector must have odd length 2K+1")
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self):
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def integral(self):
        return float(self.coeffs[self.K].real)

    @classmethod
    def lebesgue(cls, K):
        c = np.zeros(2 * K + 1, dtype=complex)
        c[K] = 1.0
        return cls(c)

    @classmethod
    def from_samples(cls, samples, K):
        """Coefficients ``|m| <= K`` of midpoint samples by the discrete transform."""
        samples = np.asarray(samples, dtype=float)
        n = samples.shape[0]
        if n < 2 * K + 1:
            raise ValueError("need at least 2K+1 samples")
        F = np.fft.fft(samples) / n
        m = _modes(K)
        return cls(F[np.mod(m, n)] * np.exp(-1j * np.pi * m / n))

    def hermitian_error(self):
        return float(np.max(np.abs(self.coeffs - np.conj(self.coeffs[::-1]))))

    def evaluate(self, n):
        return evaluate_density(self, n)

    def bin_averages(self, k):
        """Exact averages over ``k`` uniform bins."""
        m = _modes(self.K)
        return _evaluate_coeffs(self.coeffs * np.sinc(m / k), k).real

    def to_csv(self, path):
        lines = ["m,real,imag"]
        lines.extend(
            f"{m},{c.real:.17g},{c.imag:.17g}" for m, c in zip(_modes(self.K), self.coeffs)
        )
        Path(path).write_text("\n".join(lines) + "\n")

    def samples_to_csv(self, path, n=4096):
        x = (np.arange(n) + 0.5) / n
        write_xy_csv(path, x, evaluate_density(self, n))


def _evaluate_coeffs(coeffs, n):
    K = (coeffs.shape[0] - 1) // 2
    m = _modes(K)
    folded = np.zeros(n, dtype=complex)
    # midpoint shift applied before folding modes onto the n-point grid
    np.add.at(folded, np.mod(m, n), coeffs * np.exp(1j * np.pi * m / n))
    return np.fft.ifft(folded) * n


def evaluate_density(f, n):
    """Real samples of ``f`` at midpoints ``(l + 1/2) / n``.

    Negative values are returned as-is (Galerkin densities need not be positive).
    """
    if n < 1:
        raise ValueError("need n >= 1")
    vals = _evaluate_coeffs(f.coeffs, n)
    return vals.real


@dataclass(frozen=True)
class GalerkinMatrix:
    entries: np.ndarray
    weighting: str = "none"
    fiber: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def K(self):
        return (self.entries.shape[0] - 1) // 2

    def apply(self, c):
        return self.entries @ np.asarray(c)

    def to_csv(self, path):
        """Rows of interleaved real and imaginary parts."""
        lines = []
        for row in self.entries:
            lines.append(",".join(f"{v.real:.17g},{v.imag:.17g}" for v in row))
        Path(path).write_text("\n".join(lines) + "\n")


def _panel_nodes(a, b, order):
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes, weights


def _branch_panels(br, K, tol, order=GL_ORDER):
    """Adaptive panel integration of one branch; returns the (K+1) x (2K+1) block."""
    grid = br.grid(257)
    slope = float(np.max(np.abs(br.derivs(grid))))
    width = br.length
    # start with about one oscillation of the fastest integrand per panel
    n0 = max(1, math.ceil(width * K * (slope + 1.0) / 1.0))
    edges = br.start + width * np.arange(n0 + 1) / n0
    pending = list(zip(edges[:-1], edges[1:]))
    m_rows = np.arange(K + 1)
    m_cols = _modes(K)
    block = np.zeros((K + 1, 2 * K + 1), dtype=complex)
    n_panels = 0

    def contributions(a, b):
        nodes, weights = _panel_nodes(a, b, order)
        z = np.exp(-2j * np.pi * br.values(nodes))  # (P, order)
        G = z[:, None, :] ** m_rows[None, :, None]
        E = np.exp(2j * np.pi * m_cols[None, :, None] * nodes[:, None, :])
        return np.matmul(G * weights[:, None, :], E.transpose(0, 2, 1))

    while pending:
        batch = np.array(pending[:64])
        pending = pending[64:]
        a, b = batch[:, 0], batch[:, 1]
        mid = 0.5 * (a + b)
        coarse = contributions(a, b)
        fine = contributions(a, mid) + contributions(mid, b)
        err = np.max(np.abs(coarse - fine), axis=(1, 2))
        n_panels += len(batch)
        ok = err <= tol * (b - a)
        block += fine[ok].sum(axis=0)
        for lo, md, hi in zip(a[~ok], mid[~ok], b[~ok]):
            pending.extend([(lo, md), (md, hi)])
        if n_panels + len(pending) > MAX_PANELS:
            raise QuadratureFailure(
                f"quadrature budget of {MAX_PANELS} panels exhausted on branch "
                f"[{br.start}, {br.end})"
            )
    return block, n_panels


def galerkin_matrix(tmap, K, tol=DEFAULT_TOL, fiber=None):
    """Unweighted Galerkin matrix of ``tmap`` on modes ``|m| <= K``.

    Each branch is integrated separately by adaptive Gauss--Legendre panels with
    an embedded error estimate (panel versus its two halves); a panel is accepted
    when the largest entrywise discrepancy is below ``tol`` times its width, so
    every entry carries an absolute error of about ``tol``.
    """
    if K < 1 or not tol > 0:
        raise ValueError("need K >= 1 and tol > 0")
    upper = np.zeros((K + 1, 2 * K + 1), dtype=complex)
    total_panels = 0
    for br in tmap.branches:
        block, n = _branch_panels(br, K, tol)
        upper += block
        total_panels += n
    A = np.empty((2 * K + 1, 2 * K + 1), dtype=complex)
    A[K:, :] = upper
    # real map: A[-m, -m'] = conj(A[m, m'])
    A[:K, :] = np.conj(upper[1:, ::-1][::-1, :])
    return GalerkinMatrix(A, "none", fiber, {"panels": total_panels, "tol": tol})


def truncate(A, j):
    """``P_j A P_j``: zero every row and column with ``|m| > j``."""
    K = A.K
    keep = np.abs(_modes(K)) <= j
    out = np.where(keep[:, None] & keep[None, :], A.entries, 0.0)
    return GalerkinMatrix(out, A.weighting, A.fiber, dict(A.meta))


def cesaro_weighting(A):
    """Multiply entry ``(m, m')`` by ``max(0, 1 - max(|m|, |m'|) / K)``.

    This equals the average ``(1/K) sum_{j<K} P_j A P_j`` of the Galerkin
    matrices truncated to the first ``j`` modes.
    """
    if A.weighting != "none":
        raise AlreadyWeighted(f"matrix already carries {A.weighting!r} weighting")
    K = A.K
    m = np.abs(_modes(K))
    w = np.maximum(0.0, 1.0 - np.maximum(m[:, None], m[None, :]) / K)
    return GalerkinMatrix(A.entries * w, "cesaro", A.fiber, dict(A.meta))


def cesaro_average_explicit(A):
    """Literal average of truncated matrices; oracle for :func:`cesaro_weighting`."""
    K = A.K
    total = np.zeros_like(A.entries)
    for j in range(K):
        total = total + truncate(A, j).entries
    return GalerkinMatrix(total / K, "cesaro", A.fiber, dict(A.meta))


@dataclass(frozen=True)
class Kernel:
    """Convolution kernel given by its Fourier multiplier on ``|m| <= K``."""

    multiplier: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        w = np.asarray(self.multiplier, dtype=float)
        if w.ndim != 1 or w.shape[0] % 2 == 0:
            raise ValueError("multiplier must have odd length 2K+1")
        object.__setattr__(self, "multiplier", w)

    @property
    def K(self):
        return (self.multiplier.shape[0] - 1) // 2

    def weight(self, m):
        """Multiplier at integer modes ``m``; zero beyond the stored range."""
        m = np.asarray(m)
        inside = np.abs(m) <= self.K
        out = np.zeros(m.shape, dtype=float)
        out[inside] = self.multiplier[m[inside] + self.K]
        return out


def fejer_multiplier(K):
    """Fejer kernel of order ``K``: weights ``max(0, 1 - |m| / K)``."""
    if K < 1:
        raise ValueError("need K >= 1")
    m = _modes(K)
    return Kernel(np.maximum(0.0, 1.0 - np.abs(m) / K), name=f"fejer-{K}")


def fejer_kernel(K, x):
    """Closed form ``sin^2(pi K x) / (K sin^2(pi x))`` with the removable value ``K`` at 0."""
    x = np.asarray(x, dtype=float)
    s = np.sin(np.pi * x)
    safe = np.abs(s) > 1e-15
    out = np.full(x.shape, float(K))
    out[safe] = np.sin(np.pi * K * x[safe]) ** 2 / (K * s[safe] ** 2)
    return out


def dirac_multiplier(K):
    return Kernel(np.ones(2 * K + 1), name="dirac")


def uniform_noise_multiplier(K, eps):
    """Uniform noise on ``[-eps, eps]``: weights ``sinc(2 eps m)``."""
    m = _modes(K)
    return Kernel(np.sinc(2.0 * eps * m), name=f"uniform-{eps}")


def convolve(kernel, f):
    """Convolve a Fourier density with ``kernel`` (``c_m -> w(m) c_m``)."""
    return FourierDensity(f.coeffs * kernel.weight(_modes(f.K)))


def convolve_samples(kernel, samples):
    """Convolve midpoint samples on the circle with ``kernel`` via the DFT."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    m = np.round(np.fft.fftfreq(n, 1.0 / n)).astype(int)
    if n % 2 == 0:
        # Nyquist mode is shared by +-n/2
        m[n // 2] = n // 2
    w = kernel.weight(m)
    if n % 2 == 0 and kernel.K >= n // 2:
        w[n // 2] = 0.5 * (kernel.weight(np.array([n // 2]))[0] + kernel.weight(np.array([-n // 2]))[0])
    return np.fft.ifft(np.fft.fft(samples) * w).real
