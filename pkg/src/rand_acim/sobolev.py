"""Grid norms: L^p, variation, Strichartz-type fractional Sobolev norms, smoothing.

Grid functions are midpoint samples on ``[0, 1)``, read as step functions.
Outside ``[0, 1)`` they are either zero (``extension="zero"``) or periodic
(``extension="circle"``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .fourier import FourierDensity

__all__ = [
    "GridFunction",
    "SobolevParams",
    "lp_norm",
    "bv_variation",
    "bv_norm",
    "strichartz_St",
    "hpt_norm",
    "weak_norm",
    "dt_operator",
    "smooth_approx",
    "c2_norm",
    "c2_bound_constant",
    "loglog_slope",
    "TEST_FUNCTIONS",
    "projection_ratio_study",
    "smoothing_rate_study",
    "projection_error_study",
]

N_Y = 64
N_R = 128


@dataclass(frozen=True)
class GridFunction:
    samples: np.ndarray
    extension: str = "zero"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.shape[0] < 2:
            raise ValueError("need at least two samples")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        if self.extension not in ("zero", "circle"):
            raise ValueError(f"unknown extension {self.extension!r}")
        object.__setattr__(self, "samples", s)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def x(self):
        return (np.arange(self.n) + 0.5) / self.n

    @classmethod
    def from_callable(cls, f, n, extension="zero"):
        return cls(f((np.arange(n) + 0.5) / n), extension)

    def at(self, z):
        """Step-function value at arbitrary real points ``z``."""
        cell = np.floor(np.asarray(z) * self.n).astype(np.int64)
        if self.extension == "circle":
            return self.samples[np.mod(cell, self.n)]
        inside = (cell >= 0) & (cell < self.n)
        return np.where(inside, self.samples[np.clip(cell, 0, self.n - 1)], 0.0)

    def with_samples(self, samples):
        return GridFunction(samples, self.extension)

    def __add__(self, other):
        return self.with_samples(self.samples + _samples(other))

    def __sub__(self, other):
        return self.with_samples(self.samples - _samples(other))

    def __mul__(self, scalar):
        return self.with_samples(self.samples * float(scalar))

    __rmul__ = __mul__


def _samples(f):
    return f.samples if isinstance(f, GridFunction) else np.asarray(f, dtype=float)


@dataclass(frozen=True)
class SobolevParams:
    """Integrability ``p`` and smoothness pair ``0 < t_weak < t < 1/p``."""

    p: float = 2.0
    t: float = 0.4
    t_weak: float = 0.2

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not 0 < self.t < 1.0 / self.p:
            raise ValueError("need 0 < t < 1/p")
        if not 0 < self.t_weak < self.t:
            raise ValueError("need 0 < t_weak < t")


def lp_norm(f, p):
    if p < 1:
        raise ValueError("p must be at least 1")
    s = _samples(f)
    return float(np.mean(np.abs(s) ** p) ** (1.0 / p))


def bv_variation(f):
    """Total variation of the samples (wrap-around jump included on the circle)."""
    s = _samples(f)
    var = float(np.sum(np.abs(np.diff(s))))
    if getattr(f, "extension", "zero") == "circle":
        var += abs(s[0] - s[-1])
    return var


def bv_norm(f):
    return bv_variation(f) + lp_norm(f, 1)


def strichartz_St(f, t, r_min=None, r_max=4.0, n_r=N_R, n_y=N_Y):
    r"""Square function of averaged increments.

    .. math::  S_t f(x) = \Big(\int_0^\infty \frac{dr}{r^{1+2t}}
               \Big(\int_{-1}^{1} |f(x+ry) - f(x)|\,dy\Big)^2\Big)^{1/2}

    with the ``r`` integral truncated to ``[r_min, r_max]`` (trapezoid rule in
    ``log r`` on ``n_r`` points) and the inner integral by an ``n_y``-point
    midpoint rule.
    """
    if not 0 < t < 1:
        raise ValueError("need 0 < t < 1")
    if r_min is None:
        r_min = 1.0 / (4 * f.n)
    if not r_min < r_max:
        raise ValueError("need r_min < r_max")
    log_r = np.linspace(np.log(r_min), np.log(r_max), n_r)
    r = np.exp(log_r)
    w = np.full(n_r, log_r[1] - log_r[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    y = -1.0 + (np.arange(n_y) + 0.5) * (2.0 / n_y)
    x = f.x
    fx = f.samples
    acc = np.zeros(f.n)
    for rl, wl in zip(r, w):
        inner = np.abs(f.at(x[None, :] + rl * y[:, None]) - fx).sum(axis=0) * (2.0 / n_y)
        # dr = r dlog r
        acc += wl * rl ** (-2.0 * t) * inner**2
    return f.with_samples(np.sqrt(acc))


def hpt_norm(f, params=SobolevParams(), t=None, **kw):
    """``||f||_p + ||S_t f||_p``; ``t`` defaults to ``params.t``."""
    t = params.t if t is None else t
    if not np.any(f.samples):
        return 0.0
    return lp_norm(f, params.p) + lp_norm(strichartz_St(f, t, **kw), params.p)


def weak_norm(f, params=SobolevParams(), **kw):
    """The same norm at the weaker smoothness ``params.t_weak``."""
    return hpt_norm(f, params, t=params.t_weak, **kw)


def dt_operator(f, t, eps_min=None, reach=2.0):
    """Symmetric principal-value sum ``sum_{|y| >= eps} (f(x+y) - f(x)) / |y|^{1+t} dy``.

    ``y`` runs over multiples of the grid spacing up to ``reach``; the remaining
    tail is added in closed form (exact for zero extension, mean-corrected for
    the circle).
    """
    if not 0 < t < 1:
        raise ValueError("need 0 < t < 1")
    n = f.n
    h = 1.0 / n
    if eps_min is None:
        eps_min = h
    if not 0 < eps_min <= h * (1 + 1e-12):
        raise ValueError("eps_min must lie in (0, 1/n]")
    L = int(round(reach * n))
    lags = np.arange(-L, L + 1)
    ylag = np.abs(lags) * h
    kern = np.zeros(lags.shape)
    nz = ylag >= eps_min * (1 - 1e-12)
    kern[nz] = h / ylag[nz] ** (1.0 + t)
    total = float(kern.sum())
    s = f.samples
    if f.extension == "circle":
        reps = int(np.ceil(reach)) + 1
        padded = np.tile(s, 2 * reps + 1)
        conv = fftconvolve(padded, kern[::-1], mode="same")
        shifted = conv[reps * n : (reps + 1) * n]
        tail = -2.0 * (s - s.mean()) * reach ** (-t) / t
    else:
        shifted = fftconvolve(s, kern[::-1], mode="full")[L : L + n]
        tail = -2.0 * s * reach ** (-t) / t
    return f.with_samples(shifted - total * s + tail)


def _damping(j, eps):
    return np.exp(-eps * (1.0 + (2.0 * np.pi * j) ** 2))


def smooth_approx(f, eps):
    """Heat-type smoothing: mode ``j`` is damped by ``exp(-eps (1 + (2 pi j)^2))``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if isinstance(f, FourierDensity):
        j = np.arange(-f.K, f.K + 1)
        return FourierDensity(f.coeffs * _damping(j, eps))
    n = f.n
    j = np.fft.fftfreq(n, 1.0 / n)
    out = np.fft.ifft(np.fft.fft(f.samples) * _damping(j, eps)).real
    return f.with_samples(out)


def c2_norm(f):
    """``sup|f| + sup|f'| + sup|f''|`` of the trigonometric interpolant of the samples."""
    n = f.n
    j = np.fft.fftfreq(n, 1.0 / n)
    F = np.fft.fft(f.samples)
    if n % 2 == 0:
        F[n // 2] = 0.0
    d1 = np.fft.ifft(F * (2j * np.pi * j)).real
    d2 = np.fft.ifft(F * (2j * np.pi * j) ** 2).real
    return float(np.max(np.abs(f.samples)) + np.max(np.abs(d1)) + np.max(np.abs(d2)))


def c2_bound_constant(eps, j_max=None):
    """``sum_j exp(-eps (1 + (2 pi j)^2)) (1 + 2 pi |j| + (2 pi j)^2)``.

    Multiplies ``||f||_1`` to bound the C^2 norm of the smoothed function.
    """
    if j_max is None:
        j_max = int(np.ceil(10.0 / (2 * np.pi * np.sqrt(eps)))) + 10
    j = np.arange(-j_max, j_max + 1)
    a = 2 * np.pi * np.abs(j)
    return float(np.sum(_damping(j, eps) * (1.0 + a + a**2)))


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x)), np.log(np.asarray(y)), 1)[0])


# ---------------------------------------------------------------------------
# norm studies on standard test functions

TEST_FUNCTIONS = {
    "sin": lambda x: np.sin(2 * np.pi * x),
    "step": lambda x: (x < 0.5).astype(float),
    "abs-sin": lambda x: np.abs(np.sin(2 * np.pi * x)),
    "parabola": lambda x: x * (1.0 - x),
    "cusp": lambda x: np.abs(x - 0.5) ** 0.6,
}


def _bin_projection(g, k):
    from .ulam import conditional_expectation, expand_bins

    return g.with_samples(expand_bins(conditional_expectation(g.samples, k), g.n))


def projection_ratio_study(ks, n=4096, params=SobolevParams(), functions=None):
    """Ratios ``hpt_norm(E_k f) / hpt_norm(f)`` for each test function and bin count.

    Returns ``{name: [ratio for k in ks]}``.
    """
    functions = TEST_FUNCTIONS if functions is None else functions
    out = {}
    for name, fn in functions.items():
        f = GridFunction.from_callable(fn, n)
        base = hpt_norm(f, params)
        out[name] = [hpt_norm(_bin_projection(f, k), params) / base for k in ks]
    return out


def smoothing_rate_study(eps_list, n=4096, params=SobolevParams(), fn=TEST_FUNCTIONS["step"]):
    """Weak-norm errors ``||f_eps - f||`` and their log-log slope against ``eps``."""
    f = GridFunction.from_callable(fn, n)
    errs = [weak_norm(smooth_approx(f, e) - f, params) for e in eps_list]
    return errs, loglog_slope(eps_list, errs)


def projection_error_study(ks, n=4096, params=SobolevParams(), fn=TEST_FUNCTIONS["abs-sin"]):
    """Weak-norm errors ``||E_k g - g||`` and their log-log slope against ``1/k``."""
    g = GridFunction.from_callable(fn, n)
    errs = [weak_norm(_bin_projection(g, k) - g, params) for k in ks]
    return errs, loglog_slope(1.0 / np.asarray(ks, dtype=float), errs)
