"""Base dynamics driving the random maps.

Any base used by :mod:`rand_acim.cocycle` only needs an ``orbit(n)`` method
returning the first ``n`` fiber parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

__all__ = ["DEFAULT_ALPHA", "RotationBase", "SequenceBase", "advance", "orbit", "load_orbit_file"]

DEFAULT_ALPHA = 0.5 * math.sqrt(2.0)


def _frac(value: Fraction) -> float:
    out = float(value - math.floor(value))
    return 0.0 if out >= 1.0 else out


@dataclass(frozen=True)
class RotationBase:
    """Rigid rotation ``omega -> omega + alpha (mod 1)`` of the unit circle."""

    alpha: float = DEFAULT_ALPHA
    omega0: float = 0.0

    def advance(self, omega: float, n: int) -> float:
        # exact rational arithmetic on the stored doubles, one rounding at the end
        return _frac(Fraction(float(omega)) + int(n) * Fraction(float(self.alpha)))

    def orbit(self, n: int, omega0: float | None = None) -> np.ndarray:
        if n < 1:
            raise ValueError("orbit length must be at least 1")
        start = Fraction(float(self.omega0 if omega0 is None else omega0))
        alpha = Fraction(float(self.alpha))
        return np.array([_frac(start + j * alpha) for j in range(n)])


@dataclass(frozen=True)
class SequenceBase:
    """Base given by an explicit list of fiber parameters (e.g. read from a file).

    Orbits longer than the stored sequence are rejected rather than wrapped.
    """

    omegas: tuple

    def orbit(self, n: int, omega0: float | None = None) -> np.ndarray:
        if n < 1:
            raise ValueError("orbit length must be at least 1")
        if n > len(self.omegas):
            raise ValueError(f"orbit of length {n} requested but only {len(self.omegas)} stored")
        return np.array(self.omegas[:n], dtype=float)


def advance(base: RotationBase, omega: float, n: int) -> float:
    return base.advance(omega, n)


def orbit(base, omega0: float, n: int) -> np.ndarray:
    return base.orbit(n, omega0)


def load_orbit_file(path) -> SequenceBase:
    """Read newline-separated fiber values; blank lines and ``#`` comments are skipped."""
    values = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            values.append(float(line) % 1.0)
    if not values:
        raise ValueError(f"no fiber values in {path}")
    return SequenceBase(tuple(values))
