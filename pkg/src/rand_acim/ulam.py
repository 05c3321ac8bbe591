r"""Ulam discretisation of fiber transfer operators.

Densities are **row vectors** and matrices act on the right: if ``v`` holds the
bin values of a density then ``v @ M`` is its image.  Entry ``M[i, j]`` is the
fraction of bin ``B_i`` that the map sends into bin ``B_j``, so every row of an
Ulam matrix sums to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .maps import invert_branch

__all__ = [
    "GridMismatch",
    "DimensionMismatch",
    "BinnedDensity",
    "UlamMatrix",
    "SPARSE_THRESHOLD",
    "conditional_expectation",
    "expand_bins",
    "assemble_ulam_testpoints",
    "assemble_ulam_exact",
    "push",
]

SPARSE_THRESHOLD = 512


class GridMismatch(ValueError):
    """Sample grid does not refine the bin partition."""


class DimensionMismatch(ValueError):
    """Density and matrix sizes disagree."""


@dataclass(frozen=True)
class BinnedDensity:
    """Step density on ``k`` uniform bins of the unit circle."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def k(self):
        return self.values.shape[0]

    @property
    def integral(self):
        return float(np.sum(self.values) / self.k)

    @property
    def midpoints(self):
        return (np.arange(self.k) + 0.5) / self.k

    @classmethod
    def lebesgue(cls, k):
        return cls(np.ones(k))

    def check(self, tol=1e-8):
        if np.any(self.values < 0):
            raise ValueError("density has negative bins")
        if abs(self.integral - 1.0) > tol:
            raise ValueError(f"density integral {self.integral!r} differs from 1")
        return self

    def coarsen(self, k):
        return BinnedDensity(conditional_expectation(self.values, k))

    def to_csv(self, path):
        write_xy_csv(path, self.midpoints, self.values)


def write_xy_csv(path, x, y):
    """Two-column ``x,value`` CSV with 17 significant digits."""
    lines = ["x,value"]
    lines.extend(f"{a:.17g},{b:.17g}" for a, b in zip(x, y))
    Path(path).write_text("\n".join(lines) + "\n")


def conditional_expectation(f, k):
    """Bin averages of grid samples ``f`` over ``k`` uniform bins.

    ``f`` holds values on ``n`` equal cells; ``n`` must be a multiple of ``k``.
    """
    f = np.asarray(getattr(f, "samples", f), dtype=float)
    n = f.shape[0]
    if k < 1 or n % k:
        raise GridMismatch(f"{n} samples do not refine {k} bins")
    return f.reshape(k, n // k).mean(axis=1)


def expand_bins(values, n):
    """Sample a step function on ``len(values)`` bins at ``n`` cell midpoints."""
    values = np.asarray(values)
    k = values.shape[0]
    if n % k:
        raise GridMismatch(f"{n} samples do not refine {k} bins")
    return np.repeat(values, n // k)


@dataclass(frozen=True)
class UlamMatrix:
    entries: object
    assembly: str
    fiber: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def k(self):
        return self.entries.shape[0]

    @property
    def is_sparse(self):
        return sp.issparse(self.entries)

    def toarray(self):
        return self.entries.toarray() if self.is_sparse else np.asarray(self.entries)

    def row_sums(self):
        return np.asarray(self.entries.sum(axis=1)).ravel()

    def apply(self, v):
        """Image of the raw row vector ``v``."""
        v = np.asarray(v)
        if v.shape[0] != self.k:
            raise DimensionMismatch(f"vector of length {v.shape[0]} vs matrix of size {self.k}")
        if self.is_sparse:
            return np.asarray(self.entries.T @ v).ravel()
        return v @ self.entries

    def to_csv(self, path):
        """Dense matrices as plain CSV; sparse ones as ``i,j,value`` triplets."""
        if self.is_sparse:
            coo = self.entries.tocoo()
            order = np.lexsort((coo.col, coo.row))
            lines = ["i,j,value"]
            lines.extend(
                f"{coo.row[n]},{coo.col[n]},{coo.data[n]:.17g}" for n in order
            )
        else:
            lines = [",".join(f"{v:.17g}" for v in row) for row in self.entries]
        Path(path).write_text("\n".join(lines) + "\n")


def _finalize(rows, cols, vals, k, assembly, fiber, normalize=True, meta=None):
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(k, k)).tocsr()
    mat.sum_duplicates()
    meta = dict(meta or {})
    sums = np.asarray(mat.sum(axis=1)).ravel()
    meta["raw_row_sum_error"] = float(np.max(np.abs(sums - 1.0)))
    if normalize:
        if np.any(sums <= 0):
            raise ValueError("empty Ulam row; the map loses mass")
        mat = sp.diags(1.0 / sums) @ mat
        mat = mat.tocsr()
    if k < SPARSE_THRESHOLD:
        mat = mat.toarray()
    return UlamMatrix(mat, assembly, fiber, meta)


def assemble_ulam_testpoints(tmap, k, q=1000, fiber=None):
    """Ulam matrix by counting ``q`` test points per bin.

    Test points sit at the midpoints ``(l + 1/2) / (k q)`` of the ``k q`` sub-cells;
    entry ``(i, j)`` is the fraction of bin ``i``'s test points whose image falls in
    bin ``j``.
    """
    if k < 2 or q < 1:
        raise ValueError("need k >= 2 and q >= 1")
    x = (np.arange(k * q) + 0.5) / (k * q)
    y = tmap(x)
    j = np.minimum(np.floor(y * k).astype(np.int64), k - 1)
    i = np.arange(k * q) // q
    counts = np.bincount(i * k + j, minlength=k * k)
    flat = np.flatnonzero(counts)
    rows, cols = np.divmod(flat, k)
    return _finalize(rows, cols, counts[flat] / q, k, "test-point", fiber, meta={"q": q})


def _overlaps(p, q, k):
    """Split lifted intervals ``[p, q)`` against uniform bins; returns (bin, length)."""
    i0 = np.floor(p * k).astype(np.int64)
    i1 = np.ceil(q * k).astype(np.int64) - 1
    i1 = np.maximum(i1, i0)
    counts = i1 - i0 + 1
    owner = np.repeat(np.arange(len(p)), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    idx = i0[owner] + offs
    lo = np.maximum(p[owner], idx / k)
    hi = np.minimum(q[owner], (idx + 1) / k)
    keep = hi > lo
    return owner[keep], np.mod(idx[keep], k), (hi - lo)[keep]


def _snap(x, k, ulps=8):
    """Move preimages lying within a few ulps of a bin edge onto that edge."""
    edge = np.round(x * k) / k
    close = np.abs(x - edge) <= ulps * np.spacing(np.maximum(1.0, np.abs(x)))
    return np.where(close, edge, x)


def assemble_ulam_exact(tmap, k, fiber=None, normalize=True):
    """Ulam matrix from exact branch preimages of every bin.

    Entry ``(i, j) = k * |B_i ∩ T^{-1} B_j|``; branch inverses are found by
    bisection to machine resolution.
    """
    if k < 2:
        raise ValueError("need k >= 2")
    rows, cols, vals = [], [], []
    for br in tmap.branches:
        lo_img, hi_img = br.image()
        levels = np.arange(math.floor(lo_img * k), math.ceil(hi_img * k) + 1) / k
        levels = np.unique(np.clip(levels, lo_img, hi_img))
        if levels.size < 2:
            continue
        xs = _snap(invert_branch(br, levels), k)
        y_mid = 0.5 * (levels[:-1] + levels[1:])
        target = np.mod(np.floor(y_mid * k).astype(np.int64), k)
        p = np.minimum(xs[:-1], xs[1:])
        q = np.maximum(xs[:-1], xs[1:])
        owner, src, length = _overlaps(p, q, k)
        rows.append(src)
        cols.append(target[owner])
        vals.append(k * length)
    return _finalize(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), k,
        "exact-preimage", fiber, normalize=normalize,
    )


def push(v, M):
    """Push a binned density through an Ulam matrix (``v @ M``)."""
    if v.k != M.k:
        raise DimensionMismatch(f"density has {v.k} bins, matrix has {M.k}")
    return BinnedDensity(M.apply(v.values))
