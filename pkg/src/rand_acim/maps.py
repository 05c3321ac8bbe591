"""Piecewise expanding circle maps.

A map is stored as an ordered list of branches over *lifted* intervals
``[a_i, a_{i+1})`` with ``a_0 in [0, 1)`` and ``a_b = a_0 + 1``.  Branch value
functions take lifted abscissae and return lifted (real) values; reduction mod 1
happens only when the map is evaluated as a circle map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "BranchBoundaryError",
    "ConvergenceFailure",
    "Branch",
    "PiecewiseMap",
    "MapFamily",
    "ValidationReport",
    "example_family",
    "doubling_map",
    "identity_map",
    "rotation_map",
    "polynomial_map",
    "eval_map",
    "eval_derivative",
    "preimage",
    "invert_branch",
    "apply_transfer",
    "validate_bounds",
    "d_LY",
    "translate_perturbation",
    "make_family",
    "perturb_family",
    "FAMILY_NAMES",
]

PREIMAGE_TOL = 1e-12
BISECTION_CAP = 200


class BranchBoundaryError(ValueError):
    """Raised when a derivative is requested exactly at a breakpoint."""


class ConvergenceFailure(RuntimeError):
    """Raised when branch inversion cannot bracket or converge."""


@dataclass(frozen=True)
class Branch:
    start: float
    end: float
    value_fn: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    deriv_fn: Callable[[np.ndarray], np.ndarray] = field(compare=False)

    @property
    def length(self):
        return self.end - self.start

    def values(self, x):
        return np.asarray(self.value_fn(np.asarray(x, dtype=float)), dtype=float)

    def derivs(self, x):
        return np.asarray(self.deriv_fn(np.asarray(x, dtype=float)), dtype=float)

    def increasing(self):
        mid = 0.5 * (self.start + self.end)
        return bool(self.derivs(mid) > 0)

    def image(self):
        """Lifted image ``(lo, hi)`` of the closed branch interval."""
        va, vb = self.values([self.start, self.end])
        return (min(va, vb), max(va, vb))

    def grid(self, n):
        """``n`` points spanning the closed branch interval (endpoints nudged inside)."""
        eps = 1e-12 * max(1.0, abs(self.length))
        return np.linspace(self.start + eps, self.end - eps, n)


@dataclass(frozen=True)
class PiecewiseMap:
    """Finite-branched piecewise C^{1+gamma} map of the unit circle.

    Parameters
    ----------
    branches : sequence of Branch
        Ordered branches; consecutive intervals must share endpoints exactly and the
        last must end at ``branches[0].start + 1``.
    gamma : float
        Hoelder exponent of the derivative, in (0, 1].
    modulus : bool
        If True, outputs are reduced mod 1.
    name : str
        Label used in reports.
    """

    branches: tuple
    gamma: float = 1.0
    modulus: bool = True
    name: str = "map"

    def __post_init__(self):
        branches = tuple(self.branches)
        object.__setattr__(self, "branches", branches)
        if not branches:
            raise ValueError("a map needs at least one branch")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        a0 = branches[0].start
        if not 0.0 <= a0 < 1.0:
            raise ValueError(f"first breakpoint must lie in [0, 1), got {a0}")
        for left, right in zip(branches[:-1], branches[1:]):
            if left.end != right.start:
                raise ValueError("branch intervals must be contiguous")
        for br in branches:
            if not br.end > br.start:
                raise ValueError("branch intervals must be nonempty")
        if branches[-1].end != a0 + 1.0:
            raise ValueError("branch intervals must tile one full turn of the circle")

    @property
    def n_branches(self):
        return len(self.branches)

    @property
    def breaks(self):
        return np.array([b.start for b in self.branches] + [self.branches[-1].end])

    def locate(self, x):
        """Return ``(branch_index, lifted_x)`` for circle points ``x``."""
        x = np.asarray(x, dtype=float)
        a0 = self.branches[0].start
        lifted = a0 + np.mod(x - a0, 1.0)
        # mod can round up to exactly 1
        lifted = np.where(lifted >= a0 + 1.0, a0, lifted)
        idx = np.searchsorted(self.breaks, lifted, side="right") - 1
        idx = np.clip(idx, 0, self.n_branches - 1)
        return idx, lifted

    def lifted_values(self, x):
        idx, lifted = self.locate(x)
        out = np.empty_like(lifted)
        for i, br in enumerate(self.branches):
            mask = idx == i
            if np.any(mask):
                out[mask] = br.values(lifted[mask])
        return out

    def __call__(self, x):
        return eval_map(self, x)


@dataclass(frozen=True)
class MapFamily:
    """Random map ``omega -> T_omega`` given by a generator."""

    name: str
    generator: Callable[[float], PiecewiseMap] = field(compare=False)
    params: dict = field(default_factory=dict, compare=False)
    depends_on_omega: bool = True

    def __call__(self, omega):
        return self.generator(float(omega))


@dataclass
class ValidationReport:
    n_branches: int
    min_slope: float
    norm_proxy: float
    mu: float
    D: float
    b: int
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures

    def as_dict(self):
        return {
            "n_branches": self.n_branches,
            "min_slope": self.min_slope,
            "norm_proxy": self.norm_proxy,
            "mu": self.mu,
            "D": self.D,
            "b": self.b,
            "passed": self.passed,
            "failures": list(self.failures),
        }


# ---------------------------------------------------------------------------
# constructors


def _poly_branch(start, end, coeffs, offset=0.0, shift=0.0):
    """Branch with value ``P(x - offset) + shift`` for ascending ``coeffs``."""
    p = np.polynomial.Polynomial(coeffs)
    dp = p.deriv()
    return Branch(
        start,
        end,
        lambda x, p=p, o=offset, s=shift: p(x - o) + s,
        lambda x, dp=dp, o=offset: dp(x - o),
    )


def example_family(omega):
    """Three-branch random map with rotating breakpoints.

    Branches, in the local variable ``u = x - omega``:

    * ``[0, 1/3)``:   ``3u - 2.9 u (u - 1/3)``
    * ``[1/3, 2/3)``: ``-3u + 1 - 2.9 (u - 1/3)(u - 2/3)``
    * ``[2/3, 1)``:   ``7/3 (u - 2/3) + 2 omega / 9``
    """
    omega = float(omega) % 1.0
    c = 2.9
    third, two_thirds = 1.0 / 3.0, 2.0 / 3.0
    b1 = [0.0, 3.0 + c * third, -c]
    # -3u + 1 - c(u^2 - u + 2/9)
    b2 = [1.0 - 2.0 * c / 9.0, -3.0 + c, -c]
    b3 = [-7.0 / 3.0 * two_thirds + 2.0 * omega / 9.0, 7.0 / 3.0]
    a = [omega, omega + third, omega + two_thirds, omega + 1.0]
    branches = (
        _poly_branch(a[0], a[1], b1, offset=omega),
        _poly_branch(a[1], a[2], b2, offset=omega),
        _poly_branch(a[2], a[3], b3, offset=omega),
    )
    return PiecewiseMap(branches, gamma=1.0, name=f"example35(omega={omega!r})")


def doubling_map():
    branches = (
        _poly_branch(0.0, 0.5, [0.0, 2.0]),
        _poly_branch(0.5, 1.0, [-1.0, 2.0]),
    )
    return PiecewiseMap(branches, name="doubling")


def identity_map():
    return PiecewiseMap((_poly_branch(0.0, 1.0, [0.0, 1.0]),), name="identity")


def rotation_map(beta):
    """Slope-one rotation ``x -> x + beta`` (test map; not expanding)."""
    return PiecewiseMap((_poly_branch(0.0, 1.0, [float(beta), 1.0]),), name=f"rotation({beta})")


def polynomial_map(breakpoints, coefficients, gamma=1.0, name="custom-polynomial"):
    """Piecewise polynomial map from breakpoints and per-branch coefficients.

    Parameters
    ----------
    breakpoints : sequence of float
        Increasing breakpoints ``a_0 < ... < a_b`` with ``a_0 in [0, 1)`` and
        ``a_b == a_0 + 1``.
    coefficients : sequence of sequence of float
        Ascending power coefficients of each branch in the absolute lifted variable.
    """
    bps = [float(v) for v in breakpoints]
    if len(coefficients) != len(bps) - 1:
        raise ValueError("need one coefficient list per branch")
    if abs(bps[-1] - (bps[0] + 1.0)) > 1e-12:
        raise ValueError("breakpoints must span exactly one turn")
    bps[-1] = bps[0] + 1.0
    branches = tuple(
        _poly_branch(bps[i], bps[i + 1], [float(c) for c in coefficients[i]])
        for i in range(len(coefficients))
    )
    return PiecewiseMap(branches, gamma=gamma, name=name)


# ---------------------------------------------------------------------------
# evaluation


def eval_map(tmap, x):
    """Evaluate ``tmap`` at circle points ``x``; scalar in, scalar out."""
    scalar = np.ndim(x) == 0
    vals = tmap.lifted_values(np.atleast_1d(x))
    if tmap.modulus:
        vals = np.mod(vals, 1.0)
        vals = np.where(vals >= 1.0, 0.0, vals)
    return float(vals[0]) if scalar else vals


def eval_derivative(tmap, x, side=None):
    """Derivative of ``tmap`` at ``x``.

    At a breakpoint the derivative is two-valued: pass ``side="left"`` for the
    left limit (or ``side="right"`` for the right one); otherwise
    :class:`BranchBoundaryError` is raised.
    """
    scalar = np.ndim(x) == 0
    idx, lifted = tmap.locate(np.atleast_1d(x))
    bps = tmap.breaks
    at_break = lifted == bps[idx]
    if np.any(at_break) and side is None:
        raise BranchBoundaryError(f"x={np.atleast_1d(x)[at_break][0]!r} is a breakpoint")
    out = np.empty_like(lifted)
    for i, br in enumerate(tmap.branches):
        mask = idx == i
        if np.any(mask):
            out[mask] = br.derivs(lifted[mask])
    if side == "left" and np.any(at_break):
        for pos in np.flatnonzero(at_break):
            prev = tmap.branches[idx[pos] - 1]
            out[pos] = prev.derivs(prev.end)
    return float(out[0]) if scalar else out


def invert_branch(branch, y, tol=PREIMAGE_TOL, max_iter=BISECTION_CAP):
    """Solve ``branch.value_fn(x) = y`` by vectorised bisection.

    ``y`` must lie in the closed lifted image of the branch.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lo_img, hi_img = branch.image()
    slack = 1e-12 * max(1.0, abs(lo_img), abs(hi_img))
    if np.any(~np.isfinite(y)) or np.any(y < lo_img - slack) or np.any(y > hi_img + slack):
        raise ConvergenceFailure("target level not bracketed by the branch image")
    sign = 1.0 if branch.increasing() else -1.0
    lo = np.full_like(y, branch.start)
    hi = np.full_like(y, branch.end)
    # bisect to machine resolution; tol is the acceptance threshold
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        fm = branch.values(mid)
        if np.any(~np.isfinite(fm)):
            raise ConvergenceFailure("branch value is not finite inside its interval")
        below = sign * (fm - y) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    else:
        if np.any(hi - lo > tol):
            raise ConvergenceFailure(f"bisection did not reach {tol} in {max_iter} steps")
    return 0.5 * (lo + hi)


def _wrap_interval(p, q):
    """Reduce a lifted interval ``[p, q)`` (length <= 1) to pieces in ``[0, 1]``."""
    shift = math.floor(p)
    p, q = p - shift, q - shift
    if q <= 1.0:
        return [(p, q)]
    return [(p, 1.0), (0.0, q - 1.0)]


def preimage(tmap, target):
    """Preimage of a subinterval ``[c, d)`` of the circle.

    Returns a list of disjoint ``(lo, hi)`` pairs in ``[0, 1]``, at most one per
    branch and winding, each accurate to :data:`PREIMAGE_TOL`.
    """
    c, d = float(target[0]), float(target[1])
    if not d > c:
        return []
    pieces = []
    for br in tmap.branches:
        lo_img, hi_img = br.image()
        for n in range(math.floor(lo_img - d), math.ceil(hi_img - c) + 1):
            y0, y1 = max(c + n, lo_img), min(d + n, hi_img)
            if y1 <= y0:
                continue
            x0, x1 = invert_branch(br, [y0, y1])
            p, q = min(x0, x1), max(x0, x1)
            if q > p:
                pieces.extend(_wrap_interval(p, q))
    return pieces


def apply_transfer(tmap, f, y):
    """Evaluate the transfer operator of ``tmap`` applied to ``f`` at points ``y``.

    ``f`` is a vectorised callable on circle points.  Uses the inverse-branch
    formula: sum over branches of ``f(xi(y)) / |DT(xi(y))|`` for every lifted
    level ``y + n`` inside the branch image.
    """
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    for br in tmap.branches:
        lo_img, hi_img = br.image()
        for n in range(math.floor(lo_img) - 1, math.ceil(hi_img) + 1):
            levels = y + n
            mask = (levels >= lo_img) & (levels < hi_img)
            if not np.any(mask):
                continue
            x = invert_branch(br, levels[mask])
            out[mask] += f(np.mod(x, 1.0)) / np.abs(br.derivs(x))
    return out


# ---------------------------------------------------------------------------
# bounds and distances


def _holder_quotient(x, g, gamma, max_pairs_points=512):
    """Grid estimate of the gamma-Hoelder seminorm of samples ``g`` at ``x``."""
    if len(x) < 2:
        return 0.0
    best = float(np.max(np.abs(np.diff(g)) / np.diff(x) ** gamma))
    if gamma < 1.0:
        step = max(1, len(x) // max_pairs_points)
        xs, gs = x[::step], g[::step]
        dx = np.abs(xs[:, None] - xs[None, :])
        dg = np.abs(gs[:, None] - gs[None, :])
        np.fill_diagonal(dx, 1.0)
        best = max(best, float(np.max(dg / dx**gamma)))
    return best


def _derivative_norm(x, dg, gamma):
    """``sup|g'| + Hol_gamma(g')`` on the grid."""
    return float(np.max(np.abs(dg))) + _holder_quotient(x, dg, gamma)


def validate_bounds(tmap, grid_points_per_branch=10_000, mu=2.0, D=20.0, b=3):
    """Check the uniform branch-count, distortion and expansion bounds on a grid.

    The norm proxy is ``sup|T_i| + sup|DT_i| + Hol_gamma(DT_i)`` maximised over
    branches.  Random covering is not decided.
    """
    if grid_points_per_branch < 2:
        raise ValueError("need at least two grid points per branch")
    min_slope = math.inf
    norm_proxy = 0.0
    for br in tmap.branches:
        x = br.grid(grid_points_per_branch)
        v, dv = br.values(x), br.derivs(x)
        min_slope = min(min_slope, float(np.min(np.abs(dv))))
        norm_proxy = max(
            norm_proxy, float(np.max(np.abs(v))) + _derivative_norm(x, dv, tmap.gamma)
        )
    report = ValidationReport(tmap.n_branches, min_slope, norm_proxy, mu, D, b)
    if tmap.n_branches > b:
        report.failures.append(f"branch count: {tmap.n_branches} branches exceed bound {b}")
    if norm_proxy > D:
        report.failures.append(f"derivative norm: norm proxy {norm_proxy:.6g} exceeds D={D}")
    if not min_slope > 1.0:
        report.failures.append(f"expansion: min slope {min_slope:.6g} is not expanding")
    elif min_slope < mu:
        report.failures.append(f"expansion: min slope {min_slope:.6g} below mu={mu}")
    for br in tmap.branches:
        dv = br.derivs(br.grid(grid_points_per_branch))
        if not (np.all(dv > 0) or np.all(dv < 0)):
            report.failures.append("branch derivative changes sign")
            break
    return report


def _circle_gap(a, b):
    """Distance on the unit circle; symmetric in its arguments bit for bit."""
    d = np.mod(np.abs(a - b), 1.0)
    return np.minimum(d, 1.0 - d)


def d_LY(S, T, grid_points_per_branch=2_000):
    """Branch-matched distance between two piecewise maps.

    Equals 1 when the branch counts differ or some matched intervals are disjoint.
    Otherwise it is the sum of

    * ``max_i ||S_i - T_i||`` on ``I_i^S ∩ I_i^T`` in C^{1+gamma}, with the C^0
      part measured as circle distance,
    * ``max_i | N(S_i) - N(T_i) |`` where ``N`` is the derivative part
      ``sup|DT_i| + Hol_gamma(DT_i)`` (branch values are only defined mod 1),
    * ``max_i`` Hausdorff distance of the matched intervals.
    """
    if S.n_branches != T.n_branches:
        return 1.0
    # fixed evaluation order makes the result exactly symmetric
    if tuple(T.breaks) < tuple(S.breaks):
        S, T = T, S
    gamma = min(S.gamma, T.gamma)
    diff_term = norm_term = haus_term = 0.0
    for bs, bt in zip(S.branches, T.branches):
        shift = round(bt.start - bs.start)
        ts, te = bt.start - shift, bt.end - shift
        lo, hi = max(bs.start, ts), min(bs.end, te)
        if not hi > lo:
            return 1.0
        x = np.linspace(lo, hi, grid_points_per_branch + 2)[1:-1]
        vs, vt = bs.values(x), bt.values(x + shift)
        ds, dt = bs.derivs(x), bt.derivs(x + shift)
        dd = ds - dt
        diff = float(np.max(_circle_gap(vs, vt))) + _derivative_norm(x, dd, gamma)
        diff_term = max(diff_term, diff)
        xs = bs.grid(grid_points_per_branch)
        xt = bt.grid(grid_points_per_branch)
        ns = _derivative_norm(xs, bs.derivs(xs), gamma)
        nt = _derivative_norm(xt, bt.derivs(xt), gamma)
        norm_term = max(norm_term, abs(ns - nt))
        haus_term = max(haus_term, max(abs(bs.start - ts), abs(bs.end - te)))
    return diff_term + norm_term + haus_term


def translate_perturbation(tmap, rho, name=None):
    """Shift every branch value by ``+rho``; breakpoints and derivative unchanged."""
    rho = float(rho)
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if rho == 0.0:
        return tmap
    branches = tuple(
        Branch(
            br.start,
            br.end,
            lambda x, f=br.value_fn: f(x) + rho,
            br.deriv_fn,
        )
        for br in tmap.branches
    )
    return PiecewiseMap(
        branches, gamma=tmap.gamma, modulus=tmap.modulus, name=name or f"{tmap.name}+{rho!r}"
    )


# ---------------------------------------------------------------------------
# families


FAMILY_NAMES = ("example35", "doubling", "identity", "rotation", "custom-polynomial")


def make_family(name, params=None, perturbation=0.0):
    """Build a :class:`MapFamily` by name.

    ``params`` carries family-specific settings: ``beta`` for ``rotation``;
    ``breakpoints`` and ``coefficients`` for ``custom-polynomial``.  A nonzero
    ``perturbation`` wraps every fiber with :func:`translate_perturbation`.
    """
    params = dict(params or {})
    if name == "example35":
        gen, dep = example_family, True
    elif name == "doubling":
        fixed = doubling_map()
        gen, dep = (lambda omega: fixed), False
    elif name == "identity":
        fixed = identity_map()
        gen, dep = (lambda omega: fixed), False
    elif name == "rotation":
        fixed = rotation_map(params.get("beta", 0.25))
        gen, dep = (lambda omega: fixed), False
    elif name == "custom-polynomial":
        fixed = polynomial_map(
            params["breakpoints"], params["coefficients"], gamma=params.get("gamma", 1.0)
        )
        gen, dep = (lambda omega: fixed), False
    else:
        raise ValueError(f"unknown map family {name!r}; choose from {FAMILY_NAMES}")
    family = MapFamily(name, gen, params, depends_on_omega=dep)
    return perturb_family(family, perturbation) if perturbation else family


def perturb_family(family, rho):
    """Family whose every fiber is :func:`translate_perturbation` by ``rho``."""
    rho = float(rho)
    if rho == 0.0:
        return family
    params = dict(family.params)
    params["perturbation"] = params.get("perturbation", 0.0) + rho
    return MapFamily(
        family.name,
        lambda omega: translate_perturbation(family(omega), rho),
        params,
        depends_on_omega=family.depends_on_omega,
    )

