"""Cocycles of fiber operators along base orbits and the stability experiments.

Fiber operators are assembled per orbit point (in a thread pool, size capped by
``RAND_ACIM_THREADS``) and folded sequentially starting from Lebesgue measure.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .driving import RotationBase
from .fourier import (
    DEFAULT_TOL,
    FourierDensity,
    cesaro_weighting,
    convolve_samples,
    fejer_multiplier,
    galerkin_matrix,
)
from .maps import d_LY, perturb_family
from .sobolev import GridFunction, SobolevParams, loglog_slope, lp_norm, weak_norm
from .ulam import (
    BinnedDensity,
    assemble_ulam_exact,
    assemble_ulam_testpoints,
    conditional_expectation,
    expand_bins,
)

__all__ = [
    "MassDrift",
    "DegenerateVector",
    "IncompatibleRepresentations",
    "UlamScheme",
    "GalerkinScheme",
    "CocycleSpec",
    "PushforwardResult",
    "LyapunovReport",
    "RunSummary",
    "fiber_operator",
    "fiber_operators",
    "push_forward",
    "estimate_lambda1",
    "estimate_lambda2",
    "lyapunov_report",
    "pullback_change",
    "compare_densities",
    "ulam_convergence_study",
    "convolution_stability_study",
    "static_stability_study",
    "DEFAULT_SEED",
]

DEFAULT_SEED = 20_240_521
SAMPLE_N = 4096
MASS_TOL = 1e-8


class MassDrift(RuntimeError):
    """Integral of a pushed density drifted away from one."""


class DegenerateVector(RuntimeError):
    """A zero-mean trial vector collapsed to zero."""


class IncompatibleRepresentations(ValueError):
    """Two densities have no common coarse partition."""


@dataclass(frozen=True)
class UlamScheme:
    k: int = 1000
    q: int = 1000
    assembly: str = "test-point"

    def __post_init__(self):
        if self.k < 2 or self.q < 1:
            raise ValueError("Ulam scheme needs k >= 2 and q >= 1")
        if self.assembly not in ("test-point", "exact-preimage"):
            raise ValueError(f"unknown assembly {self.assembly!r}")

    @property
    def label(self):
        return "ulam"


@dataclass(frozen=True)
class GalerkinScheme:
    K: int = 100
    tol: float = DEFAULT_TOL
    cesaro: bool = True

    def __post_init__(self):
        if self.K < 1 or not self.tol > 0:
            raise ValueError("Galerkin scheme needs K >= 1 and tol > 0")

    @property
    def label(self):
        return "galerkin-cesaro" if self.cesaro else "galerkin-plain"


@dataclass(frozen=True)
class CocycleSpec:
    family: object
    base: object = field(default_factory=RotationBase)
    scheme: object = field(default_factory=UlamScheme)
    steps: int = 22
    omega0: float | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be at least 1")

    def fibers(self, n=None):
        return self.base.orbit(self.steps if n is None else n, self.omega0)

    def describe(self):
        scheme = asdict(self.scheme)
        scheme["kind"] = self.scheme.label
        base = {"kind": type(self.base).__name__}
        if isinstance(self.base, RotationBase):
            base.update(alpha=self.base.alpha, omega0=self.base.omega0)
        return {
            "family": {"name": self.family.name, "params": _jsonable(self.family.params)},
            "base": base,
            "scheme": scheme,
            "steps": self.steps,
            "omega0": self.omega0,
        }


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=str))


# ---------------------------------------------------------------------------
# fiber operators


_CACHE: OrderedDict = OrderedDict()
_CACHE_SIZE = 256


def _threads():
    env = os.environ.get("RAND_ACIM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _raw_operator(family, omega, scheme):
    tmap = family(omega)
    if isinstance(scheme, UlamScheme):
        if scheme.assembly == "exact-preimage":
            return assemble_ulam_exact(tmap, scheme.k, fiber=omega)
        return assemble_ulam_testpoints(tmap, scheme.k, scheme.q, fiber=omega)
    return galerkin_matrix(tmap, scheme.K, scheme.tol, fiber=omega)


def fiber_operator(family, omega, scheme):
    """Discretised transfer operator of ``family(omega)``; memoised per process."""
    raw_scheme = replace(scheme, cesaro=False) if isinstance(scheme, GalerkinScheme) else scheme
    fkey = omega if family.depends_on_omega else None
    key = (id(family.generator), fkey, raw_scheme)
    hit = _CACHE.get(key)
    if hit is None:
        op = _raw_operator(family, omega, raw_scheme)
        # keep the generator alive so its id is never reused
        _CACHE[key] = (family.generator, op)
        if len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    else:
        _CACHE.move_to_end(key)
        op = hit[1]
    if isinstance(scheme, GalerkinScheme) and scheme.cesaro:
        op = cesaro_weighting(op)
    return op


def clear_cache():
    _CACHE.clear()


def fiber_operators(family, omegas, scheme):
    omegas = list(omegas)
    workers = min(_threads(), len(omegas))
    if workers <= 1:
        return [fiber_operator(family, w, scheme) for w in omegas]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda w: fiber_operator(family, w, scheme), omegas))


# ---------------------------------------------------------------------------
# pushforward


@dataclass
class PushforwardResult:
    densities: dict
    fibers: np.ndarray
    diagnostics: dict


def _initial_vector(scheme):
    if isinstance(scheme, UlamScheme):
        return np.ones(scheme.k)
    return FourierDensity.lebesgue(scheme.K).coeffs


def _wrap(vec, scheme):
    if isinstance(scheme, UlamScheme):
        return BinnedDensity(vec.copy())
    return FourierDensity(vec.copy())


def _mass(vec, scheme):
    if isinstance(scheme, UlamScheme):
        return float(np.sum(vec) / vec.shape[0])
    return float(vec[scheme.K].real)


def _l1(vec, scheme):
    if isinstance(scheme, UlamScheme):
        return float(np.mean(np.abs(vec)))
    return float(np.mean(np.abs(FourierDensity(vec).evaluate(SAMPLE_N))))


def push_forward(spec, record_at=None, operators=None):
    """Push Lebesgue measure along the orbit and record densities.

    The density at step ``s`` is the image of Lebesgue after the fiber operators
    of the first ``s`` orbit points have been applied in order.
    """
    record_at = sorted(set(range(spec.steps + 1) if record_at is None else record_at))
    if record_at and (record_at[0] < 0 or record_at[-1] > spec.steps):
        raise ValueError(f"record_at must lie in [0, {spec.steps}]")
    omegas = spec.fibers()
    ops = operators if operators is not None else fiber_operators(spec.family, omegas, spec.scheme)
    vec = _initial_vector(spec.scheme)
    densities = {}
    l1_change, drift = [], []
    if 0 in record_at:
        densities[0] = _wrap(vec, spec.scheme)
    for step, op in enumerate(ops, start=1):
        new = op.apply(vec)
        mass_err = abs(_mass(new, spec.scheme) - 1.0)
        if mass_err > MASS_TOL:
            raise MassDrift(f"mass drift {mass_err:.3g} at step {step}")
        drift.append(mass_err)
        l1_change.append(_l1(new - vec, spec.scheme))
        vec = new
        if step in record_at:
            densities[step] = _wrap(vec, spec.scheme)
    return PushforwardResult(
        densities,
        np.asarray(omegas),
        {"l1_change": l1_change, "mass_drift": drift},
    )


# ---------------------------------------------------------------------------
# Lyapunov exponents


@dataclass
class LyapunovReport:
    lambda1_hat: float
    lambda2_hat: float
    n_used: int
    trials: int
    trial_values: list = field(default_factory=list)

    def __post_init__(self):
        if self.lambda2_hat > self.lambda1_hat + 1e-12:
            raise ValueError("second exponent estimate exceeds the first")


def _spec_with_steps(spec, n):
    return replace(spec, steps=n)


def estimate_lambda1(spec, n, scale=1.0):
    """Growth rate of the L1 norm of the pushed Lebesgue density.

    The norm is renormalised after every step and the log factors accumulated.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    ops = fiber_operators(spec.family, spec.fibers(n), spec.scheme)
    vec = scale * _initial_vector(spec.scheme)
    norm = _l1(vec, spec.scheme)
    vec = vec / norm
    total = 0.0
    for op in ops:
        vec = op.apply(vec)
        norm = _l1(vec, spec.scheme)
        total += math.log(norm)
        vec = vec / norm
    return total / n


def _project_zero_mean(vec, scheme):
    if isinstance(scheme, UlamScheme):
        return vec - vec.mean()
    out = vec.copy()
    out[scheme.K] = 0.0
    return out


def _trial_vector(rng, scheme):
    if isinstance(scheme, UlamScheme):
        return rng.standard_normal(scheme.k)
    K = scheme.K
    pos = (rng.standard_normal(K) + 1j * rng.standard_normal(K)) / np.sqrt(1.0 + np.arange(1, K + 1))
    return np.concatenate([np.conj(pos[::-1]), [0.0], pos])


def estimate_lambda2(spec, n, trials=10, renorm_every=1, seed=DEFAULT_SEED, return_trials=False):
    """Decay rate of zero-mean vectors under the cocycle (median over trials).

    Every ``renorm_every`` steps the vector is projected back to zero mean,
    normalised in L1 and the log of the norm accumulated.  A trial that is mapped
    exactly to zero contributes ``-inf``; a trial vector that is zero to begin
    with raises :class:`DegenerateVector`.
    """
    if trials < 1 or renorm_every < 1:
        raise ValueError("need trials >= 1 and renorm_every >= 1")
    ops = fiber_operators(spec.family, spec.fibers(n), spec.scheme)
    rng = np.random.default_rng(seed)
    rates = []
    for trial in range(trials):
        vec = _project_zero_mean(_trial_vector(rng, spec.scheme), spec.scheme)
        norm = _l1(vec, spec.scheme)
        if not norm > 0:
            raise DegenerateVector(f"trial {trial} is zero after projection")
        vec = vec / norm
        total = 0.0
        for step, op in enumerate(ops, start=1):
            vec = op.apply(vec)
            if step % renorm_every == 0 or step == n:
                vec = _project_zero_mean(vec, spec.scheme)
                norm = _l1(vec, spec.scheme)
                if not math.isfinite(norm):
                    raise DegenerateVector(f"trial {trial} overflowed at step {step}")
                if norm == 0.0:
                    # exact annihilation: the discretised cocycle is nilpotent here
                    total = -math.inf
                    break
                total += math.log(norm)
                vec = vec / norm
        rates.append(total / n)
    value = float(np.median(rates))
    return (value, rates) if return_trials else value


def pullback_change(spec, n):
    """L1 distance between the ``n``- and ``(n-1)``-step images of Lebesgue that
    land on the same fiber ``sigma^n omega0``.

    The longer run starts at ``omega0``, the shorter one at ``sigma omega0``.  A
    small value means the initial transient has died out, whatever the fiber.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    long_run = push_forward(replace(spec, steps=n), [n]).densities[n]
    omegas = spec.fibers(n)
    ops = fiber_operators(spec.family, omegas[1:], spec.scheme)
    short = push_forward(replace(spec, steps=n - 1), [n - 1], operators=ops).densities[n - 1]
    return compare_densities(long_run, short)


def lyapunov_report(spec, n, trials=10, renorm_every=1, seed=DEFAULT_SEED):
    lam1 = estimate_lambda1(spec, n)
    lam2, rates = estimate_lambda2(spec, n, trials, renorm_every, seed, return_trials=True)
    return LyapunovReport(lam1, lam2, n, trials, rates)


# ---------------------------------------------------------------------------
# comparisons


def _binned_pair(a, b):
    if isinstance(a, FourierDensity) and isinstance(b, FourierDensity):
        return a.evaluate(SAMPLE_N), b.evaluate(SAMPLE_N)
    if isinstance(a, FourierDensity):
        return a.bin_averages(b.k), b.values
    if isinstance(b, FourierDensity):
        return a.values, b.bin_averages(a.k)
    kc = math.gcd(a.k, b.k)
    if kc < 2:
        raise IncompatibleRepresentations(f"bins {a.k} and {b.k} share no common coarsening")
    return conditional_expectation(a.values, kc), conditional_expectation(b.values, kc)


def compare_densities(a, b, norm="L1", p=2.0, params=SobolevParams()):
    """Distance between two densities on their coarsest common partition.

    ``norm`` is ``"L1"``, ``"Lp"`` (with exponent ``p``) or ``"weak-hpt"``.
    """
    va, vb = _binned_pair(a, b)
    diff = va - vb
    if norm == "L1":
        return float(np.mean(np.abs(diff)))
    if norm == "Lp":
        return lp_norm(diff, p)
    if norm == "weak-hpt":
        n = diff.shape[0] * max(1, math.ceil(SAMPLE_N / diff.shape[0]))
        return weak_norm(GridFunction(expand_bins(diff, n), "circle"), params)
    raise ValueError(f"unknown norm {norm!r}")


# ---------------------------------------------------------------------------
# experiments


@dataclass
class RunSummary:
    experiment: str
    config: dict
    tables: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    seed: int = DEFAULT_SEED
    timestamp: str = field(
        default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    )

    def to_dict(self):
        return _jsonable(asdict(self))

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def _ulam_template(spec):
    if not isinstance(spec.scheme, UlamScheme):
        raise ValueError("this study needs an Ulam template scheme")
    return spec.scheme


def ulam_convergence_study(spec, k_list, reference_k=1000, step=20):
    """L1 distance ``d(k)`` of the step density to a finer Ulam reference."""
    scheme = _ulam_template(spec)
    k_list = sorted(k_list)
    if reference_k < 2 * k_list[-1]:
        raise ValueError("reference_k must be at least twice the largest k")
    spec = replace(spec, steps=step)
    ref = push_forward(replace(spec, scheme=replace(scheme, k=reference_k)), [step]).densities[step]
    kc = reference_k
    for k in k_list:
        kc = math.gcd(kc, k)
    rows = []
    for k in k_list:
        dens = push_forward(replace(spec, scheme=replace(scheme, k=k)), [step]).densities[step]
        rows.append({"k": k, "d": compare_densities(dens.coarsen(kc), ref.coarsen(kc))})
    summary = RunSummary("ulam-sweep", spec.describe())
    summary.tables["d_k"] = rows
    summary.estimates.update(reference_k=reference_k, common_bins=kc, step=step)
    return summary


def convolution_stability_study(spec, K_list, step=20, kernel_factory=fejer_multiplier):
    """Distance ``d(K)`` between convolved and plain Ulam cocycles at ``step``.

    The convolved cocycle applies the kernel to the bin values after every
    fiber step, on the Ulam grid itself.
    """
    scheme = _ulam_template(spec)
    spec = replace(spec, steps=step)
    ops = fiber_operators(spec.family, spec.fibers(), scheme)
    ref = push_forward(spec, [step], operators=ops).densities[step]
    rows = []
    for K in K_list:
        kernel = kernel_factory(K)
        if kernel.K >= scheme.k // 2 and kernel.name != "dirac":
            raise ValueError(f"kernel order {K} is not resolved by {scheme.k} bins")
        vec = np.ones(scheme.k)
        min_sample = math.inf
        for op in ops:
            vec = convolve_samples(kernel, op.apply(vec))
            min_sample = min(min_sample, float(vec.min()))
        d = compare_densities(BinnedDensity(vec), ref)
        rows.append({"K": K, "d": d, "min_sample": min_sample, "kernel": kernel.name})
    summary = RunSummary("convolution-study", spec.describe())
    summary.tables["d_K"] = rows
    summary.estimates["step"] = step
    return summary


def static_stability_study(spec, rho_list, step=20, n_check_fibers=5, grid_points=2000):
    """Distance ``d(rho)`` for translate-perturbed fibers, with the slope of log d vs log rho."""
    spec = replace(spec, steps=step)
    ref = push_forward(spec, [step]).densities[step]
    omegas = spec.fibers(n_check_fibers)
    rows = []
    for rho in rho_list:
        fam = perturb_family(spec.family, rho)
        dens = push_forward(replace(spec, family=fam), [step]).densities[step]
        dly = [float(d_LY(fam(w), spec.family(w), grid_points)) for w in omegas]
        rows.append(
            {
                "rho": float(rho),
                "d": compare_densities(dens, ref),
                "d_LY": dly,
                "d_LY_max_error": max(abs(v - rho) for v in dly),
            }
        )
    pos = [r for r in rows if r["rho"] > 0 and r["d"] > 0]
    beta = loglog_slope([r["rho"] for r in pos], [r["d"] for r in pos]) if len(pos) >= 2 else None
    summary = RunSummary("static-study", spec.describe())
    summary.tables["d_rho"] = rows
    summary.estimates.update(beta=beta, step=step)
    return summary
