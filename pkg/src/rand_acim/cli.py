"""``rand-acim`` command-line entry point.

Exit codes: 0 success, 1 numerical-invariant failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .cocycle import (
    DegenerateVector,
    IncompatibleRepresentations,
    MassDrift,
    RunSummary,
    compare_densities,
    convolution_stability_study,
    estimate_lambda1,
    estimate_lambda2,
    pullback_change,
    push_forward,
    static_stability_study,
    ulam_convergence_study,
)
from .fourier import QuadratureFailure
from .maps import BranchBoundaryError, ConvergenceFailure, validate_bounds
from .plotting import density_grid_svg
from .sobolev import projection_error_study, projection_ratio_study, smoothing_rate_study
from .ulam import write_xy_csv


LOCK_NAME = ".rand-acim.lock"
SUMMARY_NAME = "summary.json"
SAMPLE_N = 1000

NUMERICAL_ERRORS = (
    MassDrift,
    DegenerateVector,
    QuadratureFailure,
    ConvergenceFailure,
    BranchBoundaryError,
    IncompatibleRepresentations,
)


class InvariantFailure(RuntimeError):
    """A study finished but one of its checks did not hold."""


class OutputLocked(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# output bookkeeping


class Artifacts:
    """Tracks files written into the output directory so they can be rolled back."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.written = []

    def path(self, name):
        p = self.dir / name
        self.written.append(p)
        return p

    def table(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])

    def density(self, name, x, y):
        write_xy_csv(self.path(name), x, y)

    def rollback(self):
        for p in self.written:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


class OutputLock:
    def __init__(self, out_dir):
        self.path = Path(out_dir) / LOCK_NAME

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as exc:
            raise OutputLocked(f"{self.path} exists: another run is writing here") from exc
        with os.fdopen(fd, "w") as fh:
            fh.write(f"{os.getpid()}\n")
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def _check(summary, name, ok, value=None):
    summary.diagnostics.setdefault("checks", {})[name] = {"passed": bool(ok), "value": value}


def _failed_checks(summary):
    checks = summary.diagnostics.get("checks", {})
    return [k for k, v in checks.items() if not v["passed"]]


# ---------------------------------------------------------------------------
# experiments


def _sample_grid(n=SAMPLE_N):
    return (np.arange(n) + 0.5) / n


def run_reproduce_figure(cfg, art):
    spec = cfgmod.cocycle_spec(cfg)
    record = [s for s in cfg["scheme"]["record_at"]]
    ulam = push_forward(spec, record)
    summary = RunSummary("reproduce-figure", cfg)
    summary.estimates["record_at"] = record
    rows_u, rows_f = [], []
    for s in record:
        dens = ulam.densities[s]
        art.density(f"ulam_step{s}.csv", dens.midpoints, dens.values)
        _check(summary, f"ulam_step{s}_nonnegative", dens.values.min() >= 0.0, float(dens.values.min()))
        _check(summary, f"ulam_step{s}_mass", abs(dens.integral - 1.0) <= 1e-8, dens.integral)
        rows_u.append((f"step {s}", [_series(dens.midpoints, dens.values, "#000", 1.5)]))

    # stationarity: the step-n image of Lebesgue started at omega0 against the
    # step-(n-1) image started one fiber later (both land on the same fiber)
    n_stat = int(cfg["studies"]["stationarity_step"])
    if n_stat >= 2:
        pb = pullback_change(replace(spec, steps=n_stat), n_stat)
        lit = push_forward(replace(spec, steps=n_stat), []).diagnostics["l1_change"][-1]
        summary.diagnostics["pullback_l1_change"] = pb
        summary.diagnostics["consecutive_step_l1_change"] = lit
        _check(summary, "stationarity", pb <= float(cfg["thresholds"]["stationarity_l1"]), pb)

    if cfg["scheme"]["galerkin"]["enabled"]:
        x = _sample_grid()
        ces = push_forward(replace(spec, scheme=cfgmod.galerkin_scheme(cfg, True)), record)
        plain = push_forward(replace(spec, scheme=cfgmod.galerkin_scheme(cfg, False)), record)
        cross = {}
        for s in record:
            fc, fp = ces.densities[s], plain.densities[s]
            yc, yp = fc.evaluate(SAMPLE_N), fp.evaluate(SAMPLE_N)
            art.density(f"fejer_step{s}.csv", x, yc)
            art.density(f"galerkin_step{s}.csv", x, yp)
            cross[s] = compare_densities(ulam.densities[s], fc)
            summary.diagnostics.setdefault("galerkin_min_sample", {})[s] = float(yp.min())
            summary.diagnostics.setdefault("fejer_min_sample", {})[s] = float(yc.min())
            rows_f.append(
                (
                    f"step {s}",
                    [_series(x, yc, "#1f4fd1", 2.5), _series(x, yp, "#d62728", 0.8)],
                )
            )
        summary.tables["cross_scheme_l1"] = [{"step": s, "d": d} for s, d in cross.items()]
        thr = float(cfg["thresholds"]["cross_scheme_l1"])
        _check(summary, "cross_scheme_l1", max(cross.values()) <= thr, max(cross.values()))
    if cfg["plot"]:
        rows = [rows_u] + ([rows_f] if rows_f else [])
        density_grid_svg(rows, art.path("pushforward.svg"))
    return summary


def _series(x, y, color, width):
    return {"x": np.asarray(x), "y": np.asarray(y), "color": color, "width": width}


def run_ulam_sweep(cfg, art):
    st = cfg["studies"]
    summary = ulam_convergence_study(
        cfgmod.cocycle_spec(cfg), st["ulam_k"], int(st["reference_k"]), int(st["step"])
    )
    rows = summary.tables["d_k"]
    art.table("d_k.csv", ["k", "d"], [(r["k"], r["d"]) for r in rows])
    _check(summary, "d_decreases", rows[-1]["d"] < rows[0]["d"], [r["d"] for r in rows])
    return summary


def run_fourier_sweep(cfg, art):
    st = cfg["studies"]
    step = int(st["step"])
    spec = cfgmod.cocycle_spec(cfg, steps=step)
    ref = push_forward(spec, [step]).densities[step]
    rows = []
    for K in st["fourier_K"]:
        ces = push_forward(replace(spec, scheme=cfgmod.galerkin_scheme(cfg, True, K)), [step])
        plain = push_forward(replace(spec, scheme=cfgmod.galerkin_scheme(cfg, False, K)), [step])
        fc, fp = ces.densities[step], plain.densities[step]
        rows.append(
            {
                "K": int(K),
                "d_cesaro": compare_densities(ref, fc),
                "d_plain": compare_densities(ref, fp),
                "min_cesaro": float(fc.evaluate(4096).min()),
                "min_plain": float(fp.evaluate(4096).min()),
            }
        )
    summary = RunSummary("fourier-sweep", cfg)
    summary.tables["d_K"] = rows
    art.table(
        "fourier_sweep.csv",
        ["K", "d_cesaro", "d_plain", "min_cesaro", "min_plain"],
        [tuple(r.values()) for r in rows],
    )
    return summary


def run_convolution_study(cfg, art):
    st = cfg["studies"]
    summary = convolution_stability_study(cfgmod.cocycle_spec(cfg), st["fejer_K"], int(st["step"]))
    rows = summary.tables["d_K"]
    art.table("d_K.csv", ["K", "d", "min_sample"], [(r["K"], r["d"], r["min_sample"]) for r in rows])
    _check(summary, "d_decreases", rows[-1]["d"] < rows[0]["d"], [r["d"] for r in rows])
    mins = min(r["min_sample"] for r in rows)
    _check(summary, "positivity", mins >= -1e-10, mins)
    return summary


def run_static_study(cfg, art):
    st = cfg["studies"]
    summary = static_stability_study(cfgmod.cocycle_spec(cfg), st["rho"], int(st["step"]))
    rows = summary.tables["d_rho"]
    art.table(
        "d_rho.csv",
        ["rho", "d", "d_LY_max_error"],
        [(r["rho"], r["d"], r["d_LY_max_error"]) for r in rows],
    )
    pos = sorted((r for r in rows if r["rho"] > 0), key=lambda r: -r["rho"])
    ds = [r["d"] for r in pos]
    _check(summary, "d_strictly_decreasing", all(a > b for a, b in zip(ds, ds[1:])), ds)
    beta = summary.estimates["beta"]
    _check(summary, "beta_positive", beta is not None and beta > 0, beta)
    err = max(r["d_LY_max_error"] for r in rows)
    _check(summary, "d_LY_matches_rho", err <= 1e-6, err)
    return summary


def run_lyapunov(cfg, art):
    ly = cfg["lyapunov"]
    spec = cfgmod.cocycle_spec(cfg, scheme=cfgmod.ulam_scheme(cfg, k=int(ly["k"])))
    n = int(ly["n"])
    lam1 = estimate_lambda1(spec, n)
    lam2, rates = estimate_lambda2(
        spec, n, int(ly["trials"]), int(ly["renorm_every"]), int(ly["seed"]), return_trials=True
    )
    summary = RunSummary("lyapunov", cfg, seed=int(ly["seed"]))
    summary.estimates.update(lambda1_hat=lam1, lambda2_hat=lam2, n=n)
    summary.tables["lambda2_trials"] = [{"trial": i, "rate": r} for i, r in enumerate(rates)]
    art.table("lambda2_trials.csv", ["trial", "rate"], list(enumerate(rates)))
    _check(summary, "lambda1_zero", abs(lam1) <= 1e-8, lam1)
    _check(summary, "lambda2_below_lambda1", lam2 <= lam1 + 1e-12, lam2)
    return summary


def run_validate_map(cfg, art):
    v = cfg["validation"]
    spec = cfgmod.cocycle_spec(cfg)
    omegas = spec.fibers(int(v["fibers"]))
    summary = RunSummary("validate-map", cfg)
    rows = []
    for w in omegas:
        rep = validate_bounds(
            spec.family(w),
            int(v["grid_points_per_branch"]),
            float(v["mu"]),
            float(v["D"]),
            int(v["b"]),
        )
        d = rep.as_dict()
        d["omega"] = float(w)
        rows.append(d)
    summary.tables["fibers"] = rows
    art.table(
        "validation.csv",
        ["omega", "n_branches", "min_slope", "norm_proxy", "passed"],
        [(r["omega"], r["n_branches"], r["min_slope"], r["norm_proxy"], r["passed"]) for r in rows],
    )
    min_slope = min(r["min_slope"] for r in rows)
    summary.estimates["min_slope"] = min_slope
    _check(summary, "bounds", all(r["passed"] for r in rows), min_slope)
    for r in rows:
        status = "pass" if r["passed"] else "FAIL " + "; ".join(r["failures"])
        print(f"omega={r['omega']:.6f} min_slope={r['min_slope']:.4f} "
              f"norm={r['norm_proxy']:.3f} {status}")
    return summary


def run_norms_lab(cfg, art):
    params = cfgmod.sobolev_params(cfg)
    n = int(cfg["sobolev"]["grid_n"])
    ks = [4, 8, 16, 32, 64, 128, 256, 512, 1024]
    ks = [k for k in ks if k <= n // 4]
    ratios = projection_ratio_study(ks, n, params)
    eps = [2.0**-e for e in range(4, 11)]
    s_err, s_slope = smoothing_rate_study(eps, n, params)
    ek = [k for k in (8, 16, 32, 64, 128, 256, 512) if k <= n // 8]
    u_err, u_slope = projection_error_study(ek, n, params)
    summary = RunSummary("norms-lab", cfg)
    summary.tables["projection_ratios"] = ratios
    summary.tables["smoothing_errors"] = [{"eps": e, "err": v} for e, v in zip(eps, s_err)]
    summary.tables["projection_errors"] = [{"k": k, "err": v} for k, v in zip(ek, u_err)]
    spread = {name: max(v) / min(v) for name, v in ratios.items()}
    summary.estimates.update(ratio_spread=spread, smoothing_slope=s_slope, projection_slope=u_slope)
    art.table(
        "projection_ratios.csv",
        ["k"] + list(ratios),
        [(k, *(ratios[name][i] for name in ratios)) for i, k in enumerate(ks)],
    )
    art.table("smoothing_errors.csv", ["eps", "err"], list(zip(eps, s_err)))
    art.table("projection_errors.csv", ["k", "err"], list(zip(ek, u_err)))
    _check(summary, "projection_ratio_spread", max(spread.values()) <= 4.0, spread)
    _check(summary, "smoothing_slope", s_slope >= (params.t - params.t_weak) / 2 - 0.05, s_slope)
    return summary


EXPERIMENTS = {
    "reproduce-figure": run_reproduce_figure,
    "ulam-sweep": run_ulam_sweep,
    "fourier-sweep": run_fourier_sweep,
    "convolution-study": run_convolution_study,
    "static-study": run_static_study,
    "lyapunov": run_lyapunov,
    "validate-map": run_validate_map,
    "norms-lab": run_norms_lab,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(
        prog="rand-acim",
        description="Approximate random acims of cocycles of expanding circle maps.",
    )
    p.add_argument("experiment", help="one of: " + ", ".join(EXPERIMENTS))
    p.add_argument("--config", help="YAML or JSON config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--k", type=int, help="Ulam bin count")
    p.add_argument("--modes", type=int, help="Fourier truncation K")
    p.add_argument("--steps", type=int, help="number of cocycle steps")
    p.add_argument("--plot", action="store_true", default=None, help="write SVG charts")
    return p


def _overrides(args):
    over = {"experiment": args.experiment}
    if args.out is not None:
        over["output_dir"] = args.out
    if args.plot:
        over["plot"] = True
    scheme = {}
    if args.k is not None:
        scheme["ulam"] = {"k": args.k}
        over["lyapunov"] = {"k": args.k}
    if args.modes is not None:
        scheme["galerkin"] = {"K": args.modes}
    if args.steps is not None:
        scheme["steps"] = args.steps
    if scheme:
        over["scheme"] = scheme
    return over


def run(cfg):
    """Run a resolved configuration; returns the exit status."""
    out = Path(cfg["output_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"rand-acim: cannot create {out}: {exc}", file=sys.stderr)
        return 2
    try:
        lock = OutputLock(out).__enter__()
    except OutputLocked as exc:
        print(f"rand-acim: {exc}", file=sys.stderr)
        return 2
    art = Artifacts(out)
    try:
        summary = EXPERIMENTS[cfg["experiment"]](cfg, art)
        summary.config = cfg
        failed = _failed_checks(summary)
        summary.to_json(art.path(SUMMARY_NAME))
        if failed:
            raise InvariantFailure("checks failed: " + ", ".join(failed))
    except (InvariantFailure, *NUMERICAL_ERRORS) as exc:
        art.rollback()
        print(f"rand-acim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, cfgmod.ConfigError) as exc:
        art.rollback()
        print(f"rand-acim: configuration error: {exc}", file=sys.stderr)
        return 2
    except BaseException:
        art.rollback()
        raise
    finally:
        lock.__exit__(None, None, None)
    print(f"rand-acim: {cfg['experiment']} wrote {len(art.written)} files to {out}")
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    if args.experiment not in EXPERIMENTS:
        parser.print_usage(sys.stderr)
        print(f"rand-acim: unknown experiment {args.experiment!r}", file=sys.stderr)
        return 2
    try:
        cfg = cfgmod.load_config(args.config, _overrides(args))
    except cfgmod.ConfigError as exc:
        print(f"rand-acim: configuration error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
