"""Experiment configuration: defaults, YAML/JSON file loading, flag overrides.

Precedence is flags > file > defaults.  The fully resolved mapping is echoed in
every run summary so a run can be repeated exactly.
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .cocycle import DEFAULT_SEED, CocycleSpec, GalerkinScheme, UlamScheme
from .driving import DEFAULT_ALPHA, RotationBase, load_orbit_file
from .maps import FAMILY_NAMES, make_family
from .sobolev import SobolevParams

EXPERIMENTS = (
    "reproduce-figure",
    "ulam-sweep",
    "fourier-sweep",
    "convolution-study",
    "static-study",
    "lyapunov",
    "validate-map",
    "norms-lab",
)


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


DEFAULTS = {
    "experiment": None,
    "output_dir": "rand-acim-out",
    "plot": False,
    "family": {"name": "example35", "params": {}},
    "base": {"alpha": DEFAULT_ALPHA, "omega0": 0.0, "orbit_file": None},
    "scheme": {
        "ulam": {"k": 1000, "q": 1000, "assembly": "test-point"},
        "galerkin": {"enabled": True, "K": 100, "tol": 1e-9},
        "steps": 22,
        "record_at": [20, 21, 22],
    },
    "sobolev": {"p": 2.0, "t": 0.4, "t_weak": 0.2, "grid_n": 4096},
    "studies": {
        "step": 20,
        "ulam_k": [125, 250, 500],
        "reference_k": 1000,
        "fejer_K": [8, 16, 32, 64, 128],
        "fourier_K": [10, 25, 50, 100],
        "rho": [0.1, 0.01, 0.001, 0.0001],
        "stationarity_step": 26,
    },
    "lyapunov": {"n": 200, "trials": 10, "renorm_every": 1, "seed": DEFAULT_SEED, "k": 500},
    "validation": {
        "grid_points_per_branch": 10000,
        "mu": 2.0,
        "D": 20.0,
        "b": 3,
        "fibers": 5,
    },
    "thresholds": {"cross_scheme_l1": 0.2, "stationarity_l1": 1e-3},
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, overrides=None):
    """Resolve a configuration mapping from defaults, an optional file and overrides."""
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
    cfg = _merge(DEFAULTS, data)
    cfg = _merge(cfg, overrides or {})
    steps = ((overrides or {}).get("scheme") or {}).get("steps")
    if steps is not None:
        # a shorter run keeps only the recordable steps
        cfg["scheme"]["record_at"] = [s for s in cfg["scheme"]["record_at"] if s <= steps] or [steps]
    validate(cfg)
    return cfg


def validate(cfg):
    """Check every block before any computation starts."""
    if cfg["experiment"] is not None and cfg["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg['experiment']!r}")
    fam = cfg["family"]
    if fam.get("name") not in FAMILY_NAMES:
        raise ConfigError(f"family.name must be one of {FAMILY_NAMES}")
    if fam["name"] == "custom-polynomial":
        params = fam.get("params") or {}
        if "breakpoints" not in params or "coefficients" not in params:
            raise ConfigError("custom-polynomial needs params.breakpoints and params.coefficients")
    try:
        build_family(cfg)
        build_base(cfg)
        ulam_scheme(cfg)
        galerkin_scheme(cfg)
        sobolev_params(cfg)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    sch = cfg["scheme"]
    if int(sch["steps"]) < 1:
        raise ConfigError("scheme.steps must be at least 1")
    if any(not 0 <= int(s) <= int(sch["steps"]) for s in sch["record_at"]):
        raise ConfigError("scheme.record_at entries must lie in [0, steps]")
    st = cfg["studies"]
    if st["ulam_k"] and int(st["reference_k"]) < 2 * max(st["ulam_k"]):
        raise ConfigError("studies.reference_k must be at least twice max(studies.ulam_k)")
    if any(float(r) < 0 for r in st["rho"]):
        raise ConfigError("studies.rho entries must be nonnegative")
    ly = cfg["lyapunov"]
    if int(ly["n"]) < 1 or int(ly["trials"]) < 1 or int(ly["renorm_every"]) < 1:
        raise ConfigError("lyapunov.n, trials and renorm_every must be positive")
    if int(cfg["validation"]["grid_points_per_branch"]) < 2:
        raise ConfigError("validation.grid_points_per_branch must be at least 2")


def build_family(cfg):
    fam = cfg["family"]
    return make_family(fam["name"], fam.get("params") or {})


def build_base(cfg):
    base = cfg["base"]
    if base.get("orbit_file"):
        return load_orbit_file(base["orbit_file"])
    return RotationBase(float(base["alpha"]), float(base["omega0"]) % 1.0)


def ulam_scheme(cfg, k=None):
    u = cfg["scheme"]["ulam"]
    return UlamScheme(int(k or u["k"]), int(u["q"]), u["assembly"])


def galerkin_scheme(cfg, cesaro=True, K=None):
    g = cfg["scheme"]["galerkin"]
    return GalerkinScheme(int(K or g["K"]), float(g["tol"]), cesaro)


def sobolev_params(cfg):
    s = cfg["sobolev"]
    return SobolevParams(float(s["p"]), float(s["t"]), float(s["t_weak"]))


def cocycle_spec(cfg, scheme=None, steps=None):
    return CocycleSpec(
        build_family(cfg),
        build_base(cfg),
        scheme or ulam_scheme(cfg),
        int(steps or cfg["scheme"]["steps"]),
    )
