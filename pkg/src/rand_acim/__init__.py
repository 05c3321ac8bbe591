"""Random absolutely continuous invariant densities of cocycles of expanding circle maps.

Ulam and Fourier-Galerkin discretisations of the fiber transfer operators,
driven by an irrational rotation or a supplied orbit, with stability studies
and fractional Sobolev norm tools.
"""

from .cocycle import (
    CocycleSpec,
    GalerkinScheme,
    RunSummary,
    UlamScheme,
    compare_densities,
    estimate_lambda1,
    estimate_lambda2,
    push_forward,
)
from .driving import RotationBase, SequenceBase
from .fourier import FourierDensity, galerkin_matrix
from .maps import PiecewiseMap, make_family, validate_bounds
from .ulam import BinnedDensity, assemble_ulam_exact, assemble_ulam_testpoints

__version__ = "0.1.0"

__all__ = [
    "BinnedDensity",
    "CocycleSpec",
    "FourierDensity",
    "GalerkinScheme",
    "PiecewiseMap",
    "RotationBase",
    "RunSummary",
    "SequenceBase",
    "UlamScheme",
    "assemble_ulam_exact",
    "assemble_ulam_testpoints",
    "compare_densities",
    "estimate_lambda1",
    "estimate_lambda2",
    "galerkin_matrix",
    "make_family",
    "push_forward",
    "validate_bounds",
]
