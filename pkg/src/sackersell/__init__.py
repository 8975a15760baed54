"""Dichotomy spectra, dichotomy certificates and stability checks for
nonautonomous ordinary differential equations."""
from __future__ import annotations

__version__ = "0.1.0"

from .dichotomy import DichotomyCertificate, DichotomyConfig, fit_certificate, has_dichotomy, roughness_bounds
from .estimators import DichotomyEstimator, SpectrumEstimator, UASEstimator
from .expr import parse
from .integrate import qr_evolve, solve, transition
from .nmyc import NMYCConfig, check_hypotheses, verify_uas
from .spectrum import SpectrumConfig, SpectrumEstimate, check_shift_law, check_triangular_union, sacker_sell
from .systems import LinearSystem, NonlinearSystem, builtin, constant_system, linearize_along, shift

__all__ = [
    "__version__",
    "DichotomyCertificate",
    "DichotomyConfig",
    "DichotomyEstimator",
    "LinearSystem",
    "NMYCConfig",
    "NonlinearSystem",
    "SpectrumConfig",
    "SpectrumEstimate",
    "SpectrumEstimator",
    "UASEstimator",
    "builtin",
    "check_hypotheses",
    "check_shift_law",
    "check_triangular_union",
    "constant_system",
    "fit_certificate",
    "qr_evolve",
    "has_dichotomy",
    "linearize_along",
    "parse",
    "roughness_bounds",
    "sacker_sell",
    "shift",
    "solve",
    "transition",
    "verify_uas",
]
