"""Numerical checks of weighted Hardy-Sobolev type inequalities driven by conformal vector fields."""
from . import kernels
from .catalog import CATALOG, build_entry, default_entries
from .errors import CKNError
from .fields import FieldSpec, classify
from .geometry import ManifoldChart
from .inequalities import (
    CKNParams,
    InequalityReport,
    XiaParams,
    costa_quadratic_check,
    evaluate_ckn,
    evaluate_euclidean_ckn,
    evaluate_hardy,
    evaluate_uncertainty,
    evaluate_xia,
    proof_chain_trace,
)
from .quadrature import IntegralResult, QuadratureScheme, integrate
from .sharpness import SharpnessStudy, sweep
from .testfunctions import ExtremalFamily, TestFunction, log_cutoff, power_cutoff, smooth_bump

__version__ = "0.1.0"

__all__ = [
    "CATALOG", "CKNError", "CKNParams", "ExtremalFamily", "FieldSpec", "InequalityReport", "IntegralResult",
    "ManifoldChart", "QuadratureScheme", "SharpnessStudy", "TestFunction", "XiaParams", "build_entry",
    "classify", "costa_quadratic_check", "default_entries", "evaluate_ckn", "evaluate_euclidean_ckn",
    "evaluate_hardy", "evaluate_uncertainty", "evaluate_xia", "integrate", "kernels", "log_cutoff",
    "power_cutoff", "proof_chain_trace", "smooth_bump", "sweep", "__version__",
]
