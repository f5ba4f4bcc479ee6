"""Analytic Gaussian-measure propagation for linear delay equations."""

from .covariance import (GaussianState, SigmaCurve, factorized_sigma2,
                         lag_cov_curve, propagate_state, r_t, sigma2_curve,
                         wiener_closed_form, write_r_slice)
from .densities import conditional_mean_check, joint_density, marginal_density
from .kernels import (CosineKernel, CovKernel, DegenerateCosineKernel,
                      ProductSeparableKernel, ShiftedWienerKernel,
                      TabulatedKernel)
from .linear import LinearDdeParams, fundamental_prefix, fundamental_solution
from .sampling import SampledHistory, sample_gaussian_history
from .stability import StabilityClass, hayes_stable, rightmost_root

__all__ = [
    "CosineKernel", "CovKernel", "DegenerateCosineKernel", "GaussianState",
    "LinearDdeParams", "ProductSeparableKernel", "SampledHistory",
    "ShiftedWienerKernel", "SigmaCurve", "StabilityClass", "TabulatedKernel",
    "conditional_mean_check", "factorized_sigma2", "fundamental_prefix",
    "fundamental_solution", "hayes_stable", "joint_density", "lag_cov_curve",
    "marginal_density", "propagate_state", "r_t", "rightmost_root",
    "sample_gaussian_history", "sigma2_curve", "wiener_closed_form",
    "write_r_slice",
]
