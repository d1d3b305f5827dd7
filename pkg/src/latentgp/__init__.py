"""Reduced-rank Gaussian processes for latent-input estimation.

Composite and derivative covariance structures approximated with a Laplacian
eigenbasis, a gradient-based MCMC sampler, exact-GP oracles, a simulation
harness, and simulation-based calibration checks.
"""

__version__ = "0.1.0"

from .basis import BasisSet, approx_kernel, gp_linear_predict, make_basis, phi_matrix
from .kernels import (
    MATERN,
    SQUARED_EXPONENTIAL,
    KernelSpec,
    gram_matrix,
    is_psd_derivative,
    joint_derivative_gram,
    kernel_eval,
)
from .spectral import SpectralDensity, fourier_oracle, spectral_eval

__all__ = [
    "__version__",
    "BasisSet",
    "KernelSpec",
    "SpectralDensity",
    "MATERN",
    "SQUARED_EXPONENTIAL",
    "approx_kernel",
    "fourier_oracle",
    "gp_linear_predict",
    "gram_matrix",
    "is_psd_derivative",
    "joint_derivative_gram",
    "kernel_eval",
    "make_basis",
    "phi_matrix",
    "spectral_eval",
]
