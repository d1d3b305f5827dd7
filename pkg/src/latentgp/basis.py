"""Laplacian eigenpairs on [-L, L] and the reduced-rank GP representation.

The eigenvalue problem with Dirichlet boundary conditions on ``[-L, L]`` has
solutions ``lambda_j = (j pi / (2 L))^2`` and
``phi_j(x) = sqrt(1/L) sin(sqrt(lambda_j) (x + L))``.  A stationary kernel is
reconstructed from the first M eigenpairs weighted by its spectral density,
and a GP draw is the corresponding linear combination with standard-normal
weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidDomain, ShapeError
from .spectral import SpectralDensity, spectral_eval

__all__ = ["BasisSet", "make_basis", "phi_matrix", "clamp_count",
           "approx_kernel", "gp_linear_predict"]

# Clipped inputs sit this relative distance inside the boundary.
_CLAMP_MARGIN = 1e-9


@dataclass(frozen=True)
class BasisSet:
    """Eigenpairs of the Laplacian on [-L, L] for a centered input domain."""

    L: float
    M: int
    center: float
    eigenvalues: np.ndarray = field(init=False, repr=False)
    sqrt_eigenvalues: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        j = np.arange(1, self.M + 1)
        lam = (j * np.pi / (2.0 * self.L)) ** 2
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "sqrt_eigenvalues", np.sqrt(lam))


def make_basis(x_lo: float, x_hi: float, c: float, M: int) -> BasisSet:
    """Build a basis for inputs in ``[x_lo, x_hi]`` with boundary factor ``c``.

    The domain is centered at its midpoint and the boundary is
    ``L = c * (x_hi - x_lo) / 2``, so ``c > 1`` keeps all inputs strictly
    interior.
    """
    if not x_hi > x_lo:
        raise InvalidDomain(f"degenerate input range [{x_lo}, {x_hi}]")
    if not c > 1.0:
        raise InvalidDomain(f"boundary factor c must exceed 1, got {c}")
    if M < 1:
        raise InvalidDomain(f"basis count M must be at least 1, got {M}")
    center = 0.5 * (x_lo + x_hi)
    return BasisSet(L=c * (x_hi - x_lo) / 2.0, M=int(M), center=center)


def _centered_clipped(basis: BasisSet, xs) -> np.ndarray:
    bound = basis.L * (1.0 - _CLAMP_MARGIN)
    return np.clip(np.asarray(xs, dtype=float) - basis.center, -bound, bound)


def phi_matrix(basis: BasisSet, xs) -> np.ndarray:
    """N x M matrix of eigenfunction values at the (centered) inputs.

    Inputs falling outside (-L, L) after centering are clipped just inside
    the boundary rather than rejected; see :func:`clamp_count`.
    """
    xt = _centered_clipped(basis, xs)
    arg = (xt[..., None] + basis.L) * basis.sqrt_eigenvalues
    return np.sqrt(1.0 / basis.L) * np.sin(arg)


def clamp_count(basis: BasisSet, xs) -> int:
    """Number of inputs that phi_matrix would clip to the boundary."""
    xt = np.asarray(xs, dtype=float) - basis.center
    bound = basis.L * (1.0 - _CLAMP_MARGIN)
    return int(np.count_nonzero(np.abs(xt) > bound))


def approx_kernel(basis: BasisSet, sd: SpectralDensity, x, xp):
    """Reduced-rank kernel value ``sum_j S(sqrt(lambda_j)) phi_j(x) phi_j(xp)``."""
    weights = spectral_eval(sd, basis.sqrt_eigenvalues)
    px = phi_matrix(basis, x)
    pxp = phi_matrix(basis, xp)
    # px * pxp first so the value is bitwise symmetric in (x, xp)
    val = np.sum(weights * (px * pxp), axis=-1)
    return val if np.ndim(val) else float(val)


def gp_linear_predict(basis: BasisSet, sd: SpectralDensity, mu: float,
                      beta, xs) -> np.ndarray:
    """Linearized GP values ``mu + sum_j sqrt(S(sqrt(lambda_j))) phi_j(x) beta_j``.

    With ``beta ~ N(0, I)`` the induced covariance is :func:`approx_kernel`.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (basis.M,):
        raise ShapeError(f"beta must have shape ({basis.M},), got {beta.shape}")
    weights = np.sqrt(spectral_eval(sd, basis.sqrt_eigenvalues))
    return mu + phi_matrix(basis, xs) @ (weights * beta)
