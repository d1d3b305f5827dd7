"""Closed-form spectral densities and a quadrature Fourier-transform oracle.

The spectral density convention is ``S_k(w) = int exp(-i w r) k(r) dr``, the
one under which the SE density is ``sqrt(2 pi) alpha^2 rho exp(-rho^2 w^2 / 2)``
and under which the reduced-rank eigenexpansion reconstructs the kernel.  For
an admissible derivative pair (a, b) the density picks up a factor
``w^(a+b)`` with positive sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import simpson
from scipy.special import gamma as _gamma_fn

from .exceptions import NotADensity
from .kernels import MATERN, SQUARED_EXPONENTIAL, KernelSpec, is_psd_derivative, kernel_eval

__all__ = ["SpectralDensity", "spectral_eval", "fourier_oracle", "FourierQuadrature"]


@dataclass(frozen=True)
class SpectralDensity:
    """Spectral density of a (derivative) stationary kernel.

    ``base`` carries the family and hyperparameters with derivative orders
    forced to (0, 0); ``deriv`` holds the derivative pair whose density is
    ``w^(a+b)`` times the base density.
    """

    base: KernelSpec
    deriv: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.base.deriv != (0, 0):
            object.__setattr__(self, "base", self.base.with_deriv(0, 0))
        if not is_psd_derivative(*self.deriv):
            raise NotADensity(
                f"derivative orders {self.deriv} do not yield a nonnegative density"
            )
        if self.base.family == MATERN:
            a, b = self.deriv
            if a + b >= 2 * self.base.nu:
                raise NotADensity(
                    f"Matern moment condition a+b < 2*nu fails for {self.deriv} "
                    f"with nu={self.base.nu}"
                )

    def __call__(self, omega):
        return spectral_eval(self, omega)


def _base_density(spec: KernelSpec, omega):
    w2 = np.square(omega)
    if spec.family == SQUARED_EXPONENTIAL:
        return math.sqrt(2.0 * math.pi) * spec.alpha**2 * spec.rho * np.exp(
            -0.5 * spec.rho**2 * w2
        )
    nu = spec.nu
    norm = (
        spec.alpha**2
        * 2.0
        * math.sqrt(math.pi)
        * _gamma_fn(nu + 0.5)
        * (2.0 * nu) ** nu
        / (_gamma_fn(nu) * spec.rho ** (2.0 * nu))
    )
    return norm * (2.0 * nu / spec.rho**2 + w2) ** (-(nu + 0.5))


def spectral_eval(sd: SpectralDensity, omega):
    """Evaluate the spectral density at angular frequency ``omega``.

    For derivative orders (a, b) the value is ``w^(a+b)`` times the base
    density, which is real and nonnegative exactly when the orders pass
    :func:`latentgp.kernels.is_psd_derivative`.
    """
    omega = np.asarray(omega, dtype=float)
    val = _base_density(sd.base, omega)
    order = sum(sd.deriv)
    if order:
        val = val * np.abs(omega) ** order
    return val if val.ndim else float(val)


class FourierQuadrature(NamedTuple):
    value: float
    imag_abs: float


def fourier_oracle(spec: KernelSpec, omega: float, half_width: float,
                   nodes: int) -> FourierQuadrature:
    """Numerically Fourier-transform a kernel: ``int_-W^W exp(-i w r) k(r) dr``.

    Composite Simpson quadrature on ``nodes`` uniform subintervals; test-only
    oracle.  Returns the real part together with the magnitude of the
    imaginary part (which must vanish for admissible derivative orders).
    """
    if half_width < 10.0 * spec.rho:
        raise ValueError("half_width must cover at least 10 length-scales")
    if nodes < 2**12:
        raise ValueError("nodes must be at least 2^12")
    r = np.linspace(-half_width, half_width, int(nodes) + 1)
    integrand = np.exp(-1j * omega * r) * kernel_eval(spec, r, 0.0)
    total = simpson(integrand, x=r)
    return FourierQuadrature(float(np.real(total)), float(abs(np.imag(total))))
