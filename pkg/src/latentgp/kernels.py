"""Exact stationary covariance functions and their derivative kernels.

Implements the squared-exponential (SE) and Matern families on 1-D inputs,
derivative kernels ``k^(a,b)(x, x') = d^a/dx^a d^b/dx'^b k(x, x')``, the
positive-semidefiniteness test for derivative orders, and exact gram-matrix
construction.  These are the small-N oracles against which the reduced-rank
approximation is validated.

Conventions
-----------
For a stationary kernel ``k(r)`` with ``r = x - x'``, the mixed derivative
satisfies ``k^(a,b)(r) = (-1)^b d^(a+b)k/dr^(a+b)``, so in particular
``k^(1,0)(x, x') = -k^(0,1)(x, x')`` and ``k^(1,1)`` is even in ``r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as _gamma_fn
from scipy.special import kv as _bessel_kv

from .exceptions import InvalidInput, NotACovariance, NumericallySingular, UnsupportedKernel

__all__ = [
    "SQUARED_EXPONENTIAL",
    "MATERN",
    "KernelSpec",
    "kernel_eval",
    "is_psd_derivative",
    "gram_matrix",
    "joint_derivative_gram",
    "cholesky_with_jitter",
]

SQUARED_EXPONENTIAL = "squared_exponential"
MATERN = "matern"

# Matern smoothness values with closed-form derivative kernels.
_MATERN_DERIV_NU = (1.5, 2.5)


@dataclass(frozen=True)
class KernelSpec:
    """A stationary 1-D covariance function with derivative orders.

    Parameters
    ----------
    family : str
        ``SQUARED_EXPONENTIAL`` or ``MATERN``.
    alpha : float
        GP marginal SD (output units), > 0.
    rho : float
        Length-scale (input units), > 0.
    deriv : tuple of int
        Derivative orders ``(a, b)`` w.r.t. ``x`` and ``x'``; ``a + b <= 2``.
    nu : float, optional
        Matern smoothness, required (and > 0) for the Matern family.
    """

    family: str
    alpha: float
    rho: float
    deriv: tuple[int, int] = (0, 0)
    nu: float | None = field(default=None)

    def __post_init__(self):
        if self.family not in (SQUARED_EXPONENTIAL, MATERN):
            raise UnsupportedKernel(f"unknown kernel family {self.family!r}")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidInput(f"alpha must be finite and positive, got {self.alpha}")
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise InvalidInput(f"rho must be finite and positive, got {self.rho}")
        a, b = self.deriv
        if a < 0 or b < 0 or a != int(a) or b != int(b):
            raise InvalidInput(f"derivative orders must be nonnegative integers, got {self.deriv}")
        if a + b > 2:
            raise UnsupportedKernel(
                f"derivative orders ({a},{b}) with a+b > 2 are not implemented"
            )
        if self.family == MATERN:
            if self.nu is None or not (np.isfinite(self.nu) and self.nu > 0):
                raise InvalidInput(f"Matern smoothness nu must be positive, got {self.nu}")
            if a + b >= 2 * self.nu:
                raise UnsupportedKernel(
                    f"Matern derivative ({a},{b}) violates the moment condition "
                    f"a+b < 2*nu (nu={self.nu})"
                )
            if (a, b) != (0, 0):
                if (a, b) != (1, 1) or self.nu not in _MATERN_DERIV_NU:
                    raise UnsupportedKernel(
                        f"Matern derivative kernels are implemented only for "
                        f"(a,b)=(1,1) with nu in {_MATERN_DERIV_NU}, got "
                        f"({a},{b}) with nu={self.nu}"
                    )

    def with_deriv(self, a: int, b: int) -> "KernelSpec":
        return KernelSpec(self.family, self.alpha, self.rho, (a, b), self.nu)


def is_psd_derivative(a, b=None) -> bool:
    """Whether the derivative kernel ``k^(a,b)`` is positive semidefinite.

    Accepts either scalar orders ``(a, b)`` or a pair of multi-indices for
    p-dimensional inputs.  The kernel is PSD iff every componentwise sum
    ``a_j + b_j`` is even and ``|a| + 3|b| = 0 (mod 4)``.
    """
    if b is None:
        a, b = a
    a_idx = np.atleast_1d(np.asarray(a, dtype=int))
    b_idx = np.atleast_1d(np.asarray(b, dtype=int))
    if a_idx.shape != b_idx.shape:
        raise InvalidInput("multi-indices a and b must have equal length")
    if np.any(a_idx < 0) or np.any(b_idx < 0):
        raise InvalidInput("derivative orders must be nonnegative")
    if np.any((a_idx + b_idx) % 2 != 0):
        return False
    return bool((a_idx.sum() + 3 * b_idx.sum()) % 4 == 0)


def _se_dr(order: int, r, alpha: float, rho: float):
    """d^order/dr^order of the SE kernel, orders 0..2."""
    e = alpha**2 * np.exp(-0.5 * (r / rho) ** 2)
    if order == 0:
        return e
    if order == 1:
        return -(r / rho**2) * e
    if order == 2:
        return (r**2 - rho**2) / rho**4 * e
    raise UnsupportedKernel(f"SE derivative of order {order} not implemented")


def _matern_base(r, alpha: float, rho: float, nu: float):
    scaled = math.sqrt(2.0 * nu) / rho * np.abs(r)
    if nu == 0.5:
        return alpha**2 * np.exp(-scaled)
    if nu == 1.5:
        return alpha**2 * (1.0 + scaled) * np.exp(-scaled)
    if nu == 2.5:
        return alpha**2 * (1.0 + scaled + scaled**2 / 3.0) * np.exp(-scaled)
    # General smoothness through the modified Bessel function; the r -> 0
    # limit equals alpha^2 and kv overflows there, so patch it explicitly.
    scaled = np.asarray(scaled, dtype=float)
    tiny = scaled < 1e-12
    safe = np.where(tiny, 1.0, scaled)
    val = alpha**2 * (2.0 ** (1.0 - nu) / _gamma_fn(nu)) * safe**nu * _bessel_kv(nu, safe)
    out = np.where(tiny, alpha**2, val)
    return out if out.ndim else float(out)


def _matern_k11(r, alpha: float, rho: float, nu: float):
    """Cov(f'(x), f'(x')) for Matern, nu in {3/2, 5/2}."""
    t = math.sqrt(2.0 * nu) / rho
    a = t * np.abs(r)
    if nu == 1.5:
        return alpha**2 * t**2 * (1.0 - a) * np.exp(-a)
    if nu == 2.5:
        return alpha**2 * (t**2 / 3.0) * (1.0 + a - a**2) * np.exp(-a)
    raise UnsupportedKernel(f"Matern (1,1) kernel not implemented for nu={nu}")


def kernel_eval(spec: KernelSpec, x, xp):
    """Evaluate ``k^(a,b)(x, x')`` for the given spec.

    ``x`` and ``xp`` broadcast; non-finite inputs raise :class:`InvalidInput`.
    """
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xp))):
        raise InvalidInput("kernel inputs must be finite")
    r = x - xp
    a, b = spec.deriv
    if spec.family == SQUARED_EXPONENTIAL:
        val = (-1.0) ** b * _se_dr(a + b, r, spec.alpha, spec.rho)
    else:
        if (a, b) == (0, 0):
            val = _matern_base(r, spec.alpha, spec.rho, spec.nu)
        else:
            val = _matern_k11(r, spec.alpha, spec.rho, spec.nu)
    return val if np.ndim(val) else float(val)


def gram_matrix(spec: KernelSpec, xs) -> np.ndarray:
    """Exact N x N gram matrix ``G[i, j] = k^(a,b)(xs[i], xs[j])``.

    Requires a PSD derivative pair (see :func:`is_psd_derivative`); the result
    is exactly symmetric because each unordered pair is evaluated once.
    """
    if not is_psd_derivative(*spec.deriv):
        raise NotACovariance(
            f"derivative orders {spec.deriv} do not yield a covariance kernel"
        )
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or xs.size < 1:
        raise InvalidInput("xs must be a nonempty 1-D array")
    n = xs.size
    gram = np.empty((n, n))
    iu = np.triu_indices(n)
    vals = kernel_eval(spec, xs[iu[0]], xs[iu[1]])
    gram[iu] = vals
    gram.T[iu] = vals
    return gram


def cholesky_with_jitter(mat: np.ndarray, scale: float,
                         start: float = 1e-8, cap: float = 1e-4):
    """Lower Cholesky factor of ``mat`` with escalating diagonal jitter.

    Jitter starts at ``start * scale`` and grows tenfold up to ``cap * scale``
    before :class:`NumericallySingular` is raised.  Returns ``(L, jitter)``.
    """
    jitter = start * scale
    eye = np.eye(mat.shape[0])
    while True:
        try:
            return np.linalg.cholesky(mat + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > cap * scale * (1.0 + 1e-12):
                raise NumericallySingular(
                    f"Cholesky failed at maximum jitter {cap * scale:g}"
                ) from None


def joint_derivative_gram(alpha: float, rho: float, xs,
                          jitter: float = 1e-8) -> np.ndarray:
    """Joint 2N x 2N covariance of ``(f, f')`` under the SE kernel.

    The upper-left block is the SE gram, the lower-right block the (1,1)
    derivative gram, and the upper-right block holds
    ``Cov(f(x_i), f'(x_j)) = (x_i - x_j)/rho^2 * k(x_i - x_j)``, with the
    lower-left block its transpose.  ``jitter * alpha^2`` is added to the
    diagonal and factorizability is verified with tenfold escalation up to
    ``1e-4 * alpha^2``.
    """
    xs = np.asarray(xs, dtype=float)
    base = KernelSpec(SQUARED_EXPONENTIAL, alpha, rho)
    k00 = gram_matrix(base, xs)
    k11 = gram_matrix(base.with_deriv(1, 1), xs)
    # Cov(f(x_i), f'(x_j)) = d/dx_j k(x_i, x_j) = k^(0,1)(x_i, x_j).
    cross = kernel_eval(base.with_deriv(0, 1), xs[:, None], xs[None, :])
    joint = np.block([[k00, cross], [cross.T, k11]])
    chol, used = cholesky_with_jitter(joint, alpha**2, start=jitter)
    joint[np.diag_indices_from(joint)] += used
    return joint
