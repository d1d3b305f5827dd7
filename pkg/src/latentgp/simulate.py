"""Ground-truth data generation for the simulation scenarios.

Two generating processes over latent inputs ``x ~ Uniform(0, 10)``:

``pcgp``
    per output dimension, independent exact GP draws for two blocks (f, g)
    with half-normal hyperparameter draws, mixed across dimensions by the
    Cholesky factors of LKJ(1) correlation matrices, plus Gaussian noise.
``dgp``
    per dimension, a joint exact draw of (f, f') from the 2N x 2N derivative
    SE covariance; the marginal SD and noise SD of the f block are a fixed
    multiple (``scale_lambda``) of the derivative-block draws, and a single
    correlation matrix mixes both halves so the derivative relationship
    survives the linear combination.

Noisy input measurements are generated once per dataset:
``x_tilde = x + Normal(0, s^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import stats

from .exceptions import InvalidInput
from .kernels import (
    SQUARED_EXPONENTIAL,
    KernelSpec,
    cholesky_with_jitter,
    gram_matrix,
    joint_derivative_gram,
)
from .model import HalfNormal

__all__ = ["PCGP", "DGP", "ScenarioConfig", "SimDataset", "generate",
           "sample_lkj", "sample_half_normal", "pcgp_table", "dgp_table"]

PCGP = "pcgp"
DGP = "dgp"


def pcgp_table() -> dict:
    """Generating-process hyperparameter distributions, composite scenario."""
    return {
        "rho_f": HalfNormal(1.0, 0.05),
        "rho_g": HalfNormal(0.7, 0.05),
        "alpha_f": HalfNormal(3.0, 0.25),
        "alpha_g": HalfNormal(2.0, 0.25),
        "sigma_f": HalfNormal(1.0, 0.25),
        "sigma_g": HalfNormal(0.75, 0.25),
        "mean": HalfNormal(0.0, 5.0),
    }


def dgp_table() -> dict:
    """Generating-process hyperparameter distributions, derivative scenario.

    The f-block scales are ``scale_lambda`` times the derivative draws, so
    only the derivative-block distributions appear here.
    """
    return {
        "rho": HalfNormal(1.0, 0.05),
        "alpha1": HalfNormal(3.0, 0.25),
        "sigma1": HalfNormal(1.0, 0.25),
        "mean": HalfNormal(0.0, 5.0),
    }


@dataclass(frozen=True)
class ScenarioConfig:
    process: str
    N: int
    D: int
    seed: int
    scale_lambda: float = 10.0
    s: float = 0.3
    x_range: tuple = (0.0, 10.0)
    table: Mapping | None = None
    zero_noise: bool = False      # test hook: emit noiseless observations
    fixed_x: tuple | None = None  # test hook: pin the latent inputs

    def __post_init__(self):
        if self.process not in (PCGP, DGP):
            raise InvalidInput(f"unknown process {self.process!r}")
        if self.N < 2 or self.D < 1:
            raise InvalidInput("need N >= 2 and D >= 1")
        if not self.scale_lambda > 0:
            raise InvalidInput("scale_lambda must be positive")
        if self.table is None:
            object.__setattr__(
                self, "table", pcgp_table() if self.process == PCGP else dgp_table()
            )


@dataclass(frozen=True)
class SimDataset:
    process: str
    seed: int
    s: float
    scale_lambda: float
    x_true: np.ndarray
    x_tilde: np.ndarray
    y_f: np.ndarray
    y_g: np.ndarray
    truth: dict = field(default_factory=dict)


def sample_half_normal(loc: float, scale: float, rng: np.random.Generator,
                       size=None):
    """Draw from Normal(loc, scale^2) truncated to (0, inf) via inverse CDF."""
    if not scale > 0:
        raise InvalidInput("half-normal scale must be positive")
    c0 = stats.norm.cdf(-loc / scale)
    u = rng.uniform(size=size)
    return loc + scale * stats.norm.ppf(c0 + u * (1.0 - c0))


def sample_lkj(D: int, eta: float, rng: np.random.Generator) -> np.ndarray:
    """Correlation matrix draw from LKJ(eta) via the onion method."""
    if D < 1:
        raise InvalidInput("dimension must be at least 1")
    if not eta > 0:
        raise InvalidInput("eta must be positive")
    if D == 1:
        return np.ones((1, 1))
    factor = np.eye(D)
    beta = eta + (D - 2.0) / 2.0
    r12 = 2.0 * rng.beta(beta, beta) - 1.0
    factor[0, 1] = r12
    factor[1, 1] = np.sqrt(1.0 - r12**2)
    for m in range(2, D):
        beta -= 0.5
        y = rng.beta(m / 2.0, beta)
        z = rng.standard_normal(m)
        z /= np.linalg.norm(z)
        factor[:m, m] = np.sqrt(y) * z
        factor[m, m] = np.sqrt(1.0 - y)
    return factor.T @ factor


def _draw_table(table, keys, D, rng):
    return {k: sample_half_normal(table[k].loc, table[k].scale, rng, size=D)
            for k in keys}


def generate(cfg: ScenarioConfig) -> SimDataset:
    """Simulate one dataset from the configured generating process."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
    lo, hi = cfg.x_range
    if cfg.fixed_x is not None:
        x_true = np.asarray(cfg.fixed_x, dtype=float)
    else:
        x_true = np.sort(rng.uniform(lo, hi, size=cfg.N))
    x_tilde = x_true + rng.normal(0.0, cfg.s, size=cfg.N)
    mean_prior = cfg.table["mean"]
    mu_f = sample_half_normal(mean_prior.loc, mean_prior.scale, rng, size=cfg.D)
    mu_g = sample_half_normal(mean_prior.loc, mean_prior.scale, rng, size=cfg.D)

    if cfg.process == PCGP:
        hyp = _draw_table(cfg.table, ("rho_f", "rho_g", "alpha_f", "alpha_g",
                                      "sigma_f", "sigma_g"), cfg.D, rng)
        corr_f = sample_lkj(cfg.D, 1.0, rng)
        corr_g = sample_lkj(cfg.D, 1.0, rng)
        f = np.empty((cfg.N, cfg.D))
        g = np.empty((cfg.N, cfg.D))
        for d in range(cfg.D):
            for out, rho, alpha in ((f, hyp["rho_f"][d], hyp["alpha_f"][d]),
                                    (g, hyp["rho_g"][d], hyp["alpha_g"][d])):
                spec = KernelSpec(SQUARED_EXPONENTIAL, alpha, rho)
                chol, _ = cholesky_with_jitter(gram_matrix(spec, x_true), alpha**2)
                out[:, d] = chol @ rng.standard_normal(cfg.N)
        f_mix = f @ np.linalg.cholesky(corr_f).T
        g_mix = g @ np.linalg.cholesky(corr_g).T
        sigma_f, sigma_g = hyp["sigma_f"], hyp["sigma_g"]
        truth = dict(hyp, mu_f=mu_f, mu_g=mu_g, C_f=corr_f, C_g=corr_g)
    else:
        hyp = _draw_table(cfg.table, ("rho", "alpha1", "sigma1"), cfg.D, rng)
        hyp["alpha"] = cfg.scale_lambda * hyp["alpha1"]
        hyp["sigma"] = cfg.scale_lambda * hyp["sigma1"]
        corr = sample_lkj(cfg.D, 1.0, rng)
        f = np.empty((cfg.N, cfg.D))
        g = np.empty((cfg.N, cfg.D))
        for d in range(cfg.D):
            # joint_derivative_gram already carries enough diagonal jitter
            joint = joint_derivative_gram(hyp["alpha"][d], hyp["rho"][d], x_true)
            draw = np.linalg.cholesky(joint) @ rng.standard_normal(2 * cfg.N)
            f[:, d] = draw[:cfg.N]
            g[:, d] = draw[cfg.N:]
        mix = np.linalg.cholesky(corr).T
        f_mix = f @ mix
        g_mix = g @ mix
        sigma_f, sigma_g = hyp["sigma"], hyp["sigma1"]
        truth = dict(hyp, mu_f=mu_f, mu_g=mu_g, C=corr)

    noise_f = 0.0 if cfg.zero_noise else rng.normal(0.0, 1.0, size=(cfg.N, cfg.D)) * sigma_f
    noise_g = 0.0 if cfg.zero_noise else rng.normal(0.0, 1.0, size=(cfg.N, cfg.D)) * sigma_g
    y_f = mu_f[None, :] + f_mix + noise_f
    y_g = mu_g[None, :] + g_mix + noise_g
    if not (np.all(np.isfinite(y_f)) and np.all(np.isfinite(y_g))):
        raise InvalidInput("generated dataset contains non-finite values")
    return SimDataset(
        process=cfg.process, seed=cfg.seed, s=cfg.s, scale_lambda=cfg.scale_lambda,
        x_true=x_true, x_tilde=x_tilde, y_f=y_f, y_g=y_g,
        truth={k: np.asarray(v) for k, v in truth.items()},
    )
