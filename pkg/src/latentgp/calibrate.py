"""Accuracy metrics and simulation-based calibration.

The calibration check generates J datasets from the model's own prior and
likelihood, refits the model to each, and ranks the prior draw of every
tracked parameter within the (thinned) posterior draws.  Under a correct
sampler the ranks are discrete-uniform; departures are measured by the
most-extreme-ECDF-point statistic

    gamma = 2 min_i min{ Bin(R_i | J, z_i), 1 - Bin(R_i - 1 | J, z_i) },

where the bin edges run over the discrete rank support (``z_i = i/(H+1)``,
``R_i`` the count of ranks below ``i``), which reduces to the classical
``z_j = j/(J+1)`` form when H = J and keeps ``R_i ~ Binomial(J, z_i)`` exact
for discrete ranks.  The rejection threshold is Monte-Carlo calibrated under
exact uniformity (cached per (J, H, coverage)), and results are reported as
``log gamma - log threshold`` so negative offsets reject.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .basis import phi_matrix
from .exceptions import InvalidInput, LatentGPError, NameMismatch
from .model import (
    _BLOCKS,
    _FAMILIES,
    LatentModel,
    PriorSet,
    build_spec,
    default_priors,
)
from .sampler import PosteriorDraws, SamplerConfig, sample, worker_count
from .simulate import SimDataset, sample_half_normal, sample_lkj

__all__ = [
    "rmse",
    "sbc_rank",
    "gamma_statistic",
    "gamma_threshold",
    "gamma_log_offset",
    "hyperparameter_rmse",
    "SBCResult",
    "run_sbc",
]

_THRESHOLD_REPLICATES = 50_000
_POOL_CAP = 2000  # pooled rank vectors larger than this are subsampled
_threshold_cache: dict = {}


def rmse(post_draws, truth) -> float:
    """Root mean squared error of draws against a fixed truth vector,
    averaged over all draws and coordinates."""
    draws = np.atleast_2d(np.asarray(post_draws, dtype=float))
    truth = np.asarray(truth, dtype=float)
    if draws.size == 0:
        raise InvalidInput("rmse of empty draws is undefined")
    if draws.shape[1] != truth.size:
        raise InvalidInput(
            f"draws have {draws.shape[1]} coordinates, truth has {truth.size}")
    return float(np.sqrt(np.mean((draws - truth[None, :]) ** 2)))


def sbc_rank(prior_draw: float, posterior_draws, thin: int = 5) -> int:
    """Number of thinned posterior draws strictly below the prior draw."""
    if thin < 1:
        raise InvalidInput("thinning factor must be >= 1")
    thinned = np.asarray(posterior_draws, dtype=float)[::thin]
    return int(np.count_nonzero(thinned < prior_draw))


def _count_below(ranks: np.ndarray, H: int) -> np.ndarray:
    """R_i = #(ranks < i) at every bin edge i = 1..H+1 of the rank support."""
    hist = np.bincount(ranks, minlength=H + 1)
    return np.cumsum(hist)


def _gamma_from_counts(counts: np.ndarray, table: np.ndarray) -> float:
    idx = np.arange(counts.size)
    lower = table[idx, counts]
    upper = 1.0 - np.where(counts > 0, table[idx, np.maximum(counts - 1, 0)], 0.0)
    return float(2.0 * np.minimum(lower, upper).min())


def _binom_table(J: int, H: int) -> np.ndarray:
    """table[i-1, r] = Bin(r | J, z_i) with z_i = i/(H+1), i = 1..H+1.

    Bin edges sit on the discrete rank support so that R_i ~ Binomial(J, z_i)
    holds exactly under uniformity; for H = J this is the classical statistic
    with z_j = j/(J+1).
    """
    z = np.arange(1, H + 2) / (H + 1.0)
    r = np.arange(J + 1)
    return stats.binom.cdf(r[None, :], J, z[:, None])


def gamma_statistic(ranks, H: int) -> float:
    """Most-extreme-ECDF-point uniformity statistic of SBC ranks."""
    ranks = np.asarray(ranks, dtype=int)
    J = ranks.size
    if J < 20:
        raise InvalidInput("gamma statistic requires at least J = 20 ranks")
    if ranks.min() < 0 or ranks.max() > H:
        raise InvalidInput("ranks must lie in [0, H]")
    return _gamma_from_counts(_count_below(ranks, H), _binom_table(J, H))


def gamma_threshold(J: int, H: int, coverage: float = 0.95) -> float:
    """Monte-Carlo critical value: reject uniformity when gamma falls below.

    Simulated once per (J, H, coverage) from exact discrete-uniform ranks
    and cached.
    """
    if J < 20:
        raise InvalidInput("gamma threshold requires at least J = 20 ranks")
    key = (J, H, round(coverage, 6))
    if key in _threshold_cache:
        return _threshold_cache[key]
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([J, H, 91])))
    table = _binom_table(J, H)
    gammas = np.empty(_THRESHOLD_REPLICATES)
    chunk = 5000
    done = 0
    while done < _THRESHOLD_REPLICATES:
        size = min(chunk, _THRESHOLD_REPLICATES - done)
        ranks = rng.integers(0, H + 1, size=(size, J))
        for i in range(size):
            gammas[done + i] = _gamma_from_counts(_count_below(ranks[i], H), table)
        done += size
    val = float(np.quantile(gammas, 1.0 - coverage))
    _threshold_cache[key] = val
    return val


def gamma_log_offset(ranks, H: int, coverage: float = 0.95) -> float:
    """log(gamma) - log(threshold); negative values reject uniformity.

    gamma underflows to zero for pathological ranks, so it is floored at the
    smallest positive normal double before taking the log.
    """
    gamma = max(gamma_statistic(ranks, H), 2.2250738585072014e-308)
    return math.log(gamma) - math.log(
        gamma_threshold(len(np.asarray(ranks)), H, coverage))


# --------------------------------------------------------------------------
# hyperparameter accuracy
# --------------------------------------------------------------------------

_CLASS_OF_PREFIX = {
    "rho": "length_scale", "rho_f": "length_scale", "rho_g": "length_scale",
    "alpha": "marginal_sd", "alpha_f": "marginal_sd", "alpha_g": "marginal_sd",
    "alpha1": "marginal_sd",
    "sigma": "error_sd", "sigma_f": "error_sd", "sigma_g": "error_sd",
    "sigma1": "error_sd",
}


def hyperparameter_rmse(draws: PosteriorDraws, truth: SimDataset) -> dict:
    """RMSE per hyperparameter class (length-scale, marginal SD, error SD)
    pooled across output dimensions and blocks."""
    sq_errors: dict = {}
    for idx, name in enumerate(draws.names):
        if "[" not in name:
            continue
        prefix, rest = name.split("[", 1)
        if prefix not in _CLASS_OF_PREFIX:
            continue
        if prefix not in truth.truth:
            raise NameMismatch(f"no stored truth for parameter {name}")
        d = int(rest.rstrip("]")) - 1
        true_val = np.asarray(truth.truth[prefix], dtype=float)[d]
        err = (draws.draws[:, idx] - true_val) ** 2
        sq_errors.setdefault(_CLASS_OF_PREFIX[prefix], []).append(err)
    return {cls: float(np.sqrt(np.mean(np.concatenate(errs))))
            for cls, errs in sq_errors.items()}


# --------------------------------------------------------------------------
# SBC harness
# --------------------------------------------------------------------------

@dataclass
class SBCResult:
    """Ranks and class-level uniformity results of one SBC run."""

    ranks: np.ndarray           # (J, P) prior-draw ranks per tracked parameter
    param_names: list
    H: int
    J: int
    classes: dict               # class -> {gamma, threshold, log_offset, reject, count}
    failures: int
    seed: int
    variant: str
    coverage: float = 0.95

    @property
    def rejected_classes(self) -> list:
        return [c for c, res in self.classes.items() if res["reject"]]


def _prior_predictive(model: LatentModel, rng: np.random.Generator):
    """Draw every parameter from the model's prior and simulate data through
    the model's own likelihood.  Returns (unconstrained vector, y dict)."""
    spec = model.spec
    N, D, M = spec.N, spec.D, spec.M
    u = np.zeros(model.dim)
    x = spec.x_tilde + rng.normal(0.0, spec.s, size=N)
    if model._cfg.uniform_latent:
        lo, hi = spec.priors.latent_bounds
        # truncated-Gaussian latent prior: resample until inside the bounds
        for i in range(N):
            while not lo < x[i] < hi:
                x[i] = spec.x_tilde[i] + rng.normal(0.0, spec.s)
        p = (x - lo) / (hi - lo)
        u[model.slice_of("x")] = np.log(p) - np.log1p(-p)
    else:
        u[model.slice_of("x")] = x
    for fam in _FAMILIES[spec.variant]:
        pri = spec.priors.hyper[fam]
        u[model.slice_of(fam)] = np.log(sample_half_normal(pri.loc, pri.scale, rng, size=D))
    seen = []
    for blk in _BLOCKS[spec.variant]:
        if blk.mu_name not in seen:
            u[model.slice_of(blk.mu_name)] = np.log(
                sample_half_normal(spec.priors.mu.loc, spec.priors.mu.scale, rng, size=D))
            seen.append(blk.mu_name)
        u[model.slice_of(f"beta_{blk.data_key}")] = rng.standard_normal(M * D)
    n_corr = len({blk.corr_idx for blk in _BLOCKS[spec.variant]})
    corr_chols = {}
    for k in range(n_corr):
        corr = sample_lkj(D, spec.priors.eta, rng)
        corr_chols[k] = np.linalg.cholesky(corr)
        u[model.slice_of(f"corr_{k}")] = model.unconstrain(
            _embed_corr(model, u, k, corr))[model.slice_of(f"corr_{k}")]

    v = model.constrain(u)
    phi = phi_matrix(spec.basis, x)
    lam = spec.basis.eigenvalues
    ys = {}
    fams = _FAMILIES[spec.variant]
    for blk in _BLOCKS[spec.variant]:
        rho = v[model.slice_of(fams[blk.rho_fam])]
        amp = v[model.slice_of(fams[blk.amp_fam])]
        noise = v[model.slice_of(fams[blk.noise_fam])]
        mu = v[model.slice_of(blk.mu_name)]
        beta = u[model.slice_of(f"beta_{blk.data_key}")].reshape(M, D)
        dens = (np.sqrt(2 * np.pi) * amp[None, :] ** 2 * rho[None, :]
                * np.exp(-0.5 * rho[None, :] ** 2 * lam[:, None]))
        if blk.kind == "deriv":
            dens = dens * lam[:, None]
        f_mix = (phi @ (np.sqrt(dens) * beta)) @ corr_chols[blk.corr_idx].T
        ys[blk.data_key] = mu[None, :] + f_mix + noise[None, :] * rng.standard_normal((N, D))
    return u, ys


def _embed_corr(model: LatentModel, u: np.ndarray, k: int, corr: np.ndarray) -> np.ndarray:
    """Constrained vector with correlation matrix ``k`` replaced by ``corr``."""
    v = model.constrain(u)
    sl = model.slice_of(f"corr_{k}")
    v[sl] = corr[np.triu_indices(corr.shape[0], k=1)]
    return v


def _tracked_groups(model: LatentModel) -> dict:
    """Class name -> parameter-vector slices tracked by the SBC report."""
    spec = model.spec
    groups = {"x": [model.slice_of("x")]}
    for fam in _FAMILIES[spec.variant]:
        groups[fam] = [model.slice_of(fam)]
    beta_slices = []
    seen = []
    for blk in _BLOCKS[spec.variant]:
        if blk.mu_name not in seen:
            groups[blk.mu_name] = [model.slice_of(blk.mu_name)]
            seen.append(blk.mu_name)
        beta_slices.append(model.slice_of(f"beta_{blk.data_key}"))
    groups["beta"] = beta_slices
    return groups


def run_sbc(variant: str, N: int, D: int, M: int, trials: int, seed: int, *,
            iters: int = 2000, warmup: int = 1000, thin: int = 5,
            priors: PriorSet | None = None, s: float = 0.3,
            x_range: tuple = (0.0, 10.0), c: float = 1.25,
            coverage: float = 0.95, max_failure_frac: float = 0.10,
            workers: int | None = None) -> SBCResult:
    """Full simulation-based calibration of one model variant.

    Each trial draws all parameters from the model's own priors, simulates
    data through the model's own likelihood, refits with the sampler, and
    ranks the prior draws within the thinned posterior.  Trial-level sampler
    failures are excluded and counted; more than ``max_failure_frac`` aborts.
    """
    if trials < 20:
        raise InvalidInput("SBC requires at least 20 trials")
    priors = priors or default_priors(variant)
    kept = iters - warmup
    H = len(range(0, kept, thin))

    def one_trial(j: int):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, j])))
        x_tilde = np.sort(rng.uniform(x_range[0], x_range[1], size=N))
        dummy = np.zeros((N, D))
        template = build_spec(variant, x_tilde, y_f=dummy, y_g=dummy, M=M, c=c,
                              priors=priors, s=s)
        u_true, ys = _prior_predictive(LatentModel(template), rng)
        spec = build_spec(variant, x_tilde, y_f=ys.get("y_f"), y_g=ys.get("y_g"),
                          M=M, c=c, priors=priors, s=s)
        model = LatentModel(spec)
        truth = model.constrain(u_true)
        sampler_seed = int(np.random.SeedSequence([seed, j, 7]).generate_state(1)[0])
        cfg = SamplerConfig(iters=iters, warmup=warmup, chains=1, seed=sampler_seed)
        out = sample(model, cfg)
        ranks = np.array([
            sbc_rank(truth[p], out.draws[:, p], thin=thin)
            for p in range(model.dim)
        ])
        return ranks, model

    results = []
    failures = 0
    pool_workers = workers or worker_count(trials)
    with ThreadPoolExecutor(max_workers=pool_workers) as pool:
        futures = {pool.submit(one_trial, j): j for j in range(trials)}
        for fut in futures:
            try:
                results.append(fut.result())
            except LatentGPError:
                failures += 1
    if failures > max_failure_frac * trials:
        raise LatentGPError(
            f"{failures}/{trials} SBC trials failed (> {max_failure_frac:.0%})")
    if not results:
        raise LatentGPError("all SBC trials failed")

    model = results[0][1]
    rank_matrix = np.vstack([r for r, _ in results])
    classes = {}
    subsample_rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence([seed, 13])))
    for cls, slices in _tracked_groups(model).items():
        pooled = np.concatenate([rank_matrix[:, sl].ravel() for sl in slices])
        if pooled.size > _POOL_CAP:
            pooled = subsample_rng.choice(pooled, size=_POOL_CAP, replace=False)
        gamma = gamma_statistic(pooled, H)
        threshold = gamma_threshold(pooled.size, H, coverage)
        classes[cls] = {
            "gamma": gamma,
            "threshold": threshold,
            "log_offset": math.log(gamma) - math.log(threshold),
            "reject": gamma < threshold,
            "count": int(pooled.size),
        }
    return SBCResult(
        ranks=rank_matrix, param_names=list(model.names), H=H,
        J=len(results), classes=classes, failures=failures, seed=seed,
        variant=variant, coverage=coverage,
    )
