"""Rank-normalized MCMC convergence diagnostics.

Split-R-hat and effective sample sizes follow the rank-normalization recipe:
each chain is split in half, pooled draws are mapped through fractional ranks
and the standard normal quantile function, and the classical statistics are
computed on the transformed draws.  Tail ESS is the minimum of the ESS of the
5% and 95% quantile indicator sequences.  Results are NaN ("undefined") when
there are too few draws or zero variance, never fabricated.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

__all__ = ["rhat", "bulk_ess", "tail_ess"]


def _as_chain_matrix(draws) -> np.ndarray:
    """Coerce to (chains, draws); a 1-D input is a single chain."""
    arr = np.asarray(draws, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError("draws must be a 1-D chain or a (chains, draws) matrix")
    return arr


def _split_chains(arr: np.ndarray) -> np.ndarray:
    half = arr.shape[1] // 2
    return np.vstack([arr[:, :half], arr[:, -half:]])


def _rank_normalize(arr: np.ndarray) -> np.ndarray:
    ranks = stats.rankdata(arr, method="average").reshape(arr.shape)
    return stats.norm.ppf((ranks - 0.5) / arr.size)


def _classic_rhat(arr: np.ndarray) -> float:
    n_chain, n_draw = arr.shape
    chain_mean = arr.mean(axis=1)
    chain_var = arr.var(axis=1, ddof=1)
    within = chain_var.mean()
    if within == 0.0 or not np.isfinite(within):
        return float("nan")
    between = n_draw * chain_mean.var(ddof=1) if n_chain > 1 else 0.0
    var_hat = (n_draw - 1) / n_draw * within + between / n_draw
    return float(np.sqrt(var_hat / within))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance estimates at all lags via FFT."""
    n = x.size
    xc = x - x.mean()
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    fft = np.fft.rfft(xc, size)
    acov = np.fft.irfft(fft * np.conj(fft), size)[:n].real
    return acov / n


def _classic_ess(arr: np.ndarray) -> float:
    """ESS with Geyer's initial positive/monotone sequence criterion."""
    n_chain, n_draw = arr.shape
    if n_draw < 4 or np.any(~np.isfinite(arr)):
        return float("nan")
    acov = np.asarray([_autocovariance(arr[c]) for c in range(n_chain)])
    chain_mean = arr.mean(axis=1)
    mean_var = acov[:, 0].mean() * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += chain_mean.var(ddof=1)
    if var_plus == 0.0 or not np.isfinite(var_plus):
        return float("nan")

    rho_hat = np.zeros(n_draw)
    rho_hat[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho_hat[1] = rho_odd
    t = 1
    while t < n_draw - 2 and (rho_even + rho_odd) >= 0.0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        rho_hat[t + 1] = rho_even
        if (rho_even + rho_odd) >= 0.0:
            rho_hat[t + 2] = rho_odd
        t += 2
    max_t = t
    # enforce monotone decrease of paired sums
    t = 1
    while t <= max_t - 2:
        if rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t]:
            rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0
            rho_hat[t + 2] = rho_hat[t + 1]
        t += 2
    tau = -1.0 + 2.0 * rho_hat[:max_t].sum() + rho_hat[max_t + 1:max_t + 2].sum()
    tau = max(tau, 1.0 / np.log10(n_chain * n_draw + 10.0))
    return float(n_chain * n_draw / tau)


def _validate(arr: np.ndarray) -> bool:
    return arr.shape[1] // 2 >= 4 and np.all(np.isfinite(arr)) and arr.std() > 0


def rhat(draws) -> float:
    """Rank-normalized split-R-hat; NaN when undefined.

    ``draws`` is (chains, draws) or a single 1-D chain (which split-R-hat
    still diagnoses by comparing its two halves).
    """
    arr = _as_chain_matrix(draws)
    if not _validate(arr):
        return float("nan")
    return _classic_rhat(_rank_normalize(_split_chains(arr)))


def bulk_ess(draws) -> float:
    """Rank-normalized split effective sample size for central quantities."""
    arr = _as_chain_matrix(draws)
    if not _validate(arr):
        return float("nan")
    return _classic_ess(_rank_normalize(_split_chains(arr)))


def tail_ess(draws) -> float:
    """Minimum ESS of the 5% and 95% quantile indicator sequences."""
    arr = _as_chain_matrix(draws)
    if not _validate(arr):
        return float("nan")
    out = []
    for prob in (0.05, 0.95):
        indicator = (arr <= np.quantile(arr, prob)).astype(float)
        if indicator.std() == 0:
            return float("nan")
        out.append(_classic_ess(_rank_normalize(_split_chains(indicator))))
    return float(min(out))
