"""Gradient-based MCMC: dynamic-trajectory HMC with multinomial state
selection (no-U-turn termination), dual-averaging step-size adaptation, and
windowed diagonal mass-matrix estimation during warmup.

The sampler consumes any target exposing ``dim``, ``names``,
``logp_and_grad(u) -> (float, ndarray)``, ``constrain(u) -> ndarray`` and
``initial_position(rng, jitter) -> ndarray`` over an unconstrained parameter
vector; :class:`latentgp.model.LatentModel` satisfies the protocol.  Chains
are deterministic given (seed, chain index) via counter-based Philox streams,
so results do not depend on thread scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InitializationFailed, InvalidInput

__all__ = ["SamplerConfig", "ChainStats", "PosteriorDraws", "sample", "worker_count"]

_DIVERGENCE_ENERGY = 1000.0
_MAX_INIT_RETRIES = 100


def worker_count(tasks: int) -> int:
    """Worker cap for fan-out: HSGP_THREADS if set, else the CPU count."""
    env = os.environ.get("HSGP_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(tasks, cap))


@dataclass(frozen=True)
class SamplerConfig:
    iters: int = 2000
    warmup: int = 1000
    chains: int = 1
    seed: int = 0
    target_accept: float = 0.8
    max_treedepth: int = 10
    init_jitter: float = 2.0

    def __post_init__(self):
        if not 0 <= self.warmup < self.iters:
            raise InvalidInput("need 0 <= warmup < iters")
        if self.chains < 1:
            raise InvalidInput("need at least one chain")
        if not 0.0 < self.target_accept < 1.0:
            raise InvalidInput("target_accept must lie in (0, 1)")


@dataclass
class ChainStats:
    chain: int
    divergences: int
    accept_rate: float
    step_size: float
    treedepth_hist: dict
    persistent_divergence: bool


@dataclass
class PosteriorDraws:
    """Retained draws on the constrained scale, chains concatenated in order."""

    draws: np.ndarray
    names: list
    chains: int
    kept_per_chain: int
    seed: int
    chain_stats: list = field(default_factory=list)

    def by_chain(self) -> np.ndarray:
        """View with shape (chains, kept, P)."""
        return self.draws.reshape(self.chains, self.kept_per_chain, -1)

    def param(self, name: str) -> np.ndarray:
        """Per-chain draws of a named parameter, shape (chains, kept)."""
        try:
            idx = self.names.index(name)
        except ValueError:
            raise KeyError(name) from None
        return self.by_chain()[:, :, idx]

    @property
    def divergences(self) -> int:
        return sum(cs.divergences for cs in self.chain_stats)


class _DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance."""

    def __init__(self, eps0: float, delta: float, gamma: float = 0.05,
                 t0: float = 10.0, kappa: float = 0.75):
        self.mu = math.log(10.0 * eps0)
        self.delta = delta
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.count = 0
        self.h_bar = 0.0
        self.log_eps = math.log(eps0)
        self.log_eps_bar = math.log(eps0)

    def update(self, accept_stat: float) -> float:
        self.count += 1
        frac = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.delta - accept_stat)
        self.log_eps = self.mu - math.sqrt(self.count) / self.gamma * self.h_bar
        eta = self.count ** (-self.kappa)
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar
        return math.exp(self.log_eps)

    def restart(self, eps: float):
        self.mu = math.log(10.0 * eps)
        self.count = 0
        self.h_bar = 0.0
        self.log_eps = math.log(eps)
        self.log_eps_bar = math.log(eps)


class _Tree:
    """End points, multinomial weight, and proposal of a trajectory segment."""

    __slots__ = ("u_minus", "p_minus", "grad_minus", "u_plus", "p_plus",
                 "grad_plus", "u_prop", "logp_prop", "grad_prop", "log_weight",
                 "p_sum", "alpha_sum", "n_leaves", "divergent", "turning")

    def __init__(self, u, p, grad, logp, log_weight, alpha, divergent):
        self.u_minus = self.u_plus = self.u_prop = u
        self.p_minus = self.p_plus = p
        self.grad_minus = self.grad_plus = self.grad_prop = grad
        self.logp_prop = logp
        self.log_weight = log_weight
        self.p_sum = p.copy()
        self.alpha_sum = alpha
        self.n_leaves = 1
        self.divergent = divergent
        self.turning = False


def _kinetic(p, inv_mass):
    return 0.5 * float(np.dot(p, inv_mass * p))


def _turning(p_sum, p_lo, p_hi, inv_mass) -> bool:
    return (np.dot(p_sum, inv_mass * p_lo) <= 0.0
            or np.dot(p_sum, inv_mass * p_hi) <= 0.0)


class _ChainRunner:
    def __init__(self, target, cfg: SamplerConfig, chain: int,
                 seed_seq: np.random.SeedSequence):
        self.target = target
        self.cfg = cfg
        self.chain = chain
        self.rng = np.random.Generator(np.random.Philox(seed_seq))
        self.inv_mass = np.ones(target.dim)

    # -- core moves ---------------------------------------------------------

    def _leapfrog(self, u, p, grad, eps):
        p_half = p + 0.5 * eps * grad
        u_new = u + eps * self.inv_mass * p_half
        logp_new, grad_new = self.target.logp_and_grad(u_new)
        if not (math.isfinite(logp_new) and np.all(np.isfinite(grad_new))):
            return u_new, p_half, -math.inf, grad
        p_new = p_half + 0.5 * eps * grad_new
        return u_new, p_new, logp_new, grad_new

    def _leaf(self, u, p, grad, direction, eps, h0) -> _Tree:
        u1, p1, logp1, grad1 = self._leapfrog(u, p, grad, direction * eps)
        h1 = -logp1 + _kinetic(p1, self.inv_mass) if math.isfinite(logp1) else math.inf
        energy_error = h1 - h0
        divergent = not math.isfinite(h1) or energy_error > _DIVERGENCE_ENERGY
        log_weight = -energy_error if math.isfinite(energy_error) else -math.inf
        alpha = min(1.0, math.exp(min(0.0, -energy_error))) if math.isfinite(energy_error) else 0.0
        return _Tree(u1, p1, grad1, logp1, log_weight, alpha, divergent)

    def _build(self, depth, u, p, grad, direction, eps, h0) -> _Tree:
        if depth == 0:
            return self._leaf(u, p, grad, direction, eps, h0)
        first = self._build(depth - 1, u, p, grad, direction, eps, h0)
        if first.divergent or first.turning:
            return first
        if direction == 1:
            u_edge, p_edge, grad_edge = first.u_plus, first.p_plus, first.grad_plus
        else:
            u_edge, p_edge, grad_edge = first.u_minus, first.p_minus, first.grad_minus
        second = self._build(depth - 1, u_edge, p_edge, grad_edge, direction, eps, h0)
        self._merge(first, second, direction, biased=False)
        return first

    def _merge(self, tree: _Tree, other: _Tree, direction, biased: bool):
        """Fold ``other`` (the newer segment in ``direction``) into ``tree``."""
        tree.alpha_sum += other.alpha_sum
        tree.n_leaves += other.n_leaves
        if other.divergent or other.turning:
            tree.divergent |= other.divergent
            tree.turning |= other.turning
            return
        old_sum = tree.p_sum
        if direction == 1:
            p_far_old, p_old_inner = tree.p_minus, tree.p_plus
            p_inner_new, p_outer_new = other.p_minus, other.p_plus
            tree.u_plus, tree.p_plus, tree.grad_plus = (
                other.u_plus, other.p_plus, other.grad_plus)
        else:
            p_far_old, p_old_inner = tree.p_plus, tree.p_minus
            p_inner_new, p_outer_new = other.p_plus, other.p_minus
            tree.u_minus, tree.p_minus, tree.grad_minus = (
                other.u_minus, other.p_minus, other.grad_minus)
        total = np.logaddexp(tree.log_weight, other.log_weight)
        if biased:
            # progressive sampling across doublings favors the new subtree
            p_new = math.exp(min(0.0, other.log_weight - tree.log_weight))
        else:
            p_new = math.exp(other.log_weight - total) if math.isfinite(total) else 0.0
        if p_new > 0.0 and self.rng.uniform() < p_new:
            tree.u_prop = other.u_prop
            tree.logp_prop = other.logp_prop
            tree.grad_prop = other.grad_prop
        tree.p_sum = old_sum + other.p_sum
        tree.log_weight = total
        # merged-tree U-turn plus the sharper cross-segment checks
        turning = _turning(tree.p_sum, tree.p_minus, tree.p_plus, self.inv_mass)
        turning |= _turning(old_sum + p_inner_new, p_far_old, p_inner_new, self.inv_mass)
        turning |= _turning(other.p_sum + p_old_inner, p_old_inner, p_outer_new, self.inv_mass)
        tree.turning = turning

    def _transition(self, u, logp, grad, eps):
        p0 = self.rng.standard_normal(self.target.dim) / np.sqrt(self.inv_mass)
        h0 = -logp + _kinetic(p0, self.inv_mass)
        tree = _Tree(u, p0, grad, logp, 0.0, 1.0, False)
        tree.alpha_sum = 0.0
        tree.n_leaves = 0
        depth = 0
        divergent = False
        while depth < self.cfg.max_treedepth:
            direction = 1 if self.rng.uniform() < 0.5 else -1
            if direction == 1:
                u_e, p_e, g_e = tree.u_plus, tree.p_plus, tree.grad_plus
            else:
                u_e, p_e, g_e = tree.u_minus, tree.p_minus, tree.grad_minus
            sub = self._build(depth, u_e, p_e, g_e, direction, eps, h0)
            if sub.divergent:
                divergent = True
                tree.alpha_sum += sub.alpha_sum
                tree.n_leaves += sub.n_leaves
                break
            if sub.turning:
                tree.alpha_sum += sub.alpha_sum
                tree.n_leaves += sub.n_leaves
                break
            self._merge(tree, sub, direction, biased=True)
            depth += 1
            if tree.turning:
                break
        accept_stat = tree.alpha_sum / max(tree.n_leaves, 1)
        return tree.u_prop, tree.logp_prop, tree.grad_prop, accept_stat, depth, divergent

    # -- adaptation ----------------------------------------------------------

    def _find_initial_step(self, u, logp, grad) -> float:
        eps = 1.0
        p0 = self.rng.standard_normal(self.target.dim) / np.sqrt(self.inv_mass)
        h0 = -logp + _kinetic(p0, self.inv_mass)

        def log_ratio(eps):
            _, p1, logp1, _ = self._leapfrog(u, p0, grad, eps)
            if not math.isfinite(logp1):
                return -math.inf
            return h0 - (-logp1 + _kinetic(p1, self.inv_mass))

        direction = 1.0 if log_ratio(eps) > math.log(0.5) else -1.0
        for _ in range(100):
            if direction * log_ratio(eps) <= direction * math.log(0.5):
                break
            eps *= 2.0**direction
            if eps < 1e-10 or eps > 1e7:
                break
        return eps

    def _warmup_windows(self):
        w = self.cfg.warmup
        if w == 0:
            return []
        init = max(1, int(0.15 * w))
        term = max(1, int(0.10 * w))
        middle = w - init - term
        if middle < 20:
            return [w]
        bounds = []
        start = init
        width = 25
        while True:
            end = start + width
            if end + 2 * width > init + middle:
                bounds.append(init + middle)
                break
            bounds.append(end)
            start = end
            width *= 2
        return bounds

    # -- main loop ------------------------------------------------------------

    def run(self):
        cfg = self.cfg
        u = logp = grad = None
        for _ in range(_MAX_INIT_RETRIES):
            cand = self.target.initial_position(self.rng, cfg.init_jitter)
            lp, gr = self.target.logp_and_grad(cand)
            if math.isfinite(lp) and np.all(np.isfinite(gr)):
                u, logp, grad = cand, lp, gr
                break
        if u is None:
            raise InitializationFailed(
                f"no finite starting point in {_MAX_INIT_RETRIES} attempts")

        eps = self._find_initial_step(u, logp, grad)
        da = _DualAveraging(eps, cfg.target_accept)
        windows = self._warmup_windows()
        window_buf = []
        kept = cfg.iters - cfg.warmup
        draws = np.empty((kept, len(self.target.names)))
        divergences = 0
        accept_sum = 0.0
        depth_hist: dict = {}

        for it in range(cfg.iters):
            warming = it < cfg.warmup
            u, logp, grad, accept_stat, depth, divergent = self._transition(u, logp, grad, eps)
            if warming:
                eps = da.update(accept_stat)
                if windows and windows[0] > it:
                    window_buf.append(u.copy())
                if windows and it + 1 == windows[0]:
                    self._update_mass(window_buf)
                    window_buf = []
                    windows.pop(0)
                    eps = self._find_initial_step(u, logp, grad)
                    da.restart(eps)
                if it + 1 == cfg.warmup:
                    eps = math.exp(da.log_eps_bar)
            else:
                idx = it - cfg.warmup
                draws[idx] = self.target.constrain(u)
                divergences += divergent
                accept_sum += accept_stat
                depth_hist[depth] = depth_hist.get(depth, 0) + 1

        stats = ChainStats(
            chain=self.chain,
            divergences=divergences,
            accept_rate=accept_sum / max(kept, 1),
            step_size=eps,
            treedepth_hist=depth_hist,
            persistent_divergence=divergences > 0.5 * max(kept, 1),
        )
        return draws, stats

    def _update_mass(self, window_buf):
        if len(window_buf) < 5:
            return
        arr = np.asarray(window_buf)
        var = arr.var(axis=0, ddof=1)
        n = arr.shape[0]
        reg = n / (n + 5.0) * var + 1e-3 * (5.0 / (n + 5.0))
        if np.all(np.isfinite(reg)) and np.all(reg > 0):
            self.inv_mass = reg


def sample(target, cfg: SamplerConfig) -> PosteriorDraws:
    """Draw from the posterior of ``target`` (a LatentModel, LatentModelSpec,
    or any object satisfying the target protocol)."""
    from .model import LatentModel, LatentModelSpec

    if isinstance(target, LatentModelSpec):
        target = LatentModel(target)

    root = np.random.SeedSequence(cfg.seed)
    seeds = root.spawn(cfg.chains)
    runners = [_ChainRunner(target, cfg, c, seeds[c]) for c in range(cfg.chains)]
    if cfg.chains == 1:
        results = [runners[0].run()]
    else:
        with ThreadPoolExecutor(max_workers=worker_count(cfg.chains)) as pool:
            results = list(pool.map(lambda r: r.run(), runners))

    kept = cfg.iters - cfg.warmup
    draws = np.concatenate([r[0] for r in results], axis=0)
    return PosteriorDraws(
        draws=draws,
        names=list(target.names),
        chains=cfg.chains,
        kept_per_chain=kept,
        seed=cfg.seed,
        chain_stats=[r[1] for r in results],
    )
