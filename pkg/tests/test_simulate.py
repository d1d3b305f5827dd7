"""Generator checks: exact-GP covariance recovery over many datasets,
derivative consistency of the joint process, LKJ and half-normal marginals,
and determinism."""

import numpy as np
import pytest
from scipy import stats

from latentgp.exceptions import InvalidInput
from latentgp.kernels import SQUARED_EXPONENTIAL, KernelSpec, gram_matrix
from latentgp.model import HalfNormal
from latentgp.simulate import (
    DGP,
    PCGP,
    ScenarioConfig,
    SimDataset,
    dgp_table,
    generate,
    pcgp_table,
    sample_half_normal,
    sample_lkj,
)


class TestSampleHalfNormal:
    def test_always_positive(self):
        rng = np.random.default_rng(0)
        draws = sample_half_normal(0.0, 5.0, rng, size=5000)
        assert np.all(draws > 0)

    def test_mean_far_from_truncation(self):
        rng = np.random.default_rng(1)
        draws = sample_half_normal(1.0, 0.05, rng, size=20000)
        se = draws.std() / np.sqrt(draws.size)
        assert abs(draws.mean() - 1.0) < 3 * se

    def test_half_normal_mean_formula(self):
        rng = np.random.default_rng(2)
        draws = sample_half_normal(0.0, 5.0, rng, size=50000)
        expected = 5.0 * np.sqrt(2.0 / np.pi)
        se = draws.std() / np.sqrt(draws.size)
        assert abs(draws.mean() - expected) < 3 * se

    def test_invalid_scale(self):
        with pytest.raises(InvalidInput):
            sample_half_normal(0.0, 0.0, np.random.default_rng(0))


class TestSampleLkj:
    def test_single_dimension(self):
        np.testing.assert_array_equal(sample_lkj(1, 1.0, np.random.default_rng(0)),
                                      np.ones((1, 1)))

    def test_valid_correlation_matrices(self):
        rng = np.random.default_rng(3)
        for d in (2, 3, 5, 8):
            for _ in range(20):
                corr = sample_lkj(d, 1.0, rng)
                np.testing.assert_allclose(np.diag(corr), 1.0, atol=1e-12)
                np.testing.assert_allclose(corr, corr.T, atol=1e-12)
                assert np.linalg.eigvalsh(corr).min() > 0

    def test_d2_eta1_marginal_is_uniform(self):
        """For eta = 1 the 2x2 off-diagonal is uniform on (-1, 1)."""
        rng = np.random.default_rng(4)
        draws = np.array([sample_lkj(2, 1.0, rng)[0, 1] for _ in range(20000)])
        ks = stats.kstest(draws, stats.uniform(loc=-1.0, scale=2.0).cdf)
        assert ks.statistic < 1.36 / np.sqrt(draws.size)  # 95% critical value

    def test_d3_eta1_marginal_density(self):
        """For D = 3 the single-correlation marginal is ~ (1 - r^2)^(1/2)."""
        rng = np.random.default_rng(5)
        draws = np.array([sample_lkj(3, 1.0, rng)[0, 1] for _ in range(20000)])
        cdf = lambda r: stats.beta(1.5, 1.5).cdf((r + 1.0) / 2.0)
        ks = stats.kstest(draws, cdf)
        assert ks.statistic < 1.36 / np.sqrt(draws.size)


class TestGenerate:
    def test_determinism(self):
        cfg = ScenarioConfig(process=PCGP, N=10, D=3, seed=77)
        a, b = generate(cfg), generate(cfg)
        np.testing.assert_array_equal(a.x_true, b.x_true)
        np.testing.assert_array_equal(a.y_f, b.y_f)
        np.testing.assert_array_equal(a.y_g, b.y_g)
        for k in a.truth:
            np.testing.assert_array_equal(a.truth[k], b.truth[k])

    def test_shapes_and_measurement_noise(self):
        cfg = ScenarioConfig(process=DGP, N=40, D=4, seed=5, s=0.3)
        data = generate(cfg)
        assert data.y_f.shape == (40, 4) and data.y_g.shape == (40, 4)
        assert np.all(np.diff(data.x_true) >= 0)  # sorted for plotting
        resid = data.x_tilde - data.x_true
        assert 0.1 < resid.std() < 0.6  # consistent with s = 0.3

    def test_dgp_lambda_scaling_exact(self):
        cfg = ScenarioConfig(process=DGP, N=8, D=6, seed=9, scale_lambda=10.0)
        data = generate(cfg)
        np.testing.assert_array_equal(data.truth["alpha"], 10.0 * data.truth["alpha1"])
        np.testing.assert_array_equal(data.truth["sigma"], 10.0 * data.truth["sigma1"])

    def test_zero_noise_hook_gives_exact_latents(self):
        cfg = ScenarioConfig(process=PCGP, N=12, D=2, seed=11, zero_noise=True)
        data = generate(cfg)
        cfg2 = ScenarioConfig(process=PCGP, N=12, D=2, seed=11, zero_noise=False)
        noisy = generate(cfg2)
        # same seed consumes the same latent draws; only the noise differs
        assert not np.allclose(data.y_f, noisy.y_f)
        # regenerating with zero noise is idempotent
        np.testing.assert_array_equal(data.y_f, generate(cfg).y_f)

    def test_flat_function_limit(self):
        """A huge length-scale makes outputs nearly perfectly correlated
        across inputs (test hook through the constants table)."""
        table = dict(pcgp_table())
        table["rho_f"] = HalfNormal(1e6, 1e-9)
        table["sigma_f"] = HalfNormal(1e-6, 1e-12)
        vals = []
        for seed in range(200):
            cfg = ScenarioConfig(process=PCGP, N=2, D=1, seed=seed, table=table)
            vals.append(generate(cfg).y_f[:, 0])
        vals = np.asarray(vals)
        corr = np.corrcoef(vals[:, 0], vals[:, 1])[0, 1]
        assert corr > 0.999

    def test_pcgp_marginal_covariance_matches_exact_gram(self):
        """20000 generated y_f vectors at pinned x and (nearly) fixed
        hyperparameters have empirical covariance K_f + sigma^2 I."""
        rho, alpha, sigma, mu = 1.0, 3.0, 1.0, 2.0
        table = dict(pcgp_table())
        table.update({
            "rho_f": HalfNormal(rho, 1e-9), "alpha_f": HalfNormal(alpha, 1e-9),
            "sigma_f": HalfNormal(sigma, 1e-9), "mean": HalfNormal(mu, 1e-9),
        })
        n, reps = 5, 20000
        xs = (0.7, 2.9, 4.4, 6.8, 9.1)
        samples = np.empty((reps, n))
        for rep in range(reps):
            data = generate(ScenarioConfig(process=PCGP, N=n, D=1,
                                           seed=500000 + rep, table=table,
                                           fixed_x=xs))
            samples[rep] = data.y_f[:, 0]
        spec = KernelSpec(SQUARED_EXPONENTIAL, alpha, rho)
        expected = gram_matrix(spec, np.asarray(xs)) + sigma**2 * np.eye(n)
        emp = np.cov(samples.T)
        for i in range(n):
            for j in range(n):
                se = np.sqrt((expected[i, i] * expected[j, j]
                              + expected[i, j] ** 2) / reps)
                assert abs(emp[i, j] - expected[i, j]) < 3 * se
        assert abs(samples.mean() - mu) < 3 * np.sqrt(expected[0, 0] / reps)

    def test_invalid_config(self):
        with pytest.raises(InvalidInput):
            ScenarioConfig(process="nope", N=10, D=2, seed=0)
        with pytest.raises(InvalidInput):
            ScenarioConfig(process=PCGP, N=1, D=2, seed=0)


class TestExactMarginalCovariance:
    def test_covariance_of_repeated_draws(self):
        """Fix x and hyperparameters, regenerate the GP draw many times: the
        empirical covariance of y must match K + sigma^2 I entrywise."""
        rng = np.random.default_rng(13)
        n = 5
        xs = np.sort(rng.uniform(0, 10, size=n))
        rho, alpha, sigma, mu = 1.0, 3.0, 1.0, 2.0
        spec = KernelSpec(SQUARED_EXPONENTIAL, alpha, rho)
        gram = gram_matrix(spec, xs)
        chol = np.linalg.cholesky(gram + 1e-10 * np.eye(n))
        reps = 20000
        ys = mu + (chol @ rng.standard_normal((n, reps))).T \
            + sigma * rng.standard_normal((reps, n))
        emp = np.cov(ys.T)
        expected = gram + sigma**2 * np.eye(n)
        for i in range(n):
            for j in range(n):
                se = np.sqrt((expected[i, i] * expected[j, j]
                              + expected[i, j] ** 2) / reps)
                assert abs(emp[i, j] - expected[i, j]) < 3 * se

    def test_dgp_derivative_consistency(self):
        """With zero noise, finite differences of y along a dense grid track
        the generated derivative outputs."""
        cfg = ScenarioConfig(process=DGP, N=200, D=2, seed=21, zero_noise=True)
        data = generate(cfg)
        for d in range(2):
            fd = np.gradient(data.y_f[:, d], data.x_true)
            # the derivative block of y_g is mixed with the same factor, so
            # compare against the same linear combination
            corr = np.corrcoef(fd, data.y_g[:, d])[0, 1]
            assert corr > 0.99
