"""Kernel-level checks: analytic derivative kernels against finite
differences of the base kernel, PSD admissibility, and gram construction."""

import math

import numpy as np
import pytest

from latentgp.exceptions import (
    InvalidInput,
    NotACovariance,
    NumericallySingular,
    UnsupportedKernel,
)
from latentgp.kernels import (
    MATERN,
    SQUARED_EXPONENTIAL,
    KernelSpec,
    cholesky_with_jitter,
    gram_matrix,
    is_psd_derivative,
    joint_derivative_gram,
    kernel_eval,
)


def se(alpha=1.0, rho=1.0, deriv=(0, 0)):
    return KernelSpec(SQUARED_EXPONENTIAL, alpha, rho, deriv)


def matern(nu, alpha=1.0, rho=1.0, deriv=(0, 0)):
    return KernelSpec(MATERN, alpha, rho, deriv, nu=nu)


class TestKernelEval:
    def test_se_at_zero(self):
        assert kernel_eval(se(), 0.7, 0.7) == pytest.approx(1.0)

    def test_se_deriv11_at_zero_is_alpha2_over_rho2(self):
        assert kernel_eval(se(deriv=(1, 1)), 2.0, 2.0) == pytest.approx(1.0)
        assert kernel_eval(se(alpha=2.0, rho=0.5, deriv=(1, 1)), 0.0, 0.0) == pytest.approx(
            4.0 / 0.25
        )

    def test_se_at_unit_lag(self):
        assert kernel_eval(se(), 1.0, 0.0) == pytest.approx(math.exp(-0.5), abs=1e-12)

    def test_se_deriv10_odd_in_lag(self):
        assert kernel_eval(se(deriv=(1, 0)), 3.0, 3.0) == 0.0

    def test_scaling(self):
        spec = se(alpha=2.5, rho=1.7)
        assert kernel_eval(spec, 0.0, 0.0) == pytest.approx(2.5**2)
        assert kernel_eval(spec, 1.7, 0.0) == pytest.approx(2.5**2 * math.exp(-0.5))

    def test_matern_at_zero(self):
        for nu in (0.5, 1.5, 2.5, 3.7):
            assert kernel_eval(matern(nu), 1.0, 1.0) == pytest.approx(1.0)

    def test_matern_general_nu_matches_closed_form(self):
        # nu=1.5 via the Bessel branch agrees with the closed form.
        r = np.linspace(0.01, 5.0, 40)
        closed = kernel_eval(matern(1.5), r, 0.0)
        kspec = matern(1.5000000001)
        bessel = kernel_eval(kspec, r, 0.0)
        np.testing.assert_allclose(bessel, closed, rtol=1e-6)

    def test_nonfinite_inputs_rejected(self):
        with pytest.raises(InvalidInput):
            kernel_eval(se(), np.nan, 0.0)
        with pytest.raises(InvalidInput):
            kernel_eval(se(), 0.0, np.inf)

    def test_unsupported_combinations(self):
        with pytest.raises(UnsupportedKernel):
            se(deriv=(2, 1))
        with pytest.raises(UnsupportedKernel):
            matern(0.5, deriv=(1, 1))  # moment condition a+b < 2 nu
        with pytest.raises(UnsupportedKernel):
            matern(3.5, deriv=(1, 1))  # only nu in {3/2, 5/2} implemented
        with pytest.raises(UnsupportedKernel):
            matern(1.5, deriv=(1, 0))
        with pytest.raises(InvalidInput):
            KernelSpec(SQUARED_EXPONENTIAL, -1.0, 1.0)
        with pytest.raises(InvalidInput):
            KernelSpec(MATERN, 1.0, 1.0, nu=None)


class TestFiniteDifferenceOracle:
    """Analytic derivative kernels must match central differences of k."""

    H_REL = 1e-4

    def _pairs(self, n=100):
        rng = np.random.default_rng(20260810)
        return rng.uniform(0.0, 10.0, size=(n, 2))

    @pytest.mark.parametrize("alpha,rho", [(1.0, 1.0), (2.0, 0.6), (0.7, 2.3)])
    def test_se_10_matches_first_difference(self, alpha, rho):
        base = se(alpha, rho)
        spec = se(alpha, rho, (1, 0))
        h = self.H_REL * rho
        for x, xp in self._pairs():
            fd = (kernel_eval(base, x + h, xp) - kernel_eval(base, x - h, xp)) / (2 * h)
            assert abs(kernel_eval(spec, x, xp) - fd) < 1e-6 * alpha**2 / rho

    @pytest.mark.parametrize("alpha,rho", [(1.0, 1.0), (2.0, 0.6)])
    def test_se_11_matches_second_difference(self, alpha, rho):
        base = se(alpha, rho)
        spec = se(alpha, rho, (1, 1))
        h = self.H_REL * rho
        for x, xp in self._pairs():
            fd = (
                kernel_eval(base, x + h, xp + h)
                - kernel_eval(base, x + h, xp - h)
                - kernel_eval(base, x - h, xp + h)
                + kernel_eval(base, x - h, xp - h)
            ) / (4 * h * h)
            assert abs(kernel_eval(spec, x, xp) - fd) < 1e-6 * alpha**2 / rho**2

    @pytest.mark.parametrize("nu", [1.5, 2.5])
    def test_matern_11_matches_second_difference(self, nu):
        base = matern(nu)
        spec = matern(nu, deriv=(1, 1))
        h = 1e-4
        rng = np.random.default_rng(7)
        for x, xp in rng.uniform(0.0, 10.0, size=(50, 2)):
            if abs(x - xp) < 10 * h:  # |r| kink needs clearance for the stencil
                continue
            fd = (
                kernel_eval(base, x + h, xp + h)
                - kernel_eval(base, x + h, xp - h)
                - kernel_eval(base, x - h, xp + h)
                + kernel_eval(base, x - h, xp - h)
            ) / (4 * h * h)
            assert abs(kernel_eval(spec, x, xp) - fd) < 1e-5

    def test_antisymmetry_of_10(self):
        spec = se(deriv=(1, 0))
        rng = np.random.default_rng(11)
        for x, xp in rng.uniform(0.0, 10.0, size=(100, 2)):
            assert kernel_eval(spec, x, xp) == pytest.approx(-kernel_eval(spec, xp, x), abs=1e-15)

    def test_prop1_identity_against_nested_differences(self):
        """k^(a,b)(r) = (-1)^b d^(a+b)k/dr^(a+b) for (1,0), (0,1), (1,1)."""
        alpha, rho = 1.3, 0.9
        base = se(alpha, rho)
        h = 1e-4 * rho

        def dkdr(r, order):
            if order == 1:
                return (kernel_eval(base, r + h, 0.0) - kernel_eval(base, r - h, 0.0)) / (2 * h)
            return (
                kernel_eval(base, r + h, 0.0)
                - 2 * kernel_eval(base, r, 0.0)
                + kernel_eval(base, r - h, 0.0)
            ) / (h * h)

        for r in np.linspace(-3.0, 3.0, 31):
            k10 = kernel_eval(se(alpha, rho, (1, 0)), r, 0.0)
            k01 = kernel_eval(se(alpha, rho, (0, 1)), r, 0.0)
            k11 = kernel_eval(se(alpha, rho, (1, 1)), r, 0.0)
            assert k10 == pytest.approx(dkdr(r, 1), abs=1e-6)
            assert k01 == pytest.approx(-dkdr(r, 1), abs=1e-6)
            assert k11 == pytest.approx(-dkdr(r, 2), abs=1e-5)


class TestIsPsdDerivative:
    @pytest.mark.parametrize(
        "a,b,expected",
        [(0, 0, True), (1, 1, True), (1, 0, False), (0, 1, False),
         (2, 0, False), (0, 2, False), (2, 2, True), (3, 1, False),
         (1, 3, False), (4, 0, True), (0, 4, True)],
    )
    def test_scalar_orders(self, a, b, expected):
        assert is_psd_derivative(a, b) is expected

    def test_pair_argument(self):
        assert is_psd_derivative((1, 1)) is True
        assert is_psd_derivative((1, 0)) is False

    def test_multi_index(self):
        # componentwise even sums and |a| + 3|b| = 0 mod 4
        assert is_psd_derivative([1, 1], [1, 1]) is True
        assert is_psd_derivative([1, 0], [1, 0]) is True
        assert is_psd_derivative([1, 0], [0, 1]) is False  # odd componentwise
        assert is_psd_derivative([2, 0], [0, 0]) is False  # |a|+3|b| = 2
        assert is_psd_derivative([0, 2], [2, 0]) is True  # 2 + 6 = 8

    def test_invalid(self):
        with pytest.raises(InvalidInput):
            is_psd_derivative(-1, 1)
        with pytest.raises(InvalidInput):
            is_psd_derivative([1, 2], [1])


class TestGramMatrix:
    def test_single_point(self):
        g = gram_matrix(se(alpha=1.4), [3.0])
        assert g.shape == (1, 1)
        assert g[0, 0] == pytest.approx(1.4**2)

    def test_se_two_points(self):
        g = gram_matrix(se(), [0.0, 1.0])
        expected = np.array([[1.0, math.exp(-0.5)], [math.exp(-0.5), 1.0]])
        np.testing.assert_allclose(g, expected, atol=1e-12)

    def test_se_deriv11_two_points_identity(self):
        # (1 - r^2) e^{-r^2/2} vanishes at r = 1
        g = gram_matrix(se(deriv=(1, 1)), [0.0, 1.0])
        np.testing.assert_allclose(g, np.eye(2), atol=1e-15)

    def test_exact_symmetry(self):
        rng = np.random.default_rng(3)
        xs = rng.uniform(0, 10, size=24)
        g = gram_matrix(se(alpha=2.0, rho=0.7, deriv=(1, 1)), xs)
        assert np.array_equal(g, g.T)

    def test_rejects_non_psd_deriv(self):
        with pytest.raises(NotACovariance):
            gram_matrix(se(deriv=(2, 0)), [0.0, 1.0])

    @pytest.mark.parametrize(
        "spec",
        [se(), se(2.0, 0.5, (1, 1)), matern(1.5), matern(2.5), matern(2.5, deriv=(1, 1))],
    )
    def test_psd_on_random_points(self, spec):
        rng = np.random.default_rng(5)
        for _ in range(5):
            xs = rng.uniform(0, 10, size=20)
            g = gram_matrix(spec, xs)
            assert np.linalg.eigvalsh(g).min() >= -1e-8 * spec.alpha**2

    def test_non_psd_witness_for_20(self):
        """Randomized search finds a point set with a clearly negative eigenvalue."""
        spec = se(deriv=(2, 0))
        rng = np.random.default_rng(17)
        found = False
        for _ in range(50):
            xs = rng.uniform(0, 10, size=20)
            vals = kernel_eval(spec, xs[:, None], xs[None, :])
            if np.linalg.eigvalsh(vals).min() < -1e-6:
                found = True
                break
        assert found


class TestJointDerivativeGram:
    def test_single_point_blocks(self):
        joint = joint_derivative_gram(1.0, 1.0, [0.0])
        np.testing.assert_allclose(joint, np.eye(2), rtol=1e-7)
        joint = joint_derivative_gram(2.0, 0.5, [0.0])
        np.testing.assert_allclose(joint, np.diag([4.0, 16.0]), rtol=1e-7)

    def test_cross_block_value(self):
        # Cov(f(x_0), f'(x_1)) at xs = [0, 1]: (x_0 - x_1) e^{-1/2}
        joint = joint_derivative_gram(1.0, 1.0, [0.0, 1.0])
        assert joint[0, 3] == pytest.approx(-math.exp(-0.5), abs=1e-9)
        assert joint[1, 2] == pytest.approx(math.exp(-0.5), abs=1e-9)

    def test_symmetric(self):
        rng = np.random.default_rng(23)
        xs = rng.uniform(0, 10, size=15)
        joint = joint_derivative_gram(1.5, 0.8, xs)
        np.testing.assert_array_equal(joint, joint.T)

    def test_psd_after_jitter(self):
        rng = np.random.default_rng(29)
        xs = np.sort(rng.uniform(0, 10, size=30))
        joint = joint_derivative_gram(2.0, 1.2, xs)
        np.linalg.cholesky(joint)  # must not raise

    def test_cross_block_consistency_with_joint_draws(self):
        """Finite differences of exact joint draws track the derivative half."""
        rng = np.random.default_rng(31)
        xs = np.linspace(0, 10, 200)
        joint = joint_derivative_gram(1.0, 1.0, xs)
        chol = np.linalg.cholesky(joint)
        draw = chol @ rng.standard_normal(2 * len(xs))
        f, fdot = draw[: len(xs)], draw[len(xs):]
        fd = np.gradient(f, xs)
        corr = np.corrcoef(fd, fdot)[0, 1]
        assert corr > 0.99

    def test_singular_matrix_raises(self):
        with pytest.raises(NumericallySingular):
            cholesky_with_jitter(-np.eye(3), 1.0)
