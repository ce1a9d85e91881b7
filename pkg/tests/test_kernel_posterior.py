import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from branching import AlignedOffspring
from cosine_basis import CosineBasis
from errors import OptimizerError
from hawkes_core import ExpToyKernel, ObservationWindow, simulate_poisson
from kernel_posterior import (BasisKernel, KernelPosterior, LaplaceObjective, fit_kernel_posterior,
                              gamma_mode, gamma_parameters, joint_log_posterior, mu_posterior, phi_marginal,
                              sample_kernel)
from metrics import l2_distance
from run_config import OptimizerSettings


def offsets_from(lags, censors, censor_times=None, weights=None):
    lags = np.asarray(lags, dtype=float)
    censors = np.asarray(censors, dtype=float)
    censor_times = censors if censor_times is None else np.asarray(censor_times, dtype=float)
    return AlignedOffspring(lags, censors, censor_times, 0.0, math.pi, weights)


def poisson_offspring(parents, seed):
    """Offspring lags of `parents` parents, each observed over the whole of [0, pi]."""
    rng = np.random.default_rng(seed)
    kernel = ExpToyKernel()
    window = ObservationWindow(0.0, math.pi)
    lags = np.concatenate([simulate_poisson(kernel, 5.0, window, rng).times for _ in range(parents)])
    return offsets_from(lags, np.full(lags.size, math.pi), np.full(parents, math.pi))


class TestMuPosterior:
    def test_gamma_two_n_two_t(self):
        post = mu_posterior(100, math.pi)
        assert (post.shape, post.rate) == (200, pytest.approx(2 * math.pi))
        assert post.mean == pytest.approx(100 / math.pi)
        assert post.variance == pytest.approx(100 / (2 * math.pi ** 2))

    def test_no_immigrants_is_proper(self):
        post = mu_posterior(0, 2.0)
        assert post.shape == 1.0 and post.rate == 4.0
        assert post.mode == 0.0

    def test_rejects_zero_duration(self):
        with pytest.raises(ValueError):
            mu_posterior(3, 0.0)

    def test_matches_brute_force_conjugate_update(self):
        immigrants, duration = 20, math.pi
        grid = np.linspace(1e-6, 20.0, 200_001)
        log_prior = stats.gamma.logpdf(grid * duration, immigrants, scale=1.0) + math.log(duration)
        log_like = immigrants * np.log(grid) - grid * duration
        unnormalised = np.exp(log_prior + log_like - np.max(log_prior + log_like))
        density = unnormalised / trapezoid(unnormalised, grid)
        post = mu_posterior(immigrants, duration)
        exact = stats.gamma.pdf(grid, post.shape, scale=1.0 / post.rate)
        np.testing.assert_allclose(density, exact, atol=1e-6)

    def test_gamma_mode(self):
        assert gamma_mode(3.0, 2.0) == pytest.approx(1.0)
        assert gamma_mode(0.5, 2.0) == 0.0


class TestJointLogPosterior:
    def test_prior_only_is_maximised_at_zero(self, small_basis):
        empty = offsets_from([], [], [])
        value, grad = joint_log_posterior(np.zeros(small_basis.K), empty, small_basis)
        np.testing.assert_allclose(grad, 0.0)
        other, _ = joint_log_posterior(np.full(small_basis.K, 0.1), empty, small_basis)
        assert value > other

    def test_gradient_matches_finite_differences(self, rng, small_basis):
        aligned = offsets_from(rng.uniform(0, 1, 40), np.full(40, 2.0), rng.uniform(0, math.pi, 60))
        omega = 0.05 * rng.standard_normal(small_basis.K)
        omega[0] = 2.0
        _, grad = joint_log_posterior(omega, aligned, small_basis)
        h = 1e-6
        fd = np.array([(joint_log_posterior(omega + h * e, aligned, small_basis)[0]
                        - joint_log_posterior(omega - h * e, aligned, small_basis)[0]) / (2 * h)
                       for e in np.eye(small_basis.K)])
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-5)

    def test_log_singularity(self):
        basis = CosineBasis(K=1)
        value, _ = joint_log_posterior(np.zeros(1), offsets_from([0.2], [1.0]), basis)
        assert value == -math.inf

    def test_weighted_offsets_scale_log_terms(self, small_basis, rng):
        lags = rng.uniform(0, 1, 10)
        omega = np.full(small_basis.K, 0.3)
        single = joint_log_posterior(omega, offsets_from(lags, np.full(10, 2.0), []), small_basis)[0]
        doubled = joint_log_posterior(omega, offsets_from(np.tile(lags, 2), np.full(20, 2.0), [],
                                                          np.full(20, 0.5)), small_basis)[0]
        assert doubled == pytest.approx(single)


class TestFitKernelPosterior:
    def test_single_basis_map_matches_root_finding(self):
        basis = CosineBasis(K=1)
        lags = np.linspace(0.1, 2.0, 25)
        censor_times = np.linspace(0.5, math.pi, 40)
        post = fit_kernel_posterior(offsets_from(lags, np.full(25, math.pi), censor_times), basis)
        slope = censor_times.sum() / math.pi + 1.0 / basis.eigenvalue(0)
        root = brentq(lambda w: 2 * lags.size / w - slope * w, 1e-6, 1e3)
        assert abs(post.omega_hat[0]) == pytest.approx(root, rel=1e-6)

    def test_doubling_censors_halves_constant_kernel(self):
        basis = CosineBasis(K=1, b=1e-8)
        lags = np.linspace(0.1, 2.0, 25)
        censor_times = np.full(400, math.pi)
        phi = [BasisKernel(basis, fit_kernel_posterior(offsets_from(lags, np.full(25, math.pi), c), basis).omega_hat)(1.0)
               for c in (censor_times, np.concatenate([censor_times, censor_times]))]
        assert phi[1] / phi[0] == pytest.approx(0.5, rel=1e-4)

    def test_no_data_reduces_to_prior(self, small_basis):
        post = fit_kernel_posterior(offsets_from([], [], np.zeros(5)), small_basis)
        np.testing.assert_allclose(post.omega_hat, 0.0, atol=1e-6)
        np.testing.assert_allclose(post.Q, np.diag(small_basis.eigenvalues), rtol=1e-8, atol=1e-10)

    def test_recovers_exponential_kernel(self):
        aligned = poisson_offspring(10_000, seed=31)
        post = fit_kernel_posterior(aligned, CosineBasis())
        grid = np.linspace(0, math.pi, 512)
        mean = phi_marginal(post, grid).mean
        estimate = lambda t: np.interp(t, grid, mean)
        assert l2_distance(estimate, ExpToyKernel()) < 0.3

    def test_mode_properties(self):
        aligned = poisson_offspring(300, seed=32)
        basis = CosineBasis(K=16)
        post = fit_kernel_posterior(aligned, basis)
        objective = LaplaceObjective(aligned, basis)
        value, grad = objective.value_and_gradient(post.omega_hat)
        assert np.linalg.norm(grad) <= 1e-6 * (1 + abs(value))
        ray = [objective.value_and_gradient(c * post.omega_hat)[0] for c in np.linspace(0.6, 1.4, 9)]
        assert np.all(np.diff(ray, 2) <= 1e-9)
        np.testing.assert_allclose(post.Q, post.Q.T)
        assert np.linalg.eigvalsh(post.Q).min() > 0

    def test_permutation_invariance(self, rng):
        aligned = poisson_offspring(200, seed=33)
        order = rng.permutation(aligned.offsets.size)
        shuffled = AlignedOffspring(aligned.offsets[order], aligned.parent_censors[order],
                                    aligned.censor_times[::-1], aligned.immigrants, aligned.duration)
        basis = CosineBasis(K=8)
        grid = np.linspace(0, math.pi, 50)
        a = BasisKernel(basis, fit_kernel_posterior(aligned, basis).omega_hat)(grid)
        b = BasisKernel(basis, fit_kernel_posterior(shuffled, basis).omega_hat)(grid)
        np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-8)

    def test_non_convergence_reports_gradient(self):
        aligned = poisson_offspring(200, seed=34)
        settings = OptimizerSettings(max_iterations=1, restarts=0, newton_steps=0)
        with pytest.raises(OptimizerError) as info:
            fit_kernel_posterior(aligned, CosineBasis(), settings)
        assert info.value.gradient_norm > 0


class TestPhiMarginal:
    def test_gamma_moments(self, rng):
        nu = rng.uniform(-2, 2, 100)
        sigma2 = rng.uniform(0.01, 1.5, 100)
        alpha, beta = gamma_parameters(nu, sigma2)
        np.testing.assert_allclose(alpha / beta, (nu ** 2 + sigma2) / 2)
        np.testing.assert_allclose(alpha / beta ** 2, nu ** 2 * sigma2 + sigma2 ** 2 / 2)

    def test_moments_match_monte_carlo_squares(self, rng):
        nu, sigma2 = 0.8, 0.3
        draws = 0.5 * rng.normal(nu, math.sqrt(sigma2), 200_000) ** 2
        alpha, beta = gamma_parameters(nu, sigma2)
        assert draws.mean() == pytest.approx(alpha / beta, rel=0.01)
        assert draws.var() == pytest.approx(alpha / beta ** 2, rel=0.03)

    def test_zero_mean(self):
        alpha, beta = gamma_parameters(0.0, 0.25)
        assert alpha == pytest.approx(0.5)
        assert beta == pytest.approx(4.0)

    def test_clamps_nonpositive_variance(self, small_basis, caplog):
        post = KernelPosterior(small_basis, np.full(small_basis.K, 0.2), np.zeros((small_basis.K, small_basis.K)))
        marginal = phi_marginal(post, np.linspace(0, math.pi, 5))
        assert marginal.clamped == 5
        np.testing.assert_allclose(marginal.sigma2, 1e-12)
        assert 'clamped' in caplog.text


class TestSampleKernel:
    def test_degenerate_covariance_gives_plug_in(self, small_basis):
        omega = np.linspace(0.5, -0.2, small_basis.K)
        post = KernelPosterior(small_basis, omega, 1e-30 * np.eye(small_basis.K))
        t = np.linspace(0, math.pi, 20)
        np.testing.assert_allclose(sample_kernel(post, seed=1)(t), BasisKernel(small_basis, omega)(t), atol=1e-12)

    def test_monte_carlo_mean_matches_marginal(self, small_basis, rng):
        omega = np.linspace(0.5, -0.2, small_basis.K)
        Q = 0.01 * np.eye(small_basis.K)
        post = KernelPosterior(small_basis, omega, Q)
        t = np.array([0.2, 1.0, 2.5])
        draws = np.array([sample_kernel(post, rng)(t) for _ in range(10_000)])
        marginal = phi_marginal(post, t)
        bound = 4 * np.sqrt(marginal.variance / 10_000)
        assert np.all(np.abs(draws.mean(axis=0) - marginal.mean) <= bound)

    def test_seeded(self, small_basis):
        post = KernelPosterior(small_basis, np.full(small_basis.K, 0.1), 0.01 * np.eye(small_basis.K))
        np.testing.assert_array_equal(sample_kernel(post, seed=4).weights, sample_kernel(post, seed=4).weights)


class TestBasisKernel:
    def test_integral_matches_quadrature(self, small_basis, rng):
        kernel = BasisKernel(small_basis, rng.standard_normal(small_basis.K))
        t = np.linspace(0, 1.7, 20001)
        assert kernel.integral(1.7) == pytest.approx(trapezoid(kernel(t), t), rel=1e-6)

    def test_zero_outside_domain_and_bounded(self, small_basis, rng):
        kernel = BasisKernel(small_basis, rng.standard_normal(small_basis.K))
        assert kernel(4.0) == 0.0
        assert np.all(kernel(np.linspace(0, math.pi, 200)) <= kernel.bound + 1e-12)
