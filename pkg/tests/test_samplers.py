import math

import numpy as np
import pytest

import samplers
from branching import TruncationPolicy, parent_probabilities
from conftest import seq, simulate_group
from cosine_basis import CosineBasis
from errors import SamplerError
from hawkes_core import EventSequence, HawkesModel, zero_kernel
from kernel_posterior import BasisKernel, KernelPosterior, weight_log_prior
from run_config import BasisSettings, SamplerConfig
from samplers import (em_hawkes, expectation_step, gibbs_hawkes, gibbs_step, kernel_grid, mode_horizon,
                      observed_log_posterior, predict_mean_kernel)


class TestPredictMeanKernel:
    def test_single_row_collapses_bands(self):
        prediction = predict_mean_kernel([[1.0, 2.0, 0.5]], kernel_grid(3))
        for band in (prediction.mean, prediction.p10, prediction.p50, prediction.p90):
            np.testing.assert_allclose(band, [1.0, 2.0, 0.5])

    def test_pointwise_mean_and_median(self):
        rows = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]])
        prediction = predict_mean_kernel(rows, kernel_grid(2))
        np.testing.assert_allclose(prediction.mean, [2.0, 3.0])
        np.testing.assert_allclose(prediction.p50, [2.0, 3.0])
        assert np.all(prediction.p10 <= prediction.p50) and np.all(prediction.p50 <= prediction.p90)

    def test_requires_a_row(self):
        with pytest.raises(ValueError):
            predict_mean_kernel(np.empty((0, 3)), kernel_grid(3))

    def test_kernel_is_nonnegative_interpolant(self):
        prediction = predict_mean_kernel([[-1.0, 2.0]], kernel_grid(2))
        assert prediction.kernel(0.0) == 0.0
        assert prediction.kernel(math.pi) == pytest.approx(2.0)


class TestGibbsHawkes:
    def test_seeded_runs_are_identical(self, exp_model, quick_config):
        group = simulate_group(exp_model, 3, seed=1)
        first = gibbs_hawkes(group, quick_config, seed=5)
        second = gibbs_hawkes(group, quick_config, seed=5)
        assert first.to_json() == second.to_json()

    def test_result_shape(self, exp_model, quick_config):
        group = simulate_group(exp_model, 3, seed=2)
        fit = gibbs_hawkes(group, quick_config)
        assert fit.method == 'gibbs'
        assert fit.iterations_run == quick_config.iterations
        assert len(fit.trace_mu) == quick_config.iterations
        assert len(fit.grid) == len(fit.kernel) == quick_config.grid_points
        assert fit.n_events == sum(len(s) for s in group)
        assert fit.mu_p10 <= fit.mu_p90
        assert np.all(np.asarray(fit.kernel_p10) <= np.asarray(fit.kernel_p50) + 1e-12)
        assert np.all(np.asarray(fit.kernel_p50) <= np.asarray(fit.kernel_p90) + 1e-12)

    @pytest.mark.slow
    def test_poisson_data_give_background_rate(self):
        group = simulate_group(HawkesModel(10.0, zero_kernel()), 30, seed=3)
        duration = 30 * math.pi
        rate = sum(len(s) for s in group) / duration
        config = SamplerConfig(iterations=300, burn_in=100, grid_points=128)
        fit = gibbs_hawkes(group, config, seed=1)
        sd = float(np.std(fit.trace_mu[config.burn_in:]))
        assert abs(rate - 10.0) <= 4 * math.sqrt(10.0 / duration)
        assert abs(fit.mu - rate) <= 3 * sd
        grid = np.asarray(fit.grid)
        assert np.all(np.asarray(fit.kernel)[grid >= 0.2] < 0.5)

    def test_failures_report_the_iteration(self, exp_model, quick_config, monkeypatch):
        def broken(*args, **kwargs):
            raise ValueError("boom")

        monkeypatch.setattr(samplers, 'fit_kernel_posterior', broken)
        with pytest.raises(SamplerError) as info:
            gibbs_hawkes(simulate_group(exp_model, 2, seed=4), quick_config)
        assert info.value.iteration == 0
        assert 'boom' in str(info.value)

    def test_rejects_empty_or_mixed_groups(self, quick_config):
        with pytest.raises(ValueError):
            gibbs_hawkes([], quick_config)
        mixed = [seq(0.5), EventSequence.from_times([0.5], end=2.0)]
        with pytest.raises(ValueError):
            gibbs_hawkes(mixed, quick_config)


class TestExpectationStep:
    def test_sampled_immigrants_agree_with_probabilities(self, exp_model, quick_config):
        group = simulate_group(exp_model, 3, seed=6)
        config = quick_config.model_copy(update={'em_branching_samples': 2000, 'truncation': None})
        exact = expectation_step(group, exp_model.mu, exp_model.kernel,
                                 config.model_copy(update={'em_expectation': 'exact'}), None)
        sampled = expectation_step(group, exp_model.mu, exp_model.kernel, config, np.random.default_rng(0))
        p0 = np.concatenate([parent_probabilities(s, exp_model.mu, exp_model.kernel).background for s in group])
        bound = 4 * math.sqrt(np.sum(p0 * (1 - p0)) / 2000)
        assert exact.immigrants == pytest.approx(p0.sum())
        assert abs(sampled.immigrants - exact.immigrants) <= bound + 1e-9
        assert sampled.censor_times.size == exact.censor_times.size == sum(len(s) for s in group)


class TestEmHawkes:
    def test_single_event_gives_gamma_mode(self, quick_config):
        config = quick_config.model_copy(update={'em_max_iters': 1})
        fit = em_hawkes([seq(1.0)], config)
        assert fit.mu == pytest.approx(1 / (2 * math.pi))
        assert fit.iterations_run == 1
        assert fit.converged is False

    def test_bands_are_ordered(self, exp_model, quick_config):
        config = quick_config.model_copy(update={'em_max_iters': 5, 'em_expectation': 'exact'})
        fit = em_hawkes(simulate_group(exp_model, 3, seed=7), config)
        assert fit.method == 'em'
        assert np.all(np.asarray(fit.kernel_p10) <= np.asarray(fit.kernel_p50) + 1e-12)
        assert np.all(np.asarray(fit.kernel_p50) <= np.asarray(fit.kernel_p90) + 1e-12)
        assert fit.mu_p10 <= fit.mu <= fit.mu_p90

    def test_exact_expectation_is_seed_free(self, exp_model, quick_config):
        config = quick_config.model_copy(update={'em_max_iters': 3, 'em_expectation': 'exact'})
        group = simulate_group(exp_model, 2, seed=8)
        assert em_hawkes(group, config, seed=1).to_json() == em_hawkes(group, config, seed=2).to_json()

    def test_failures_report_the_iteration(self, quick_config, monkeypatch):
        def broken(*args, **kwargs):
            raise ValueError("bad")

        monkeypatch.setattr(samplers, 'fit_kernel_posterior', broken)
        with pytest.raises(SamplerError):
            em_hawkes([seq(1.0, 1.2)], quick_config)

    def test_flat_start_recovers_the_cosine_lobe(self, cos_model):
        config = SamplerConfig(basis=BasisSettings(K=16), grid_points=64, truncation=None,
                               em_expectation='exact', em_max_iters=80)
        fit = em_hawkes(simulate_group(cos_model, 5, seed=11), config)
        kernel = fit.kernel_function()
        assert np.all(kernel(np.array([0.5, 0.67, 0.8])) > 0.3)

    def test_exact_objective_never_decreases(self, cos_model):
        config = SamplerConfig(basis=BasisSettings(K=8), grid_points=64, truncation=None,
                               em_expectation='exact', em_max_iters=15, em_tolerance=1e-12)
        fit = em_hawkes(simulate_group(cos_model, 3, seed=12), config)
        assert len(fit.trace_objective) == 15
        assert np.all(np.diff(fit.trace_objective) >= -1e-2)

    def test_objective_of_a_silent_kernel(self, small_basis):
        group = [seq(0.5, 1.5), seq(2.0)]
        value = observed_log_posterior(group, 0.5, BasisKernel(small_basis, np.zeros(small_basis.K)))
        expected = 3 * math.log(0.5) - 0.5 * 2 * math.pi + weight_log_prior(small_basis, np.zeros(small_basis.K))
        assert value == pytest.approx(expected)


class TestModeHorizon:
    # f(t) = 1 + cos t, weight variance 0.2
    @pytest.fixture
    def peaked(self):
        basis = CosineBasis(K=2)
        omega = np.array([math.sqrt(math.pi), math.sqrt(math.pi / 2)])
        return KernelPosterior(basis, omega, 0.2 * np.eye(2))

    def test_horizon_cuts_where_the_mode_vanishes(self, peaked):
        horizon = mode_horizon(peaked, 1e-4, math.pi)
        assert 1.0 < horizon < 2.5

    def test_vanishing_mode_gives_zero_horizon(self):
        basis = CosineBasis(K=2)
        assert mode_horizon(KernelPosterior(basis, np.zeros(2), np.eye(2)), 1e-4, math.pi) == 0.0

    def test_gibbs_step_prunes_candidates(self, peaked):
        group = [seq(0.05, 0.1, 2.9, 3.0, 3.1), seq(0.2, 2.95)]
        config = SamplerConfig(iterations=2, burn_in=0, basis=BasisSettings(K=2))
        phi = peaked.map_kernel()
        state = gibbs_step(group, 1.0, phi, peaked.basis, config, np.random.default_rng(0), peaked, 1)
        assert state.horizon < 2.5
        assert np.all(state.aligned.offsets <= state.horizon)
        cut = parent_probabilities(group[0], 1.0, phi, TruncationPolicy(1e-4, state.horizon))
        full = parent_probabilities(group[0], 1.0, phi)
        assert cut.candidates.size < full.candidates.size

    def test_untruncated_step_has_no_horizon(self, peaked):
        config = SamplerConfig(iterations=2, burn_in=0, basis=BasisSettings(K=2), truncation=None)
        state = gibbs_step([seq(0.1, 3.0)], 1.0, peaked.map_kernel(), peaked.basis, config,
                           np.random.default_rng(0), peaked, 1)
        assert state.horizon == math.inf
