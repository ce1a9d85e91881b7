import logging
import math
import time
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from tqdm import tqdm

from branching import (AlignedOffspring, TruncationPolicy, align_offspring, average_offspring,
                       expected_offspring, parent_probabilities, sample_branching, sample_parents,
                       truncation_horizon)
from errors import NumericalError, SamplerError
from fit_result import FitResult, floats
from hawkes_core import EventSequence, HawkesModel, TabulatedKernel, as_generator, log_likelihood
from kernel_posterior import (BasisKernel, KernelPosterior, MuPosterior, fit_kernel_posterior, mu_posterior,
                              phi_marginal, sample_kernel, weight_log_prior)
from run_config import SamplerConfig

log = logging.getLogger(__name__)

band_percentiles = (10, 50, 90)
horizon_grid_points = 512


@dataclass(frozen=True, eq=False)
class KernelPrediction:
    kernel: TabulatedKernel
    mean: np.ndarray
    p10: np.ndarray
    p50: np.ndarray
    p90: np.ndarray


def kernel_grid(points, end=math.pi) -> np.ndarray:
    return np.linspace(0.0, end, points)


def predict_mean_kernel(traces, grid) -> KernelPrediction:
    rows = np.atleast_2d(np.asarray(traces, dtype=float))
    if rows.shape[0] < 1:
        raise ValueError("at least one post-burn-in iteration is required")
    mean = rows.mean(axis=0)
    p10, p50, p90 = np.percentile(rows, band_percentiles, axis=0)
    return KernelPrediction(TabulatedKernel(grid, np.maximum(mean, 0.0)), mean, p10, p50, p90)


def _check_group(group: Sequence[EventSequence]):
    if not group:
        raise ValueError("fit group is empty")
    window = group[0].window
    if any(seq.window != window for seq in group):
        raise ValueError("all sequences of a fit group must share one observation window")
    return window


def _truncation(config: SamplerConfig):
    return None if config.truncation is None else TruncationPolicy(config.truncation)


def mode_horizon(post: KernelPosterior, epsilon, upper, points=horizon_grid_points) -> float:
    """Tail-mass horizon of the element-wise marginal-mode kernel; 0 when that kernel vanishes."""
    grid = np.linspace(0.0, min(upper, post.basis.domain_T), points)
    mode = phi_marginal(post, grid).mode
    if not np.any(mode > 0):
        return 0.0
    return truncation_horizon(TabulatedKernel(grid, mode), epsilon, grid[-1])


def _gibbs_truncation(config: SamplerConfig, phi, previous, upper):
    if config.truncation is None:
        return None
    if previous is None:
        horizon = truncation_horizon(phi, config.truncation, upper)
    else:
        horizon = mode_horizon(previous, config.truncation, upper)
    return TruncationPolicy(config.truncation, horizon)


def _initial_state(group, config, basis):
    duration = sum(seq.window.length for seq in group)
    events = sum(len(seq) for seq in group)
    mu = events / (2.0 * duration) if events else 1.0
    return mu, BasisKernel(basis, np.full(basis.K, config.optimizer.initial_weight))


def _flat_state(group, config, basis):
    duration = sum(seq.window.length for seq in group)
    events = sum(len(seq) for seq in group)
    weights = np.zeros(basis.K)
    weights[0] = config.optimizer.initial_weight
    return (events / duration if events else 1.0), BasisKernel(basis, weights)


class GibbsState(NamedTuple):
    mu: float
    phi: BasisKernel
    aligned: AlignedOffspring
    post: KernelPosterior
    mu_post: MuPosterior
    horizon: float


def gibbs_step(group, mu, phi, basis, config: SamplerConfig, rng, previous: KernelPosterior = None,
               iteration=0) -> GibbsState:
    """One sweep: parents under (mu, phi), then fresh draws of mu and phi given the structure.

    Candidate parents are cut at the tail-mass horizon of the previous
    posterior's marginal-mode kernel, or of ``phi`` on the first sweep.
    """
    truncation = _gibbs_truncation(config, phi, previous, group[0].window.length)
    structures = [sample_parents(seq, mu, phi, truncation, rng) for seq in group]
    aligned = align_offspring(group, structures)
    initial = None if previous is None else previous.omega_hat
    post = fit_kernel_posterior(aligned, basis, config.optimizer, initial=initial, seed=iteration)
    mu_post = mu_posterior(aligned.immigrants, aligned.duration)
    horizon = math.inf if truncation is None else truncation.horizon
    return GibbsState(mu_post.sample(rng), sample_kernel(post, rng), aligned, post, mu_post, horizon)

def gibbs_hawkes(group: Sequence[EventSequence], config: SamplerConfig, progress=False, seed=None) -> FitResult:
    window = _check_group(group)
    basis = config.basis.build()
    rng = as_generator(config.seed if seed is None else seed)
    grid = kernel_grid(config.grid_points, basis.domain_T)
    mu, phi = _initial_state(group, config, basis)
    post = None
    kept = config.iterations - config.burn_in
    kernel_rows = np.empty((kept, grid.size))
    mu_means, mu_draws = [], []
    trace_mu, trace_immigrants, trace_objective, seconds = [], [], [], []
    for k in tqdm(range(config.iterations), desc='gibbs', disable=not progress, leave=False):
        started = time.perf_counter()
        try:
            state = gibbs_step(group, mu, phi, basis, config, rng, post, k)
        except (ValueError, NumericalError) as e:
            raise SamplerError(k, e) from e
        mu, phi, post = state.mu, state.phi, state.post
        if k >= config.burn_in:
            kernel_rows[k - config.burn_in] = phi_marginal(post, grid).mean
            mu_means.append(state.mu_post.mean)
            mu_draws.append(mu)
        trace_mu.append(mu)
        trace_immigrants.append(state.aligned.immigrants)
        trace_objective.append(post.log_posterior)
        seconds.append(time.perf_counter() - started)
        log.debug("gibbs iteration %d: mu=%.4g immigrants=%d horizon=%.4g %.4fs", k, mu,
                  state.aligned.immigrants, state.horizon, seconds[-1])
    prediction = predict_mean_kernel(kernel_rows, grid)
    mu_p10, mu_p90 = np.percentile(mu_draws, [10, 90])
    return FitResult(method='gibbs', n_sequences=len(group), n_events=sum(len(s) for s in group),
                     window_end=window.end, grid=floats(grid), kernel=floats(prediction.mean),
                     kernel_p10=floats(prediction.p10), kernel_p50=floats(prediction.p50),
                     kernel_p90=floats(prediction.p90), mu=float(np.mean(mu_means)),
                     mu_p10=float(mu_p10), mu_p90=float(mu_p90), iterations_run=config.iterations,
                     trace_mu=floats(trace_mu), trace_immigrants=floats(trace_immigrants),
                     trace_objective=floats(trace_objective), seconds_per_iteration=floats(seconds))


def expectation_step(group, mu, phi, config: SamplerConfig, rng) -> AlignedOffspring:
    truncation = _truncation(config)
    dists = [parent_probabilities(seq, mu, phi, truncation) for seq in group]
    if config.em_expectation == 'exact':
        return expected_offspring(group, dists)
    samples = []
    for _ in range(config.em_branching_samples):
        structures = [sample_branching(dist, rng) for dist in dists]
        samples.append(align_offspring(group, structures))
    return average_offspring(samples)


def observed_log_posterior(group, mu, phi: BasisKernel) -> float:
    model = HawkesModel(mu, phi)
    return sum(log_likelihood(model, seq) for seq in group) + weight_log_prior(phi.basis, phi.weights)


def _relative_change(old, new):
    return float(np.linalg.norm(new - old) / max(np.linalg.norm(old), 1e-12))


def em_hawkes(group: Sequence[EventSequence], config: SamplerConfig, progress=False, seed=None) -> FitResult:
    """EM from a flat kernel.

    The E-step weighs parents under the weight-space MAP kernel; the reported
    kernel is the element-wise marginal mode, which is zero wherever the
    Gamma shape drops below one.
    """
    window = _check_group(group)
    basis = config.basis.build()
    rng = as_generator(config.seed if seed is None else seed)
    grid = kernel_grid(config.grid_points, basis.domain_T)
    mu, phi = _flat_state(group, config, basis)
    phi_grid = phi(grid)
    converged = False
    trace_mu, trace_immigrants, trace_objective, seconds = [], [], [], []
    post = mu_post = None
    for it in tqdm(range(config.em_max_iters), desc='em', disable=not progress, leave=False):
        started = time.perf_counter()
        try:
            aligned = expectation_step(group, mu, phi, config, rng)
            post = fit_kernel_posterior(aligned, basis, config.optimizer, initial=phi.weights, seed=it)
            mu_post = mu_posterior(aligned.immigrants, aligned.duration)
        except (ValueError, NumericalError) as e:
            raise SamplerError(it, e) from e
        new_mu = float(mu_post.mode)
        new_grid = phi_marginal(post, grid).mode
        change = max(abs(new_mu - mu) / max(abs(mu), 1e-12), _relative_change(phi_grid, new_grid))
        mu, phi_grid, phi = new_mu, new_grid, post.map_kernel()
        trace_mu.append(mu)
        trace_immigrants.append(aligned.immigrants)
        trace_objective.append(observed_log_posterior(group, mu, phi))
        seconds.append(time.perf_counter() - started)
        log.debug("em iteration %d: mu=%.4g change=%.3g %.4fs", it, mu, change, seconds[-1])
        if change < config.em_tolerance:
            converged = True
            break
    marginal = phi_marginal(post, grid)
    p10, p50, p90 = (marginal.quantile(q / 100.0) for q in band_percentiles)
    return FitResult(method='em', n_sequences=len(group), n_events=sum(len(s) for s in group),
                     window_end=window.end, grid=floats(grid), kernel=floats(phi_grid),
                     kernel_p10=floats(p10), kernel_p50=floats(p50), kernel_p90=floats(p90), mu=mu,
                     mu_p10=float(mu_post.quantile(0.1)), mu_p90=float(mu_post.quantile(0.9)),
                     iterations_run=len(trace_mu), converged=converged, trace_mu=floats(trace_mu),
                     trace_immigrants=floats(trace_immigrants), trace_objective=floats(trace_objective),
                     seconds_per_iteration=floats(seconds))
