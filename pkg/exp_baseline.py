import logging
import math
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from errors import BaselineError
from fit_result import FitResult, floats
from hawkes_core import EventSequence, ExponentialKernel, HawkesModel, as_generator, exp_decay_sums
from run_config import OptimizerSettings
from samplers import kernel_grid

log = logging.getLogger(__name__)

mu_start_range = (0.1, 10.0)
a1_start_range = (0.01, 0.99)
a2_start_range = (0.1, 50.0)
log_bounds = [(math.log(1e-10), math.log(1e6)), (math.log(1e-10), math.log(1e3)), (math.log(1e-6), math.log(1e4))]


def exp_log_likelihood_and_gradient(log_params, group: Sequence[EventSequence]) -> Tuple[float, np.ndarray]:
    """Summed log-likelihood of (log mu, log a1, log a2) and its gradient."""
    mu, a1, a2 = np.exp(np.asarray(log_params, dtype=float))
    value = 0.0
    grad = np.zeros(3)
    for seq in group:
        tails = seq.window.end - seq.times
        decay = np.exp(-a2 * tails)
        value -= mu * seq.window.length + a1 * np.sum(1.0 - decay)
        grad[0] -= seq.window.length
        grad[1] -= np.sum(1.0 - decay)
        grad[2] -= a1 * np.sum(tails * decay)
        if not len(seq):
            continue
        A, dA = exp_decay_sums(seq.times, a2)
        lam = mu + a1 * a2 * A
        if np.any(lam <= 0):
            return -math.inf, np.full(3, np.nan)
        value += np.sum(np.log(lam))
        grad[0] += np.sum(1.0 / lam)
        grad[1] += np.sum(a2 * A / lam)
        grad[2] += np.sum(a1 * (A + a2 * dA) / lam)
    return float(value), grad * np.array([mu, a1, a2])


def group_log_likelihood(model: HawkesModel, group: Sequence[EventSequence]) -> float:
    kernel = model.kernel
    return exp_log_likelihood_and_gradient(np.log([model.mu, kernel.a1, kernel.a2]), group)[0]


def _log_uniform(rng, low, high):
    return math.exp(rng.uniform(math.log(low), math.log(high)))


def start_points(group, starts, seed=None) -> np.ndarray:
    rng = as_generator(seed)
    duration = sum(seq.window.length for seq in group)
    rate = max(sum(len(seq) for seq in group), 1) / duration
    points = []
    for _ in range(starts):
        points.append(np.log([_log_uniform(rng, mu_start_range[0] * rate, mu_start_range[1] * rate),
                              _log_uniform(rng, *a1_start_range),
                              _log_uniform(rng, *a2_start_range)]))
    return points


def fit_exp_mle(group: Sequence[EventSequence], init=None, settings: OptimizerSettings = None, seed=0) -> HawkesModel:
    if not group:
        raise ValueError("fit group is empty")
    settings = settings or OptimizerSettings()
    points = start_points(group, settings.starts, seed)
    if init is not None:
        points.insert(0, np.log([init.mu, init.kernel.a1, init.kernel.a2]))

    def negative(theta):
        value, grad = exp_log_likelihood_and_gradient(theta, group)
        if not math.isfinite(value):
            return math.inf, np.zeros(3)
        return -value, -grad

    best, best_failed = None, -math.inf
    for k, start in enumerate(points):
        result = minimize(negative, start, jac=True, method='L-BFGS-B', bounds=log_bounds,
                          options={'maxiter': settings.max_iterations})
        objective = -float(result.fun)
        log.debug("exp-mle start %d: success=%s objective=%.6g", k, result.success, objective)
        if not (result.success and math.isfinite(objective)):
            best_failed = max(best_failed, objective) if math.isfinite(objective) else best_failed
            continue
        if best is None or objective > best[1]:
            best = (result, objective)
    if best is None:
        raise BaselineError("exponential MLE did not converge from any start", best_failed)
    mu, a1, a2 = np.exp(best[0].x)
    return HawkesModel(float(mu), ExponentialKernel(float(a1), float(a2)))


def exp_fit_result(group: Sequence[EventSequence], model: HawkesModel, grid_points=256) -> FitResult:
    grid = kernel_grid(grid_points, group[0].window.length)
    values = floats(model.kernel(grid))
    parameters = dict(mu=model.mu, **model.kernel.params(), log_likelihood=group_log_likelihood(model, group))
    return FitResult(method='exp-mle', n_sequences=len(group), n_events=sum(len(s) for s in group),
                     window_end=group[0].window.end, grid=floats(grid), kernel=values, kernel_p10=values,
                     kernel_p50=values, kernel_p90=values, mu=model.mu, mu_p10=model.mu, mu_p90=model.mu,
                     parameters=parameters, converged=True)
