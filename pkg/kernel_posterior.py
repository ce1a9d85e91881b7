import logging
import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np
from scipy import linalg, stats
from scipy.optimize import minimize

from branching import AlignedOffspring
from cosine_basis import CosineBasis
from errors import OptimizerError, PosteriorError
from hawkes_core import TriggeringKernel, as_generator
from run_config import OptimizerSettings

log = logging.getLogger(__name__)

variance_floor = 1e-12
numerics_warnings = Counter()


@dataclass(frozen=True)
class MuPosterior:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError(f"Gamma posterior needs positive shape and rate (got {self.shape}, {self.rate})")

    @property
    def mean(self):
        return self.shape / self.rate

    @property
    def variance(self):
        return self.shape / self.rate ** 2

    @property
    def mode(self):
        return gamma_mode(self.shape, self.rate)

    def quantile(self, q):
        return stats.gamma.ppf(q, self.shape, scale=1.0 / self.rate)

    def sample(self, seed=None):
        return float(as_generator(seed).gamma(self.shape, 1.0 / self.rate))


def gamma_mode(shape, rate) -> np.ndarray:
    shape = np.asarray(shape, dtype=float)
    return np.where(shape >= 1.0, (shape - 1.0) / rate, 0.0)


def mu_posterior(immigrants, duration) -> MuPosterior:
    """Gamma(2 N0, 2 D): Gamma(N0, 1) prior on mu*D updated by N0 immigrants.

    The prior shape is floored at 1 so that N0 = 0 still gives a proper law.
    """
    if not duration > 0:
        raise ValueError(f"total duration must be positive (got {duration})")
    if immigrants < 0:
        raise ValueError(f"immigrant count must be nonnegative (got {immigrants})")
    prior_shape = max(float(immigrants), 1.0)
    return MuPosterior(prior_shape + immigrants, 2.0 * duration)


class BasisKernel(TriggeringKernel):
    """phi(t) = (w . e(t))^2 / 2 on the basis domain, zero outside."""
    kind = 'basis'

    def __init__(self, basis: CosineBasis, weights):
        self.basis = basis
        self.weights = np.asarray(weights, dtype=float)

    @property
    def support(self):
        return self.basis.domain_T

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.basis.domain_T)
        f = self.basis.expand(self.weights, np.where(inside, t, 0.0))
        return np.where(inside, 0.5 * f * f, 0.0)

    def integral(self, upper):
        upper = np.clip(np.asarray(upper, dtype=float), 0.0, self.basis.domain_T)
        return self.basis.quadratic_integral(self.weights, upper)

    @property
    def bound(self):
        return 0.5 * float(np.sum(np.abs(self.weights) * self.basis.norms)) ** 2

    def params(self):
        return {'weights': self.weights.tolist()}


def weight_log_prior(basis: CosineBasis, omega) -> float:
    omega = np.asarray(omega, dtype=float)
    return float(-0.5 * (basis.K * math.log(2 * math.pi) + np.sum(np.log(basis.eigenvalues)))
                 - 0.5 * np.sum(omega * omega / basis.eigenvalues))


class LaplaceObjective:

    def __init__(self, offsets: AlignedOffspring, basis: CosineBasis):
        self.basis = basis
        self.design = basis.eval_basis(offsets.offsets).reshape(-1, basis.K)
        self.weights = offsets.offset_weights
        self.integral = basis.summed_integral_matrix(offsets.censor_times)
        self.prior_precision = 1.0 / basis.eigenvalues
        self.log_normaliser = -0.5 * (basis.K * math.log(2 * math.pi) + float(np.sum(np.log(basis.eigenvalues))))

    def value_and_gradient(self, omega):
        omega = np.asarray(omega, dtype=float)
        f = self.design @ omega
        if np.any((f == 0) & (self.weights > 0)):
            return -math.inf, np.full(omega.shape, np.nan)
        quad = self.integral @ omega
        value = (np.sum(self.weights * np.log(0.5 * f * f)) - 0.5 * omega @ quad
                 + self.log_normaliser - 0.5 * np.sum(self.prior_precision * omega * omega))
        grad = self.design.T @ (2.0 * self.weights / f) - quad - self.prior_precision * omega
        return float(value), grad

    def precision(self, omega):
        f = self.design @ np.asarray(omega, dtype=float)
        curvature = 2.0 * self.weights / (f * f)
        return (self.design.T * curvature) @ self.design + self.integral + np.diag(self.prior_precision)


def joint_log_posterior(omega, offsets: AlignedOffspring, basis: CosineBasis) -> Tuple[float, np.ndarray]:
    return LaplaceObjective(offsets, basis).value_and_gradient(omega)


@dataclass(frozen=True, eq=False)
class KernelPosterior:
    basis: CosineBasis
    omega_hat: np.ndarray
    Q: np.ndarray
    log_posterior: float = math.nan

    @cached_property
    def factor(self):
        try:
            return linalg.cholesky(self.Q, lower=True)
        except linalg.LinAlgError as e:
            raise PosteriorError(f"posterior covariance is not positive definite: {e}") from e

    def map_kernel(self) -> BasisKernel:
        return BasisKernel(self.basis, self.omega_hat)


@dataclass(frozen=True, eq=False)
class PhiMarginal:
    nu: np.ndarray
    sigma2: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    clamped: int = 0

    @property
    def mean(self):
        return 0.5 * (self.nu ** 2 + self.sigma2)

    @property
    def variance(self):
        return self.nu ** 2 * self.sigma2 + 0.5 * self.sigma2 ** 2

    @property
    def mode(self):
        return gamma_mode(self.alpha, self.beta)

    def quantile(self, q):
        return stats.gamma.ppf(q, self.alpha, scale=1.0 / self.beta)


def gamma_parameters(nu, sigma2) -> Tuple[np.ndarray, np.ndarray]:
    nu2 = np.asarray(nu, dtype=float) ** 2
    s2 = np.asarray(sigma2, dtype=float)
    alpha = (nu2 + s2) ** 2 / (4 * nu2 * s2 + 2 * s2 ** 2)
    beta = (nu2 + s2) / (2 * nu2 * s2 + s2 ** 2)
    return alpha, beta


def phi_marginal(post: KernelPosterior, t) -> PhiMarginal:
    e = post.basis.eval_basis(t)
    nu = e @ post.omega_hat
    sigma2 = np.einsum('...k,kl,...l->...', e, post.Q, e)
    low = sigma2 <= 0
    clamped = int(np.count_nonzero(low))
    if clamped:
        numerics_warnings['clamped_variance'] += clamped
        log.warning("clamped %d nonpositive marginal variances to %g", clamped, variance_floor)
        sigma2 = np.where(low, variance_floor, sigma2)
    alpha, beta = gamma_parameters(nu, sigma2)
    return PhiMarginal(nu, sigma2, alpha, beta, clamped)


def sample_kernel(post: KernelPosterior, seed=None) -> BasisKernel:
    z = as_generator(seed).standard_normal(post.basis.K)
    return BasisKernel(post.basis, post.omega_hat + post.factor @ z)


def _newton_polish(objective, omega, value, grad, settings):
    for _ in range(settings.newton_steps):
        if np.linalg.norm(grad) <= settings.tolerance * (1 + abs(value)):
            break
        try:
            step = linalg.cho_solve(linalg.cho_factor(objective.precision(omega)), grad)
        except linalg.LinAlgError:
            break
        slope = grad @ step
        t = 1.0
        for _ in range(40):
            trial = omega + t * step
            trial_value, trial_grad = objective.value_and_gradient(trial)
            if math.isfinite(trial_value) and trial_value >= value + 1e-4 * t * slope:
                omega, value, grad = trial, trial_value, trial_grad
                break
            t *= 0.5
        else:
            break
    return omega, value, grad


def _maximise(objective, start, settings):
    def negative(w):
        value, grad = objective.value_and_gradient(w)
        if not math.isfinite(value):
            return math.inf, np.zeros_like(w)
        return -value, -grad

    result = minimize(negative, start, jac=True, method='L-BFGS-B',
                      options={'maxiter': settings.max_iterations, 'gtol': 1e-10})
    omega = result.x
    value, grad = objective.value_and_gradient(omega)
    if not math.isfinite(value):
        omega = np.asarray(start, dtype=float)
        value, grad = objective.value_and_gradient(omega)
    return _newton_polish(objective, omega, value, grad, settings)


def fit_kernel_posterior(offsets: AlignedOffspring, basis: CosineBasis, settings: OptimizerSettings = None,
                         initial=None, seed=0) -> KernelPosterior:
    """Laplace approximation N(omega_hat, Q) of the weight posterior."""
    settings = settings or OptimizerSettings()
    objective = LaplaceObjective(offsets, basis)
    default_start = np.full(basis.K, settings.initial_weight)
    start = default_start if initial is None else np.asarray(initial, dtype=float)
    rng = np.random.default_rng(seed)
    gradient_norm = math.inf
    for attempt in range(settings.restarts + 1):
        omega, value, grad = _maximise(objective, start, settings)
        gradient_norm = float(np.linalg.norm(grad)) if math.isfinite(value) else math.inf
        if gradient_norm <= settings.tolerance * (1 + abs(value)):
            break
        log.warning("Laplace mode search attempt %d stopped at gradient norm %.3g; restarting",
                    attempt + 1, gradient_norm)
        start = default_start * (1.0 + 0.5 * rng.standard_normal(basis.K))
    else:
        raise OptimizerError("Laplace mode search did not converge", gradient_norm)
    try:
        factor = linalg.cho_factor(objective.precision(omega))
    except linalg.LinAlgError as e:
        raise PosteriorError(f"precision matrix at the mode is not positive definite: {e}") from e
    Q = linalg.cho_solve(factor, np.eye(basis.K))
    return KernelPosterior(basis, omega, 0.5 * (Q + Q.T), value)
