import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import chebyshev

default_basis_count = 32
default_smoothness = 0.002
default_exponent = 2
series_threshold = 1e-6
domain_slack = 1e-9


@dataclass(frozen=True)
class CosineBasis:
    K: int = default_basis_count
    a: float = default_smoothness
    b: float = default_smoothness
    m: int = default_exponent
    domain_T: float = math.pi

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"basis needs K >= 1 (got {self.K})")
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"smoothness parameters a, b must be positive (got {self.a}, {self.b})")
        if self.m < 0 or int(self.m) != self.m:
            raise ValueError(f"smoothness exponent m must be a nonnegative integer (got {self.m})")
        if not self.domain_T > 0:
            raise ValueError(f"domain_T must be positive (got {self.domain_T})")

    @property
    def scale(self) -> float:
        return math.pi / self.domain_T

    @cached_property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.K, dtype=float)

    @cached_property
    def norms(self) -> np.ndarray:
        norms = np.full(self.K, math.sqrt(2.0 / self.domain_T))
        norms[0] = math.sqrt(1.0 / self.domain_T)
        return norms

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return 1.0 / (self.a * self.frequencies ** (2 * self.m) + self.b)

    def eigenvalue(self, gamma) -> float:
        if gamma < 0:
            raise ValueError(f"eigenvalue index must be >= 0 (got {gamma})")
        return 1.0 / (self.a * float(gamma) ** (2 * self.m) + self.b)

    def _check_domain(self, t):
        t = np.asarray(t, dtype=float)
        slack = domain_slack * self.domain_T
        if np.any(t < -slack) or np.any(t > self.domain_T + slack) or np.any(np.isnan(t)):
            raise ValueError(f"basis evaluated outside [0, {self.domain_T}]")
        return np.clip(t, 0.0, self.domain_T)

    def eval_basis(self, t) -> np.ndarray:
        t = self._check_domain(t)
        return self.norms * np.cos(np.multiply.outer(t * self.scale, self.frequencies))

    def expand(self, weights, t) -> np.ndarray:
        """f(t) = weights . e(t), evaluated as a Chebyshev series in cos(t)."""
        t = self._check_domain(t)
        return chebyshev.chebval(np.cos(t * self.scale), np.asarray(weights) * self.norms)

    def gp_kernel(self, x, y) -> float:
        ex = self.eval_basis(x)
        ey = self.eval_basis(y)
        return np.sum(self.eigenvalues * ex * ey, axis=-1)

    def _sine_ratios(self, uppers):
        """sin(n v) / n for n = 0 .. 2K-2 and scaled uppers v; shape (2K-1, len(uppers))."""
        v = np.asarray(uppers, dtype=float).reshape(-1) * self.scale
        n = np.arange(2 * self.K - 1, dtype=float)
        arg = np.multiply.outer(n, v)
        small = np.abs(arg) < series_threshold
        with np.errstate(divide='ignore', invalid='ignore'):
            exact = np.sin(arg) / n[:, None]
        series = v[None, :] * (1.0 - arg ** 2 / 6.0)
        return np.where(small, series, exact)

    def _assemble(self, sine_sums):
        j = np.arange(self.K)
        diff = np.abs(j[:, None] - j[None, :])
        total = j[:, None] + j[None, :]
        c = self.norms * math.sqrt(self.domain_T / math.pi)
        return np.outer(c, c) * 0.5 * (sine_sums[diff] + sine_sums[total])

    def _check_uppers(self, uppers):
        uppers = np.asarray(uppers, dtype=float)
        if np.any(uppers < 0):
            raise ValueError("integral upper limit must be nonnegative")
        if np.any(uppers > self.domain_T * (1 + domain_slack)):
            raise ValueError(f"integral upper limit exceeds the basis domain {self.domain_T}")
        return np.minimum(uppers, self.domain_T)

    def integral_matrix(self, upper) -> np.ndarray:
        """U(upper)_{jk} = int_0^upper e_j e_k dt in closed form."""
        upper = self._check_uppers(float(upper))
        return self._assemble(self._sine_ratios([upper])[:, 0])

    def summed_integral_matrix(self, uppers) -> np.ndarray:
        """Sum of U(u) over many upper limits without forming each matrix."""
        uppers = self._check_uppers(uppers)
        if uppers.size == 0:
            return np.zeros((self.K, self.K))
        return self._assemble(self._sine_ratios(uppers).sum(axis=1))

    def quadratic_integral(self, weights, upper):
        """int_0^upper (weights . e(t))^2 / 2 dt, vectorised over ``upper``."""
        uppers = self._check_uppers(upper)
        flat = uppers.reshape(-1)
        sines = self._sine_ratios(flat)
        j = np.arange(self.K)
        diff = np.abs(j[:, None] - j[None, :])
        total = j[:, None] + j[None, :]
        w = np.asarray(weights) * self.norms * math.sqrt(self.domain_T / math.pi)
        outer = np.outer(w, w) * 0.5
        values = np.einsum('jk,jkp->p', outer, sines[diff] + sines[total]) * 0.5
        return values.reshape(uppers.shape)
