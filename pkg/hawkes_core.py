"""Event sequences, triggering kernels, Hawkes intensity/likelihood and simulators.

Parent indices follow the p_ij convention used throughout the package:
``parents[i] == 0`` marks event ``i`` as an immigrant, ``parents[i] == j``
(j >= 1) points at the j-th event, i.e. ``times[j - 1]``.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from errors import CascadeLimitError

log = logging.getLogger(__name__)

default_cascade_limit = 10**6
pair_block_size = 1 << 22

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _frozen_array(values, dtype=float):
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ObservationWindow:
    start: float = 0.0
    end: float = math.pi

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)) or self.end <= self.start:
            raise ValueError(f"invalid observation window [{self.start}, {self.end}]")

    @property
    def length(self) -> float:
        return self.end - self.start

    def contains(self, t) -> bool:
        t = np.asarray(t, dtype=float)
        return bool(np.all((t >= self.start) & (t <= self.end)))


@dataclass(frozen=True, eq=False)
class EventSequence:
    times: np.ndarray
    window: ObservationWindow

    def __post_init__(self):
        times = _frozen_array(self.times).reshape(-1)
        if times.size and np.any(np.diff(times) <= 0):
            raise ValueError("event times must be strictly increasing")
        if not self.window.contains(times):
            raise ValueError(f"event times fall outside [{self.window.start}, {self.window.end}]")
        object.__setattr__(self, 'times', times)

    @classmethod
    def from_times(cls, times, end=math.pi, start=0.0):
        return cls(np.asarray(times, dtype=float), ObservationWindow(start, end))

    def __len__(self):
        return self.times.size

    def __eq__(self, other):
        if not isinstance(other, EventSequence):
            return NotImplemented
        return self.window == other.window and np.array_equal(self.times, other.times)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BranchingStructure:
    parents: np.ndarray

    def __post_init__(self):
        parents = _frozen_array(self.parents, dtype=np.int64).reshape(-1)
        own = np.arange(parents.size)
        if np.any(parents < 0) or np.any(parents > own):
            raise ValueError("a parent must be the background (0) or a strictly earlier event")
        object.__setattr__(self, 'parents', parents)

    def __len__(self):
        return self.parents.size

    @property
    def immigrant_count(self) -> int:
        return int(np.count_nonzero(self.parents == 0))

    @property
    def offspring_count(self) -> int:
        return len(self) - self.immigrant_count

    def __eq__(self, other):
        if not isinstance(other, BranchingStructure):
            return NotImplemented
        return np.array_equal(self.parents, other.parents)

    __hash__ = None


class TriggeringKernel:
    """Nonnegative triggering kernel phi evaluated at lags t >= 0.

    Subclasses provide ``__call__`` (vectorised), ``integral(upper)`` for
    the compensator term ``int_0^upper phi``, ``support`` (phi is zero past
    it) and ``bound`` (a dominating constant for thinning).
    """
    kind = 'kernel'
    support = math.inf

    def __call__(self, t):
        raise NotImplementedError

    def integral(self, upper):
        raise NotImplementedError

    @property
    def bound(self) -> float:
        raise NotImplementedError

    def params(self) -> dict:
        return {}


class ExponentialKernel(TriggeringKernel):
    kind = 'exponential'

    def __init__(self, a1: float, a2: float):
        if not (a1 > 0 and a2 > 0):
            raise ValueError(f"exponential kernel needs a1, a2 > 0 (got {a1}, {a2})")
        self.a1 = float(a1)
        self.a2 = float(a2)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, self.a1 * self.a2 * np.exp(-self.a2 * np.maximum(t, 0.0)), 0.0)

    def integral(self, upper):
        upper = np.maximum(np.asarray(upper, dtype=float), 0.0)
        return self.a1 * -np.expm1(-self.a2 * upper)

    @property
    def bound(self):
        return self.a1 * self.a2

    def params(self):
        return {'a1': self.a1, 'a2': self.a2}


class ExpToyKernel(ExponentialKernel):
    kind = 'exp-toy'

    def __init__(self):
        super().__init__(1.0, 5.0)


class CosineToyKernel(TriggeringKernel):
    kind = 'cos-toy'
    support = 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= 1.0)
        return np.where(inside, np.cos(3 * math.pi * t) + 1.0, 0.0)

    def integral(self, upper):
        u = np.clip(np.asarray(upper, dtype=float), 0.0, 1.0)
        return u + np.sin(3 * math.pi * u) / (3 * math.pi)

    @property
    def bound(self):
        return 2.0


class TabulatedKernel(TriggeringKernel):
    """Piecewise-linear kernel on a grid, zero outside the grid."""
    kind = 'tabulated'

    def __init__(self, grid, values):
        grid = _frozen_array(grid).reshape(-1)
        values = _frozen_array(values).reshape(-1)
        if grid.size < 2 or grid.size != values.size:
            raise ValueError("tabulated kernel needs matching grid and values with at least 2 points")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("tabulated kernel grid must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("tabulated kernel values must be finite and nonnegative")
        self.grid = grid
        self.values = values
        self._cumulative = np.concatenate([[0.0], cumulative_trapezoid(values, grid)])

    @property
    def support(self):
        return float(self.grid[-1])

    def __call__(self, t):
        return np.interp(np.asarray(t, dtype=float), self.grid, self.values, left=0.0, right=0.0)

    def integral(self, upper):
        u = np.clip(np.asarray(upper, dtype=float), self.grid[0], self.grid[-1])
        k = np.clip(np.searchsorted(self.grid, u, side='right') - 1, 0, self.grid.size - 2)
        at_u = np.interp(u, self.grid, self.values)
        return self._cumulative[k] + 0.5 * (self.values[k] + at_u) * (u - self.grid[k])

    @property
    def bound(self):
        return float(self.values.max())

    def params(self):
        return {'grid': self.grid.tolist(), 'values': self.values.tolist()}


def zero_kernel(end=math.pi) -> TabulatedKernel:
    return TabulatedKernel([0.0, end], [0.0, 0.0])


@dataclass(frozen=True)
class HawkesModel:
    mu: float
    kernel: TriggeringKernel

    def __post_init__(self):
        if not (self.mu >= 0 and math.isfinite(self.mu)):
            raise ValueError(f"background rate must be finite and >= 0 (got {self.mu})")


class HistoryBlock(NamedTuple):
    start: int
    stop: int
    rows: np.ndarray
    parents: np.ndarray
    counts: np.ndarray


def history_pairs(times, horizon=math.inf, block_pairs=pair_block_size) -> Iterator[HistoryBlock]:
    """Yield (event, earlier event) index pairs whose lag is within ``horizon``.

    Rows are grouped into blocks of at most ``block_pairs`` pairs (a row with
    more candidates than that forms a block on its own). ``rows`` and
    ``parents`` are 0-based positions into ``times``.
    """
    times = np.asarray(times, dtype=float)
    n = times.size
    if math.isfinite(horizon):
        lo = np.searchsorted(times, times - horizon, side='left')
    else:
        lo = np.zeros(n, dtype=np.int64)
    counts = np.arange(n) - lo
    cum = np.concatenate([[0], np.cumsum(counts)])
    start = 0
    while start < n:
        stop = int(np.searchsorted(cum, cum[start] + block_pairs, side='right')) - 1
        stop = min(max(stop, start + 1), n)
        block_counts = counts[start:stop]
        rows = np.repeat(np.arange(start, stop), block_counts)
        first = np.repeat(cum[start:stop] - cum[start], block_counts)
        parents = np.repeat(lo[start:stop], block_counts) + (np.arange(rows.size) - first)
        yield HistoryBlock(start, stop, rows, parents, block_counts)
        start = stop


def exp_decay_sums(times, a2) -> Tuple[np.ndarray, np.ndarray]:
    """Return A_i = sum_{k<i} exp(-a2 (t_i - t_k)) and dA_i/da2 in O(N)."""
    times = np.asarray(times, dtype=float)
    n = times.size
    A = np.zeros(n)
    dA = np.zeros(n)
    if n < 2:
        return A, dA
    s = times - times[0]
    x = a2 * s
    log_sum = np.logaddexp.accumulate(x)
    with np.errstate(divide='ignore'):
        log_weighted = np.logaddexp.accumulate(x + np.log(s))
    A[1:] = np.exp(log_sum[:-1] - x[1:])
    C = np.zeros(n)
    C[1:] = np.exp(log_weighted[:-1] - x[1:])
    dA[1:] = C[1:] - s[1:] * A[1:]
    return A, dA


def event_intensities(model: HawkesModel, seq: EventSequence) -> np.ndarray:
    times = seq.times
    kernel = model.kernel
    if isinstance(kernel, ExponentialKernel):
        A, _ = exp_decay_sums(times, kernel.a2)
        return model.mu + kernel.a1 * kernel.a2 * A
    lam = np.full(times.size, float(model.mu))
    for block in history_pairs(times, kernel.support):
        if block.rows.size == 0:
            continue
        lags = times[block.rows] - times[block.parents]
        lam[block.start:block.stop] += np.bincount(block.rows - block.start, weights=kernel(lags),
                                                   minlength=block.stop - block.start)
    return lam


def intensity(model: HawkesModel, history: EventSequence, t: float) -> float:
    if not history.window.contains(t):
        raise ValueError(f"t={t} outside the observation window")
    past = history.times[history.times < t]
    return float(model.mu + np.sum(model.kernel(t - past)))


def compensator(model: HawkesModel, seq: EventSequence) -> float:
    tails = seq.window.end - seq.times
    return float(model.mu * seq.window.length + np.sum(model.kernel.integral(tails)))


def log_likelihood(model: HawkesModel, seq: EventSequence) -> float:
    lam = event_intensities(model, seq)
    if np.any(lam <= 0):
        return -math.inf
    return float(np.sum(np.log(lam)) - compensator(model, seq))


def simulate_poisson(rate_fn: Callable, bound: float, window: ObservationWindow, seed: SeedLike = None) -> EventSequence:
    if bound < 0:
        raise ValueError(f"dominating bound must be >= 0 (got {bound})")
    rng = as_generator(seed)
    n = rng.poisson(bound * window.length) if bound > 0 else 0
    if n == 0:
        return EventSequence(np.empty(0), window)
    candidates = np.sort(rng.uniform(window.start, window.end, n))
    rates = np.asarray(rate_fn(candidates), dtype=float)
    if np.any(rates > bound * (1 + 1e-12)):
        raise ValueError(f"rate {rates.max():.6g} exceeds the dominating bound {bound:.6g}")
    keep = rng.uniform(0.0, bound, n) < rates
    return EventSequence(candidates[keep], window)


def simulate_hawkes(model: HawkesModel, window: ObservationWindow, seed: SeedLike = None,
                    max_events=default_cascade_limit) -> Tuple[EventSequence, BranchingStructure]:
    """Cluster-construction simulation; returns the sorted sequence and its true branching."""
    rng = as_generator(seed)
    kernel = model.kernel
    bound = kernel.bound
    if not math.isfinite(bound):
        raise ValueError("kernel needs a finite dominating bound for simulation")
    if model.mu > 0:
        immigrants = simulate_poisson(lambda t: np.full(t.shape, model.mu), model.mu, window, rng)
        times = immigrants.times.tolist()
    else:
        times = []
    parents = [-1] * len(times)
    if len(times) > max_events:
        raise CascadeLimitError(max_events, len(times))
    i = 0
    while i < len(times):
        remaining = window.end - times[i]
        if remaining > 0 and bound > 0:
            children = simulate_poisson(kernel, bound, ObservationWindow(0.0, remaining), rng)
            if len(children):
                times.extend((times[i] + children.times).tolist())
                parents.extend([i] * len(children))
                if len(times) > max_events:
                    raise CascadeLimitError(max_events, len(times))
        i += 1
    arr = np.asarray(times, dtype=float)
    order = np.argsort(arr, kind='stable')
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    raw = np.asarray(parents, dtype=np.int64)
    sorted_parents = np.zeros(arr.size, dtype=np.int64)
    has_parent = raw >= 0
    sorted_parents[rank[has_parent]] = rank[raw[has_parent]] + 1
    log.debug("simulated %d events (%d immigrants)", arr.size, int(np.count_nonzero(~has_parent)))
    return EventSequence(arr[order], window), BranchingStructure(sorted_parents)


def make_kernel(kind, **params) -> TriggeringKernel:
    if kind in ('cos', 'cos-toy'):
        return CosineToyKernel()
    if kind in ('exp', 'exp-toy'):
        return ExpToyKernel()
    if kind == 'exponential':
        return ExponentialKernel(params['a1'], params['a2'])
    if kind == 'tabulated':
        return TabulatedKernel(params['grid'], params['values'])
    raise ValueError(f"unknown kernel kind: {kind}")
