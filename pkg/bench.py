import logging
import math
import timeit
from typing import List, Literal, Sequence

import numpy as np
import pandas as pd

from branching import TruncationPolicy, sample_parents
from hawkes_core import EventSequence, ExponentialKernel, ExpToyKernel, HawkesModel, ObservationWindow, simulate_hawkes
from run_config import SamplerConfig
from samplers import gibbs_step

log = logging.getLogger(__name__)

bench_columns = ['n', 'seconds_per_iter', 'ratio']
stationary_model = HawkesModel(10.0, ExponentialKernel(0.5, 5.0))
toy_model = HawkesModel(10.0, ExpToyKernel())


def stationary_sequence(n, model=stationary_model, seed=None) -> EventSequence:
    if n < 1:
        raise ValueError(f"benchmark size must be positive (got {n})")
    branching_ratio = model.kernel.a1
    end = 1.25 * n * (1.0 - branching_ratio) / model.mu
    rng = np.random.default_rng(seed)
    while True:
        seq, _ = simulate_hawkes(model, ObservationWindow(0.0, end), rng)
        if len(seq) >= n:
            break
        end *= 1.5
    times = seq.times[:n]
    return EventSequence(times, ObservationWindow(0.0, float(times[-1])))


def toy_group(n, model=toy_model, seed=None) -> List[EventSequence]:
    rng = np.random.default_rng(seed)
    group, total = [], 0
    while total < n:
        seq, _ = simulate_hawkes(model, ObservationWindow(0.0, math.pi), rng)
        group.append(seq)
        total += len(seq)
    return group


def _time_branching(n, truncated, repeats, seed):
    seq = stationary_sequence(n, seed=seed)
    truncation = TruncationPolicy() if truncated else None
    kernel = stationary_model.kernel
    rng = np.random.default_rng(seed)
    return [_timed(lambda: sample_parents(seq, stationary_model.mu, kernel, truncation, rng)) for _ in range(repeats)]


def _time_gibbs(n, truncated, repeats, seed, config):
    group = toy_group(n, seed=seed)
    config = config.model_copy(update={'truncation': config.truncation if truncated else None})
    basis = config.basis.build()
    rng = np.random.default_rng(seed)
    state = gibbs_step(group, toy_model.mu, toy_model.kernel, basis, config, rng)
    times = []
    for k in range(repeats):
        started = timeit.default_timer()
        state = gibbs_step(group, state.mu, state.phi, basis, config, rng, state.post, k + 1)
        times.append(timeit.default_timer() - started)
    return times


def _timed(fn):
    started = timeit.default_timer()
    fn()
    return timeit.default_timer() - started


def bench_iteration_time(method: Literal['branching', 'gibbs'], sizes: Sequence[int], repeats=3, seed=0,
                         truncated=True, config: SamplerConfig = None) -> pd.DataFrame:
    """Median seconds per iteration at every size; ``ratio`` is seconds per event."""
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("benchmark sizes must be ascending")
    config = config or SamplerConfig(iterations=2, burn_in=0)
    rows = []
    for n in sizes:
        if method == 'branching':
            times = _time_branching(n, truncated, repeats, seed)
        elif method == 'gibbs':
            times = _time_gibbs(n, truncated, repeats, seed, config)
        else:
            raise ValueError(f"unknown benchmark method: {method}")
        seconds = float(np.median(times))
        rows.append({'n': n, 'seconds_per_iter': seconds, 'ratio': seconds / n})
        log.info("bench %s n=%d truncated=%s: %.4fs", method, n, truncated, seconds)
    return pd.DataFrame(rows, columns=bench_columns)


def ratio_spread(table: pd.DataFrame) -> float:
    return float(table['ratio'].iloc[-1] / table['ratio'].iloc[0])
