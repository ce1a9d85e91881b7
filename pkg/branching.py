import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from hawkes_core import BranchingStructure, EventSequence, as_generator, history_pairs

log = logging.getLogger(__name__)

default_tail_mass = 1e-4

__all__ = ['AlignedOffspring', 'BranchingStructure', 'ParentDistribution', 'TruncationPolicy',
           'align_offspring', 'average_offspring', 'expected_offspring', 'parent_probabilities',
           'sample_branching', 'sample_parents', 'truncation_horizon']


@dataclass(frozen=True)
class TruncationPolicy:
    epsilon: float = default_tail_mass
    horizon: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"tail-mass tolerance must lie in [0, 1] (got {self.epsilon})")
        if self.horizon is not None and self.horizon < 0:
            raise ValueError(f"fixed horizon must be nonnegative (got {self.horizon})")


@dataclass(frozen=True, eq=False)
class ParentDistribution:
    """Row i: p_i0 = background[i]; candidates[row_ptr[i]:row_ptr[i+1]] with probs."""
    background: np.ndarray
    row_ptr: np.ndarray
    candidates: np.ndarray
    probs: np.ndarray
    horizon: float = math.inf

    def __len__(self):
        return self.background.size

    def row(self, i):
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        parents = np.concatenate([[0], self.candidates[lo:hi]])
        probs = np.concatenate([[self.background[i]], self.probs[lo:hi]])
        return parents, probs

    def row_sums(self):
        sums = np.add.reduceat(np.concatenate([self.probs, [0.0]]), self.row_ptr[:-1]) \
            if self.probs.size else np.zeros(len(self))
        empty = self.row_ptr[1:] == self.row_ptr[:-1]
        sums = np.where(empty, 0.0, sums)
        return self.background + sums

    def expected_immigrants(self) -> float:
        return float(self.background.sum())


@dataclass(frozen=True, eq=False)
class AlignedOffspring:
    """Offspring lags pooled over a fit group, with the censor time of every event.

    ``weights`` is None for a sampled structure (all ones); the Monte-Carlo and
    exact expectation steps attach fractional weights. ``immigrants`` and
    ``duration`` carry the sufficient statistics for the background rate.
    """
    offsets: np.ndarray
    parent_censors: np.ndarray
    censor_times: np.ndarray
    immigrants: float
    duration: float
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if np.any(self.offsets < 0) or np.any(self.offsets > self.parent_censors + 1e-12):
            raise ValueError("offsets must lie in [0, censor time of their parent]")

    @property
    def offset_weights(self) -> np.ndarray:
        return np.ones(self.offsets.size) if self.weights is None else self.weights

    @property
    def offspring_count(self) -> float:
        return float(self.offset_weights.sum())


def truncation_horizon(phi, epsilon, upper=math.pi) -> float:
    """Smallest h with int_h^upper phi <= epsilon * int_0^upper phi."""
    total = float(phi.integral(upper))
    if not total > 0:
        log.warning("kernel has zero mass on [0, %g]; truncation horizon set to 0", upper)
        return 0.0
    if epsilon >= 1.0:
        return 0.0
    reach = min(float(phi.support), float(upper))
    if epsilon <= 0.0:
        return reach
    target = epsilon * total

    def excess(h):
        return total - float(phi.integral(h)) - target

    if excess(reach) > 0:
        return reach
    return float(brentq(excess, 0.0, reach, xtol=1e-12))


def _resolve_horizon(seq, phi, truncation):
    if truncation is None:
        return math.inf
    if truncation.horizon is not None:
        return truncation.horizon
    return truncation_horizon(phi, truncation.epsilon, seq.window.length)


def _probability_blocks(seq, mu, phi, horizon):
    times = seq.times
    for block in history_pairs(times, horizon):
        size = block.stop - block.start
        local = block.rows - block.start
        if block.rows.size:
            weights = np.asarray(phi(times[block.rows] - times[block.parents]), dtype=float)
            denom = mu + np.bincount(local, weights=weights, minlength=size)
        else:
            weights = np.empty(0)
            denom = np.full(size, float(mu))
        if np.any(denom <= 0):
            bad = block.start + int(np.argmax(denom <= 0)) + 1
            raise ValueError(f"parent row {bad} is undefined: zero background rate and no triggering earlier event")
        row_ptr = np.concatenate([[0], np.cumsum(block.counts)])
        yield block, mu / denom, row_ptr, block.parents + 1, weights / denom[local]


def parent_probabilities(seq: EventSequence, mu: float, phi, truncation: Optional[TruncationPolicy] = None) -> ParentDistribution:
    horizon = _resolve_horizon(seq, phi, truncation)
    n = len(seq)
    background = np.ones(n)
    counts, candidates, probs = [], [], []
    for block, bg, _, cand, p in _probability_blocks(seq, mu, phi, horizon):
        background[block.start:block.stop] = bg
        counts.append(block.counts)
        candidates.append(cand)
        probs.append(p)
    if n == 0:
        return ParentDistribution(background, np.zeros(1, dtype=np.int64), np.empty(0, dtype=np.int64),
                                  np.empty(0), horizon)
    row_ptr = np.concatenate([[0], np.cumsum(np.concatenate(counts))])
    return ParentDistribution(background, row_ptr, np.concatenate(candidates), np.concatenate(probs), horizon)


def _categorical_rows(background, row_ptr, candidates, probs, u):
    n = background.size
    parents = np.zeros(n, dtype=np.int64)
    if probs.size == 0:
        return parents
    cum = np.cumsum(probs)
    starts = row_ptr[:-1]
    ends = row_ptr[1:]
    base = np.concatenate([[0.0], cum])[starts]
    pick = np.searchsorted(cum, base + (u - background), side='right')
    pick = np.minimum(np.maximum(pick, starts), np.maximum(ends - 1, starts))
    chosen = (u >= background) & (ends > starts)
    parents[chosen] = candidates[pick[chosen]]
    return parents


def sample_branching(dist: ParentDistribution, seed=None) -> BranchingStructure:
    rng = as_generator(seed)
    u = rng.random(len(dist))
    return BranchingStructure(_categorical_rows(dist.background, dist.row_ptr, dist.candidates, dist.probs, u))


def sample_parents(seq: EventSequence, mu: float, phi, truncation: Optional[TruncationPolicy] = None,
                   seed=None) -> BranchingStructure:
    rng = as_generator(seed)
    horizon = _resolve_horizon(seq, phi, truncation)
    parents = np.zeros(len(seq), dtype=np.int64)
    for block, bg, row_ptr, cand, p in _probability_blocks(seq, mu, phi, horizon):
        u = rng.random(block.stop - block.start)
        parents[block.start:block.stop] = _categorical_rows(bg, row_ptr, cand, p, u)
    return BranchingStructure(parents)


def _group_censors(sequences):
    censors = [seq.window.end - seq.times for seq in sequences]
    duration = float(sum(seq.window.length for seq in sequences))
    return (np.concatenate(censors) if censors else np.empty(0)), duration


def align_offspring(sequences: Sequence[EventSequence], structures: Sequence[BranchingStructure]) -> AlignedOffspring:
    if len(sequences) != len(structures):
        raise ValueError("one branching structure per sequence is required")
    offsets, parent_censors = [], []
    immigrants = 0
    for seq, structure in zip(sequences, structures):
        if len(structure) != len(seq):
            raise ValueError("branching structure does not match its sequence")
        child = np.flatnonzero(structure.parents)
        parent_times = seq.times[structure.parents[child] - 1]
        offsets.append(seq.times[child] - parent_times)
        parent_censors.append(seq.window.end - parent_times)
        immigrants += structure.immigrant_count
    censor_times, duration = _group_censors(sequences)
    return AlignedOffspring(np.concatenate(offsets) if offsets else np.empty(0),
                            np.concatenate(parent_censors) if parent_censors else np.empty(0),
                            censor_times, float(immigrants), duration)


def average_offspring(samples: Sequence[AlignedOffspring]) -> AlignedOffspring:
    if not samples:
        raise ValueError("at least one aligned sample is required")
    share = 1.0 / len(samples)
    return AlignedOffspring(np.concatenate([s.offsets for s in samples]),
                            np.concatenate([s.parent_censors for s in samples]),
                            samples[0].censor_times,
                            share * sum(s.immigrants for s in samples),
                            samples[0].duration,
                            np.concatenate([s.offset_weights * share for s in samples]))


def expected_offspring(sequences: Sequence[EventSequence], distributions: Sequence[ParentDistribution]) -> AlignedOffspring:
    """Every candidate lag weighted by its parent probability (exact E-step)."""
    offsets, parent_censors, weights = [], [], []
    immigrants = 0.0
    for seq, dist in zip(sequences, distributions):
        rows = np.repeat(np.arange(len(dist)), np.diff(dist.row_ptr))
        parent_times = seq.times[dist.candidates - 1]
        offsets.append(seq.times[rows] - parent_times)
        parent_censors.append(seq.window.end - parent_times)
        weights.append(dist.probs)
        immigrants += dist.expected_immigrants()
    censor_times, duration = _group_censors(sequences)
    return AlignedOffspring(np.concatenate(offsets), np.concatenate(parent_censors), censor_times,
                            immigrants, duration, np.concatenate(weights))
