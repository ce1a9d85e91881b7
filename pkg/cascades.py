"""Cascade corpus files: parsing, saving, rescaling to [0, pi] and bundling into fit groups.

File format (UTF-8)::

    # T=3.141592653589793        optional window end shared by every line
    # model=exp                  any other key=value header is provenance
    0.0 0.41 1.7 T=12.0|music    times, optional horizon token, optional label
"""
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from errors import CorpusError
from hawkes_core import EventSequence, ObservationWindow, as_generator

log = logging.getLogger(__name__)

window_key = 'T'


@dataclass(frozen=True, eq=False)
class Cascade:
    times: np.ndarray
    category: Optional[str] = None
    horizon: Optional[float] = None

    def __len__(self):
        return self.times.size


class Rejection(NamedTuple):
    line: int
    reason: str


@dataclass
class LoadReport:
    lines: int = 0
    accepted: int = 0
    rejected: List[Rejection] = field(default_factory=list)

    def summary(self):
        return f"{self.accepted} accepted, {len(self.rejected)} rejected of {self.lines} lines"


@dataclass
class CascadeCorpus:
    cascades: List[Cascade] = field(default_factory=list)
    window_end: Optional[float] = None
    provenance: Dict[str, str] = field(default_factory=dict)

    def __len__(self):
        return len(self.cascades)

    def categories(self):
        return sorted({c.category for c in self.cascades if c.category is not None})

    def select(self, category) -> 'CascadeCorpus':
        if category is None:
            return self
        return CascadeCorpus([c for c in self.cascades if c.category == category], self.window_end,
                             dict(self.provenance))

    def sequences(self, rescale='auto') -> List[EventSequence]:
        return [to_sequence(c, self.window_end, rescale) for c in self.cascades]


def parse_header(text) -> Optional[Tuple[str, str]]:
    key, sep, value = text.lstrip('#').strip().partition('=')
    if not sep:
        return None
    return key.strip(), value.strip()


def parse_line(text) -> Cascade:
    body, _, label = text.partition('|')
    category = label.strip() or None
    horizon = None
    values = []
    for token in body.split():
        if token.startswith(window_key + '='):
            horizon = float(token[len(window_key) + 1:])
        else:
            values.append(float(token))
    times = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(times)):
        raise ValueError("non-finite timestamp")
    if np.any(times < 0):
        raise ValueError("negative timestamp")
    if np.any(np.diff(times) <= 0):
        raise ValueError("timestamps not strictly increasing")
    if horizon is not None and times.size and horizon < times[-1]:
        raise ValueError(f"horizon {horizon} precedes the last event")
    return Cascade(times, category, horizon)


def format_float(value) -> str:
    return repr(float(value))


def format_line(cascade: Cascade) -> str:
    parts = [format_float(t) for t in cascade.times]
    if cascade.horizon is not None:
        parts.append(f"{window_key}={format_float(cascade.horizon)}")
    text = ' '.join(parts)
    if cascade.category is not None:
        text += f"|{cascade.category}"
    return text


def parse_corpus(text) -> Tuple[CascadeCorpus, LoadReport]:
    corpus = CascadeCorpus()
    report = LoadReport()
    pending = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith('#'):
            header = parse_header(line)
            if header is None:
                continue
            key, value = header
            if key == window_key:
                try:
                    corpus.window_end = float(value)
                except ValueError:
                    raise CorpusError(f"line {number}: invalid window header '{line}'") from None
            else:
                corpus.provenance[key] = value
            continue
        pending.append((number, line))
    for number, line in pending:
        report.lines += 1
        if not line and corpus.window_end is None:
            report.rejected.append(Rejection(number, "empty cascade"))
            continue
        try:
            cascade = parse_line(line)
            if corpus.window_end is not None and len(cascade) and cascade.times[-1] > corpus.window_end:
                raise ValueError(f"timestamp beyond T={corpus.window_end}")
        except ValueError as e:
            report.rejected.append(Rejection(number, str(e)))
            continue
        corpus.cascades.append(cascade)
        report.accepted += 1
    return corpus, report


def load_corpus(path) -> Tuple[CascadeCorpus, LoadReport]:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except (OSError, UnicodeDecodeError) as e:
        raise CorpusError(f"cannot read corpus {path}: {e}") from e
    corpus, report = parse_corpus(text)
    if not report.lines:
        log.warning("%s: empty corpus", path.name)
    for rejection in report.rejected:
        log.warning("%s line %d rejected: %s", path.name, rejection.line, rejection.reason)
    return corpus, report


def dump_corpus(corpus: CascadeCorpus) -> str:
    lines = [f"# {key}={value}" for key, value in corpus.provenance.items()]
    if corpus.window_end is not None:
        lines.append(f"# {window_key}={format_float(corpus.window_end)}")
    lines.extend(format_line(c) for c in corpus.cascades)
    return '\n'.join(lines) + '\n'


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(temp, path)
    except BaseException:
        Path(temp).unlink(missing_ok=True)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode('utf-8'))


def save_corpus(corpus: CascadeCorpus, path) -> None:
    atomic_write_text(path, dump_corpus(corpus))


def corpus_from_sequences(sequences: Sequence[EventSequence], window_end=math.pi, provenance=None) -> CascadeCorpus:
    cascades = [Cascade(np.asarray(seq.times)) for seq in sequences]
    return CascadeCorpus(cascades, window_end, dict(provenance or {}))


def rescale_to_pi(times, anchor: Literal['last', 'horizon'] = 'last', horizon=None) -> EventSequence:
    """Affine map of a cascade onto [0, pi]: first event to 0, extent end to pi."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("cannot rescale an empty cascade")
    origin = times[0]
    if anchor == 'horizon':
        if horizon is None:
            raise ValueError("horizon anchor needs an observation horizon")
        extent = horizon - origin
    else:
        extent = times[-1] - origin
    if not extent > 0:
        raise ValueError("zero-duration cascade cannot be rescaled")
    scaled = np.minimum((times - origin) * (math.pi / extent), math.pi)
    if anchor == 'last':
        scaled[-1] = math.pi
    return EventSequence(scaled, ObservationWindow(0.0, math.pi))


def to_sequence(cascade: Cascade, window_end=None, rescale='auto') -> EventSequence:
    if rescale == 'none':
        if window_end is None:
            raise CorpusError("corpus has no '# T=' header; it must be rescaled")
        return EventSequence(cascade.times, ObservationWindow(0.0, window_end))
    if rescale == 'auto':
        if window_end is not None and math.isclose(window_end, math.pi):
            return EventSequence(cascade.times, ObservationWindow(0.0, window_end))
        if window_end is not None:
            return EventSequence(np.minimum(cascade.times * (math.pi / window_end), math.pi),
                                 ObservationWindow(0.0, math.pi))
        rescale = 'horizon' if cascade.horizon is not None else 'last'
    if rescale == 'horizon':
        return rescale_to_pi(cascade.times, 'horizon', cascade.horizon if cascade.horizon is not None else window_end)
    return rescale_to_pi(cascade.times, 'last')


@dataclass(frozen=True, eq=False)
class FitGroup:
    index: int
    role: Literal['train', 'test']
    members: Tuple[int, ...]
    sequences: Tuple[EventSequence, ...]

    def __len__(self):
        return len(self.sequences)

    @property
    def n_events(self):
        return sum(len(s) for s in self.sequences)


@dataclass
class BundleReport:
    train_dropped: List[int] = field(default_factory=list)
    test_dropped: List[int] = field(default_factory=list)


def _chunk(indices, sequences, group_size, role, similarity):
    if similarity == 'by-size':
        indices = sorted(indices, key=lambda i: len(sequences[i]))
    full = len(indices) - len(indices) % group_size
    groups = []
    for g, start in enumerate(range(0, full, group_size)):
        members = tuple(indices[start:start + group_size])
        groups.append(FitGroup(g, role, members, tuple(sequences[i] for i in members)))
    return groups, list(indices[full:])


def bundle(sequences: Sequence[EventSequence], group_size, split_prob=1.0, seed=None,
           similarity: Literal['by-size', 'sequential'] = 'by-size') -> Tuple[List[FitGroup], List[FitGroup], BundleReport]:
    if group_size < 1:
        raise ValueError(f"group size must be positive (got {group_size})")
    rng = as_generator(seed)
    is_train = rng.random(len(sequences)) < split_prob
    train_idx = [i for i in range(len(sequences)) if is_train[i]]
    test_idx = [i for i in range(len(sequences)) if not is_train[i]]
    train, train_rest = _chunk(train_idx, sequences, group_size, 'train', similarity)
    test, test_rest = _chunk(test_idx, sequences, group_size, 'test', similarity)
    report = BundleReport(train_rest, test_rest)
    if train_rest or test_rest:
        log.warning("dropped %d train and %d test sequences that do not fill a group of %d",
                    len(train_rest), len(test_rest), group_size)
    return train, test, report
