import logging
import math
from numbers import Real
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import simpson

from fit_result import FitResult
from hawkes_core import EventSequence, HawkesModel, ObservationWindow, log_likelihood

log = logging.getLogger(__name__)

quadrature_panels = 1024
max_panels = 1 << 16
refinement_tolerance = 1e-6
evaluation_columns = ['group', 'method', 'l2_phi', 'l2_mu', 'heldout_ll']


def _simpson(fn, window, panels):
    t = np.linspace(window.start, window.end, panels + 1)
    return float(simpson(fn(t), x=t))


def l2_distance(pred, truth, window: ObservationWindow = ObservationWindow()) -> float:
    """sqrt(int (pred - truth)^2) over the window; scalars count as constant functions."""
    if isinstance(pred, Real) and isinstance(truth, Real):
        return abs(float(pred) - float(truth)) * math.sqrt(window.length)

    def as_function(x):
        return (lambda t: np.full(t.shape, float(x))) if isinstance(x, Real) else x

    p, q = as_function(pred), as_function(truth)

    def squared(t):
        return (np.asarray(p(t), dtype=float) - np.asarray(q(t), dtype=float)) ** 2

    panels = quadrature_panels
    coarse = _simpson(squared, window, panels)
    while panels < max_panels:
        fine = _simpson(squared, window, 2 * panels)
        panels *= 2
        if abs(fine - coarse) < refinement_tolerance:
            coarse = fine
            break
        coarse = fine
    else:
        log.warning("L2 quadrature still changing at %d panels", panels)
    return math.sqrt(max(coarse, 0.0))


def heldout_ll_per_event(fit: FitResult, test_group: Sequence[EventSequence]) -> float:
    events = sum(len(seq) for seq in test_group)
    if events == 0:
        raise ValueError("held-out group has no events")
    model = fit.hawkes_model()
    return sum(log_likelihood(model, seq) for seq in test_group) / events


def evaluate_fit(fit: FitResult, truth: Optional[HawkesModel] = None, test_group=None, group=None) -> dict:
    window = ObservationWindow(0.0, fit.window_end)
    row = {'group': fit.group if group is None else group, 'method': fit.method,
           'l2_phi': math.nan, 'l2_mu': math.nan, 'heldout_ll': math.nan}
    if truth is not None:
        row['l2_phi'] = l2_distance(fit.kernel_function(), truth.kernel, window)
        row['l2_mu'] = l2_distance(fit.mu, truth.mu, window)
    if test_group:
        row['heldout_ll'] = heldout_ll_per_event(fit, test_group)
    return row


def evaluation_table(rows) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=evaluation_columns)


def summarise(table: pd.DataFrame) -> pd.DataFrame:
    return table.groupby('method')[['l2_phi', 'l2_mu', 'heldout_ll']].mean()


def table_csv(table: pd.DataFrame) -> str:
    return table.to_csv(index=False, lineterminator='\n', float_format='%.10g')
