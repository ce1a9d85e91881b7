"""Scaled synthetic replication runs; minutes each, selected with ``-m slow``."""
import numpy as np
import pytest

from cascades import bundle
from conftest import simulate_group
from exp_baseline import exp_fit_result, fit_exp_mle
from metrics import evaluate_fit, heldout_ll_per_event
from run_config import SamplerConfig
from samplers import em_hawkes, gibbs_hawkes

pytestmark = pytest.mark.slow

replication_config = SamplerConfig(iterations=1000, burn_in=200)


def training_groups(model, seed):
    train, _, _ = bundle(simulate_group(model, 100, seed), 10, seed=seed, similarity='sequential')
    return [list(g.sequences) for g in train]


def mean_scores(fits, truth):
    rows = [evaluate_fit(fit, truth) for fit in fits]
    return np.mean([r['l2_phi'] for r in rows]), np.mean([r['l2_mu'] for r in rows])


def test_exp_kernel_gibbs(exp_model):
    fits = [gibbs_hawkes(group, replication_config, seed=k) for k, group in enumerate(training_groups(exp_model, 1))]
    l2_phi, l2_mu = mean_scores(fits, exp_model)
    assert l2_phi <= 0.5
    assert l2_mu <= 4.0


def test_cos_kernel_gibbs_and_em(cos_model):
    groups = training_groups(cos_model, 2)
    gibbs = [gibbs_hawkes(group, replication_config, seed=k) for k, group in enumerate(groups)]
    em = [em_hawkes(group, replication_config, seed=k) for k, group in enumerate(groups)]
    assert mean_scores(gibbs, cos_model)[0] <= 0.8
    assert mean_scores(em, cos_model)[0] <= 0.8


def test_nonparametric_fits_beat_exponential_on_held_out_data(cos_model):
    groups = training_groups(cos_model, 3)
    held_out = simulate_group(cos_model, 100, seed=4)
    scores = {'gibbs': [], 'em': [], 'exp-mle': []}
    for k, group in enumerate(groups):
        scores['gibbs'].append(heldout_ll_per_event(gibbs_hawkes(group, replication_config, seed=k), held_out))
        scores['em'].append(heldout_ll_per_event(em_hawkes(group, replication_config, seed=k), held_out))
        baseline = exp_fit_result(group, fit_exp_mle(group, seed=k))
        scores['exp-mle'].append(heldout_ll_per_event(baseline, held_out))
    means = {method: np.mean(values) for method, values in scores.items()}
    assert means['gibbs'] > means['exp-mle']
    assert means['em'] > means['exp-mle']
