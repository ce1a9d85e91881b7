import json
import math

import pytest

from errors import UsageError
from run_config import RunConfig, SamplerConfig, apply_overrides, dump_config, load_config


class TestDefaults:
    def test_defaults(self):
        config = load_config()
        assert config.method == 'gibbs'
        assert config.sampler.iterations == 5000 and config.sampler.burn_in == 1000
        assert config.sampler.truncation == 1e-4
        assert config.sampler.basis.K == 32
        assert config.model.end == math.pi

    def test_default_basis_matches_settings(self):
        basis = RunConfig().sampler.basis.build()
        assert basis.K == 32
        assert basis.eigenvalue(0) == pytest.approx(500.0)


class TestLoadConfig:
    def test_reads_json(self, tmp_path):
        path = tmp_path / 'run.json'
        path.write_text(json.dumps({'method': 'em', 'sampler': {'em_max_iters': 7}}), encoding='utf-8')
        config = load_config(path)
        assert config.method == 'em' and config.sampler.em_max_iters == 7

    def test_unknown_key(self, tmp_path):
        path = tmp_path / 'run.json'
        path.write_text(json.dumps({'sampler': {'iteratons': 7}}), encoding='utf-8')
        with pytest.raises(UsageError, match='iteratons'):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError):
            load_config(tmp_path / 'missing.json')

    def test_dump_round_trip(self, tmp_path):
        config = apply_overrides(RunConfig(), {'seed': 9, 'sampler.truncation': None})
        path = tmp_path / 'run.json'
        path.write_text(dump_config(config), encoding='utf-8')
        assert load_config(path) == config


class TestOverrides:
    def test_dotted_keys(self):
        config = apply_overrides(RunConfig(), {'sampler.basis.K': 8, 'data.group_size': 3, 'method': 'exp-mle'})
        assert config.sampler.basis.K == 8
        assert config.data.group_size == 3
        assert config.method == 'exp-mle'

    def test_none_values_keep_defaults(self):
        assert apply_overrides(RunConfig(), {'seed': None}) == RunConfig()

    def test_burn_in_must_precede_end(self):
        with pytest.raises(UsageError, match='burn_in'):
            apply_overrides(RunConfig(), {'sampler.iterations': 10, 'sampler.burn_in': 10})
        with pytest.raises(ValueError):
            SamplerConfig(iterations=5, burn_in=5)

    def test_custom_model_needs_parameters(self):
        with pytest.raises(UsageError):
            apply_overrides(RunConfig(), {'model.kind': 'custom', 'model.a1': 0.5})
        config = apply_overrides(RunConfig(), {'model.kind': 'custom', 'model.a1': 0.5, 'model.a2': 2.0})
        assert config.model.build().kernel.params() == {'a1': 0.5, 'a2': 2.0}

    def test_out_of_range_values(self):
        with pytest.raises(UsageError):
            apply_overrides(RunConfig(), {'sampler.truncation': 2.0})
        with pytest.raises(UsageError):
            apply_overrides(RunConfig(), {'jobs': 0})
