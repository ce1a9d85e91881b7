"""Run configuration documents (JSON) validated with pydantic.

Every section rejects unknown keys. CLI flags shadow keys: ``apply_overrides``
takes a dotted-key mapping (``{"sampler.iterations": 200}``) and returns a
new validated config.
"""
import json
import math
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from cosine_basis import CosineBasis
from errors import UsageError
from hawkes_core import CosineToyKernel, ExponentialKernel, ExpToyKernel, HawkesModel

default_iterations = 5000
default_burn_in = 1000
default_grid_points = 256


class Settings(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class BasisSettings(Settings):
    K: int = Field(32, ge=1)
    a: float = Field(0.002, gt=0)
    b: float = Field(0.002, gt=0)
    m: int = Field(2, ge=0)

    def build(self) -> CosineBasis:
        return CosineBasis(K=self.K, a=self.a, b=self.b, m=self.m, domain_T=math.pi)


class OptimizerSettings(Settings):
    max_iterations: int = Field(500, ge=1)
    tolerance: float = Field(1e-6, gt=0)
    restarts: int = Field(3, ge=0)
    initial_weight: float = 0.1
    newton_steps: int = Field(30, ge=0)
    starts: int = Field(5, ge=1)


class SamplerConfig(Settings):
    iterations: int = Field(default_iterations, ge=1)
    burn_in: int = Field(default_burn_in, ge=0)
    seed: int = 0
    truncation: Optional[float] = Field(1e-4, ge=0, le=1)
    basis: BasisSettings = BasisSettings()
    optimizer: OptimizerSettings = OptimizerSettings()
    em_branching_samples: int = Field(10, ge=1)
    em_max_iters: int = Field(200, ge=1)
    em_tolerance: float = Field(1e-4, gt=0)
    em_expectation: Literal['sampled', 'exact'] = 'sampled'
    grid_points: int = Field(default_grid_points, ge=2)

    @model_validator(mode='after')
    def _burn_in_before_end(self):
        if self.burn_in >= self.iterations:
            raise ValueError(f"burn_in ({self.burn_in}) must be smaller than iterations ({self.iterations})")
        return self


class ModelSettings(Settings):
    kind: Literal['cos', 'exp', 'custom'] = 'exp'
    mu: float = Field(10.0, ge=0)
    a1: Optional[float] = Field(None, gt=0)
    a2: Optional[float] = Field(None, gt=0)
    end: float = Field(math.pi, gt=0)

    @model_validator(mode='after')
    def _custom_needs_parameters(self):
        if self.kind == 'custom' and (self.a1 is None or self.a2 is None):
            raise ValueError("custom model needs both a1 and a2")
        return self

    def build(self) -> HawkesModel:
        if self.kind == 'cos':
            kernel = CosineToyKernel()
        elif self.kind == 'exp':
            kernel = ExpToyKernel()
        else:
            kernel = ExponentialKernel(self.a1, self.a2)
        return HawkesModel(self.mu, kernel)


class DataSettings(Settings):
    sequences: int = Field(400, ge=0)
    group_size: int = Field(10, ge=1)
    split_prob: float = Field(1.0, ge=0, le=1)
    similarity: Literal['by-size', 'sequential'] = 'sequential'
    rescale: Literal['auto', 'none', 'last', 'horizon'] = 'auto'
    category: Optional[str] = None


class PathSettings(Settings):
    corpus: Optional[str] = None
    fits: Optional[str] = None
    test_corpus: Optional[str] = None
    out: Optional[str] = None


class RunConfig(Settings):
    method: Literal['gibbs', 'em', 'exp-mle'] = 'gibbs'
    seed: int = 0
    jobs: int = Field(1, ge=1)
    model: ModelSettings = ModelSettings()
    sampler: SamplerConfig = SamplerConfig()
    data: DataSettings = DataSettings()
    paths: PathSettings = PathSettings()


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as e:
        raise UsageError(f"invalid config {path}:\n{e}") from e


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    data = config.model_dump()
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = data
        *parents, leaf = dotted.split('.')
        for key in parents:
            node = node[key]
        node[leaf] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise UsageError(f"invalid option:\n{e}") from e


def dump_config(config: RunConfig) -> str:
    return json.dumps(config.model_dump(), indent=2, sort_keys=True)
