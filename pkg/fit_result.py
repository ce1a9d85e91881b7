import math
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from hawkes_core import ExponentialKernel, HawkesModel, TabulatedKernel, TriggeringKernel

document_version = 1
timing_fields = {'seconds_per_iteration'}


class FitResult(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    version: int = document_version
    method: Literal['gibbs', 'em', 'exp-mle']
    group: Optional[int] = None
    n_sequences: int
    n_events: int
    window_end: float = math.pi
    grid: list[float]
    kernel: list[float]
    kernel_p10: list[float]
    kernel_p50: list[float]
    kernel_p90: list[float]
    mu: float
    mu_p10: float
    mu_p90: float
    parameters: dict[str, float] = {}
    iterations_run: int = 0
    converged: Optional[bool] = None
    trace_mu: list[float] = []
    trace_immigrants: list[float] = []
    trace_objective: list[float] = []
    seconds_per_iteration: list[float] = []

    def kernel_function(self) -> TriggeringKernel:
        if self.method == 'exp-mle' and {'a1', 'a2'} <= self.parameters.keys():
            return ExponentialKernel(self.parameters['a1'], self.parameters['a2'])
        return TabulatedKernel(self.grid, np.maximum(self.kernel, 0.0))

    def hawkes_model(self) -> HawkesModel:
        return HawkesModel(self.mu, self.kernel_function())

    def to_json(self, include_timings=False) -> str:
        exclude = None if include_timings else timing_fields
        return self.model_dump_json(indent=1, exclude=exclude)

    @classmethod
    def load(cls, path):
        return cls.model_validate_json(Path(path).read_text(encoding='utf-8'))


def floats(values) -> List[float]:
    return [float(v) for v in np.asarray(values, dtype=float).reshape(-1)]
