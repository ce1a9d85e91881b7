class HawkesError(Exception):
    exit_code = 3


class UsageError(HawkesError):
    exit_code = 1


class CorpusError(HawkesError):
    exit_code = 2


class NumericalError(HawkesError):
    exit_code = 3


class CascadeLimitError(NumericalError):
    def __init__(self, limit, reached):
        super().__init__(f"cascade exceeded {limit} events (reached {reached}); kernel is likely supercritical")
        self.limit = limit
        self.reached = reached


class OptimizerError(NumericalError):
    def __init__(self, message, gradient_norm):
        super().__init__(f"{message} (gradient norm {gradient_norm:.3g})")
        self.gradient_norm = gradient_norm


class PosteriorError(NumericalError):
    pass


class SamplerError(NumericalError):
    def __init__(self, iteration, cause):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration


class BaselineError(NumericalError):
    def __init__(self, message, best_objective):
        super().__init__(f"{message} (best objective {best_objective:.6g})")
        self.best_objective = best_objective
