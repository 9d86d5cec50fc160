"""Exception hierarchy shared across the package."""


class TailGPError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(TailGPError, ValueError):
    pass


class IllConditionedKernelError(TailGPError):
    """Correlation matrix could not be factorized at the largest jitter."""

    def __init__(self, message, pair=None, distance=None):
        super().__init__(message)
        self.pair = pair
        self.distance = distance


class FitError(TailGPError):
    """A likelihood fit did not converge; ``best`` holds the best parameters found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SelectionError(TailGPError):
    """No admissible candidate is left for acquisition."""


class EvaluationError(TailGPError):
    """The black-box simulator failed or returned something unusable."""


class ConfigError(TailGPError, ValueError):
    """One or more configuration fields are invalid."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class RunAborted(TailGPError):
    """A sequential run stopped early; ``trace`` holds the records so far."""

    def __init__(self, message, trace=None, cause=None):
        super().__init__(message)
        self.trace = trace
        self.cause = cause
