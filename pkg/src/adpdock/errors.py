"""Exception types shared across the toolkit."""


class RankDeficiencyError(ValueError):
    """A regression or constraint matrix fell short of full column rank.

    Attributes
    ----------
    rank : int
        Numerical rank actually found.
    required : int
        Rank needed for the operation to be well posed.
    """

    def __init__(self, message, rank, required):
        super().__init__(message)
        self.rank = rank
        self.required = required


class NoSolutionError(ValueError):
    """A linear matrix equation admits no solution within tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration budget before converging."""

    def __init__(self, message, iterations, history=None):
        super().__init__(message)
        self.iterations = iterations
        self.history = history


class DivergenceError(RuntimeError):
    """Simulated state became non-finite."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class StageFailure(RuntimeError):
    """A pipeline stage failed; carries the stage name for exit-code mapping."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
