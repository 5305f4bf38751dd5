# ---------------------------------
# TYPED EXCEPTIONS
# ---------------------------------


class DampError(Exception):
    """Root of every error raised by this package."""


class InvalidInputError(DampError, ValueError):
    """A precondition on an argument was violated."""


class UnsupportedOperationError(DampError):
    """The requested operation cannot be carried out for these arguments."""


class ConfigError(DampError):
    """Configuration failed validation before any work started."""


class DegenerateDistributionError(DampError):
    """p(he|t) + p(she|t) vanished, so the gender prediction cannot be renormalized."""


class DegenerateStatisticsError(DampError):
    """A statistic has a zero denominator or rank-deficient input."""


class TrainingFailureError(DampError):
    """Toy-model training diverged."""

    def __init__(self, message: str, *, iteration: int) -> None:
        self.iteration = iteration
        super().__init__(f'{message} (iteration {iteration})')


class OptimizationFailureError(DampError):
    """The embedding optimization produced a non-finite loss."""

    def __init__(self, message: str, *, iteration: int) -> None:
        self.iteration = iteration
        super().__init__(f'{message} (iteration {iteration})')


class GenerationFailureError(DampError):
    """Template generation exhausted its restart budget."""

    def __init__(self, occupation: str, restarts: int) -> None:
        self.occupation = occupation
        self.restarts = restarts
        super().__init__(
            f"Could not generate a template for '{occupation}' after {restarts} restarts; "
            'the model does not link this word to both pronouns.'
        )


class ParameterPartitionError(DampError):
    """A debias step touched parameters outside the occupation embedding rows."""


class DecompositionIdentityError(DampError):
    """te != tde + nie beyond tolerance."""


class MissingUpstreamError(DampError):
    """A pipeline stage was started before the stage it depends on produced its artifacts."""

    def __init__(self, stage: str, upstream: str, missing: str) -> None:
        self.stage = stage
        self.upstream = upstream
        self.missing = missing
        super().__init__(
            f"Stage '{stage}' needs '{missing}' from stage '{upstream}'. "
            f"Run '--stage {upstream}' first."
        )


NUMERICAL_ERRORS: tuple[type[DampError], ...] = (
    TrainingFailureError,
    OptimizationFailureError,
    DegenerateDistributionError,
    DegenerateStatisticsError,
    DecompositionIdentityError,
    ParameterPartitionError,
)
