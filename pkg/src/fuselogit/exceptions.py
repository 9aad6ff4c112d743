"""Exception types shared across the package."""


class FuselogitError(Exception):
    """Base class for all library errors."""


class SchemaError(FuselogitError, ValueError):
    """A value violates the declared covariate schema."""


class DimensionError(FuselogitError, ValueError):
    """Array shapes are inconsistent with the schema or with each other."""


class DegenerateWeightsError(FuselogitError, ArithmeticError):
    """IRLS weights collapsed numerically (fitted probabilities at 0 or 1).

    This typically signals (quasi-)complete separation of the data.
    """


class TuningError(FuselogitError, RuntimeError):
    """Cross-validation or penalty-bound search could not be completed."""
