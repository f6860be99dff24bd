"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class DegenerateInputError(ValueError):
    """Input is well-formed but mathematically degenerate (e.g. zero norm)."""


class NumericFailureError(ArithmeticError):
    pass


class FormatError(ValueError):
    """Malformed file: checkpoint, CSV, or config."""


class StateError(RuntimeError):
    pass
