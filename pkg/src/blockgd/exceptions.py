"""Exception types shared across the package."""


class BlockGDError(Exception):
    """Base class for all blockgd errors."""


class InvalidProblemError(BlockGDError, ValueError):
    """Problem definition or input dimensions are unusable."""


class InvalidBlockError(BlockGDError, ValueError):
    """Block indices are empty, duplicated, or out of range."""


class InvalidConfigError(BlockGDError, ValueError):
    """Solver or experiment configuration violates its contract."""


class UnknownProblemError(BlockGDError, KeyError):
    """Requested problem name is not in the registry."""

    def __str__(self):  # KeyError quotes its argument; keep the message readable
        return self.args[0] if self.args else ""


class EvaluationError(BlockGDError, ArithmeticError):
    """Residual or Jacobian evaluation produced non-finite values."""


class NumericalInconsistencyError(BlockGDError, ArithmeticError):
    """Analytically coupled quantities disagree (e.g. ||w|| = 0 while ||p|| > 0)."""


class UnsupportedModeError(BlockGDError, RuntimeError):
    """Operation needs row-support metadata the problem does not declare."""


class TooManyBlocksError(BlockGDError, ValueError):
    """Exhaustive block enumeration would exceed the guard limit."""


class ZeroMatrixError(BlockGDError, ValueError):
    """Matrix has no nonzero singular values."""


class InvalidConstantsError(BlockGDError, ValueError):
    """Rate-bound constants are outside the admissible range."""


class ConfigFileError(BlockGDError, ValueError):
    """Experiment config file could not be parsed."""

    def __init__(self, message, line_no=None, line=None):
        self.line_no = line_no
        self.line = line
        if line_no is not None:
            message = f"line {line_no}: {message}" + (f" [{line.strip()}]" if line else "")
        super().__init__(message)
