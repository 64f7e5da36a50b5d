"""Exception taxonomy shared by every module.

Each class also derives from the closest builtin so callers can catch
either the package-specific type or the generic one.
"""


class GvlmError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(GvlmError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class IndexRangeError(GvlmError, IndexError):
    """A token id, target, or group index is outside its valid range."""


class NumericError(GvlmError, ArithmeticError):
    """A computation produced NaN/Inf where finite values are required."""


class TrainingDiverged(NumericError):
    """Training loss became non-finite; carries the offending step."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"loss became non-finite at step {step}")


class ContractError(GvlmError, RuntimeError):
    """API misuse: non-scalar backward, nested meters, consumed graphs."""


class InputError(GvlmError, ValueError):
    """Bad user-supplied data (empty corpus, negative sigma, ...)."""


class ConfigError(GvlmError, ValueError):
    """Invalid or inconsistent run configuration."""
