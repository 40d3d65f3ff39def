"""Exception types shared across the package."""


class BqprefError(Exception):
    """Base class for all package errors."""


class InputError(BqprefError, ValueError):
    """A caller violated an operation's precondition."""


class ParseError(InputError):
    """Instance file is malformed; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GuardError(InputError):
    """Refusal: the request exceeds a configured safety guard (e.g. 2^n blowup)."""


class UndefinedGapError(BqprefError):
    """Relative gap is undefined because the reference optimum is zero."""


class ParameterExtractionError(BqprefError):
    """Dual certificate could not be turned into certified reformulation parameters."""


class BuildError(BqprefError):
    """A reformulation builder was handed parameters that violate its contract."""


class BoundUnavailableError(BqprefError):
    """The relaxation solve failed; callers must treat the node bound as -inf."""


class NumericalFailureError(BqprefError):
    """A solver terminated without a certified optimal result."""


class ConfigError(InputError):
    """Benchmark or CLI configuration is invalid."""
