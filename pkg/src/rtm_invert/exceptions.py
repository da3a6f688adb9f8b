"""Exception hierarchy shared across the package."""


class RTMInvertError(Exception):
    """Base class for all package errors."""


class ValidationError(RTMInvertError, ValueError):
    """Bad user-supplied input; the CLI maps these to exit code 1."""


class NonFiniteInput(ValidationError):
    pass


class DomainError(RTMInvertError, ArithmeticError):
    """A primitive was evaluated outside its mathematical domain."""

    def __init__(self, primitive, value):
        self.primitive = primitive
        self.value = value
        super().__init__(f"{primitive}: argument outside domain (offending value {value!r})")


class PackFormatError(ValidationError):
    pass


class BandError(ValidationError):
    pass


class RangeError(ValidationError):
    """A physical or latent variable lies outside its admissible range."""

    def __init__(self, variable, value, lo, hi):
        self.variable = variable
        self.value = value
        self.lo = lo
        self.hi = hi
        super().__init__(f"{variable}={value!r} outside range [{lo:g}, {hi:g}]")


class DataFormatError(ValidationError):
    """Raised on malformed dataset files; ``row_errors`` lists (line, message) pairs."""

    def __init__(self, message, row_errors=()):
        self.row_errors = list(row_errors)
        super().__init__(message)


class CheckpointError(ValidationError):
    pass


class TrainingError(RTMInvertError, RuntimeError):
    pass
