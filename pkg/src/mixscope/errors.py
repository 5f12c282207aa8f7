class MixscopeError(Exception):
    """Base class for library errors."""


class ValidationError(MixscopeError, ValueError):
    pass


class EmptyTraceError(ValidationError):
    pass


class EmptyObservationError(ValidationError):
    pass


class TraceParseError(ValidationError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
