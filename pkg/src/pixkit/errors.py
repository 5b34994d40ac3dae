"""Exception hierarchy shared across the toolkit.

ValidationError covers bad inputs/configs (CLI exit code 2), RuntimeFailure
covers failures during otherwise valid runs (CLI exit code 1).
"""


class PixkitError(Exception):
    pass


class ValidationError(PixkitError, ValueError):
    pass


class ParseError(ValidationError):
    """Malformed RTTM/CTM/JSON input; carries a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RuntimeFailure(PixkitError, RuntimeError):
    pass
