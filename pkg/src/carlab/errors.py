"""Exception types raised across carlab."""


class ShapeError(ValueError):
    pass


class EmptyClassError(ValueError):
    pass


class DuplicateClassError(ValueError):
    pass


class LabelError(ValueError):
    pass


class EmptyBufferError(ValueError):
    pass


class ProtocolError(ValueError):
    pass


class ParseError(ValueError):
    """Malformed dataset file. ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDatasetError(ValueError):
    pass


class InsufficientHistoryError(ValueError):
    pass


class UsageError(ValueError):
    pass


class NonFiniteLossError(RuntimeError):
    pass
