class W4A16Error(Exception):
    """Base class for every error raised by this package."""


class ShapeError(W4A16Error, ValueError):
    pass


class DomainError(W4A16Error, ValueError):
    pass


class PlanError(W4A16Error, ValueError):
    pass


class FormatError(W4A16Error, ValueError):
    """Malformed file; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
