"""Shared exception types."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


def require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValidationError(msg)
