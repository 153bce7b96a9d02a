"""
Base model for proxyhash domain types.

Invariant checks raise ProxyHashError subclasses from inside pydantic
validators. pydantic wraps any ValueError raised there in a ValidationError,
so the constructor unwraps it and re-raises the original error.
"""

from typing import Any

from pydantic import BaseModel, ValidationError

from core.errors import ProxyHashError


def unwrap_validation_error(exc: ValidationError) -> Exception:
    """The first ProxyHashError carried by `exc`, or `exc` itself."""
    for error in exc.errors():
        original = (error.get("ctx") or {}).get("error")
        if isinstance(original, ProxyHashError):
            return original
    return exc


class ProxyHashModel(BaseModel):
    def __init__(self, /, **data: Any) -> None:
        try:
            super().__init__(**data)
        except ValidationError as exc:
            raise unwrap_validation_error(exc) from None
