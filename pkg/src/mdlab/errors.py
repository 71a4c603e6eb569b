"""Semantic exception hierarchy.

The CLI maps these onto exit codes: DomainError -> 2,
ModelIntegrityError -> 3, ResourceError -> 4.  Every message is expected
to name the violated precondition or cap.
"""


class MDLabError(Exception):
    """Base class for all library errors."""


class DomainError(MDLabError, ValueError):
    """An input violates a documented precondition."""


class DegenerateError(DomainError):
    """A distribution is degenerate where a spread is required (e.g. sigma = 0)."""


class ResourceError(MDLabError):
    """A configured resource cap would be exceeded."""


class ModelIntegrityError(MDLabError):
    """An exact internal identity failed: kernel and closed form disagree."""
