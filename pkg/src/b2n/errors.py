"""Shared exception types.

Module-specific errors subclass :class:`B2NError` so the CLI can map any
toolkit failure to a stage-tagged nonzero exit.
"""


class B2NError(Exception):
    """Base class for all toolkit errors."""


class MissingClassifierScore(B2NError):
    """A detection lacks the classifier score required by the operation."""
