"""Exception hierarchy shared across the platform."""

from __future__ import annotations


class RelabelKitError(Exception):
    """Base class for all platform errors."""


class ParseError(RelabelKitError):
    """An input file could not be parsed (bad JSON, missing field, bad type)."""


class ValidationError(RelabelKitError):
    """A record violates a domain invariant."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class DuplicateIdError(ValidationError):
    """An identifier that must be unique appeared twice."""


class UnknownIdError(ValidationError):
    """A record references an id that is not registered."""


class UndefinedMetricError(RelabelKitError):
    """A metric has an empty denominator or too little data to be defined."""


class DegenerateInputError(RelabelKitError):
    """Regression input has no variance on the x axis."""


class CoverageMismatchError(RelabelKitError):
    """Prediction sets do not cover the expected image set."""


class NotAssignedError(RelabelKitError):
    """Annotator is not assigned to the image at the current stage."""


class StaleStageError(RelabelKitError):
    """A submission targets a stage the workflow is no longer (or not yet) in."""


class MissingCommentError(ValidationError):
    """A refinement edit changed the pre-checked set without a comment."""


class StageOrderError(RelabelKitError):
    """A pipeline command ran before its prerequisite stage completed."""


class NotReadyError(RelabelKitError):
    """Requested output depends on an analysis that has not been run."""


class AuthError(RelabelKitError):
    """Invalid credentials, or an invalid or expired session token."""
