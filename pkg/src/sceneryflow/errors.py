"""Exception types shared across the package."""


class SceneryFlowError(Exception):
    """Base class for all package errors."""


class InvalidSubspaceError(SceneryFlowError):
    """Frame is not orthonormal (within tolerance) or has a bad shape."""


class InvalidRuleError(SceneryFlowError):
    """Cascade rule parameters are malformed."""


class DegenerateMeasureError(SceneryFlowError):
    """Requested restriction or build carries zero mass."""


class OutsideSupportError(SceneryFlowError):
    """Query point carries no mass at the requested scale."""


class OutOfDomainError(SceneryFlowError):
    """Magnification ball escapes the ambient cube."""


class ResolutionExhaustedError(SceneryFlowError):
    """Measure cannot be refined far enough for the requested operation."""


class UndefinedMagnificationError(SceneryFlowError):
    """Magnification step at a zero-mass dyadic cell."""


class TruncatedOrbitError(SceneryFlowError):
    """Magnification orbit stopped early; carries the achieved length."""

    def __init__(self, message, achieved_length):
        super().__init__(message)
        self.achieved_length = achieved_length


class CorruptFileError(SceneryFlowError):
    """Measure file failed validation on load."""


class ScheduleTooShortError(SceneryFlowError):
    """Splice schedule does not reach the requested depth."""


class InvalidConfigError(SceneryFlowError):
    """Experiment configuration violates parameter constraints."""
