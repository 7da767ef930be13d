"""Exception types raised across the package."""


class PseudoLabelError(Exception):
    """Base class for all package errors."""


class InsufficientPoints(PseudoLabelError, ValueError):
    pass


class NoHorizontalPlane(PseudoLabelError):
    pass


class EmptyInput(PseudoLabelError, ValueError):
    pass


class DegenerateRange(PseudoLabelError, ValueError):
    pass


class ShapeError(PseudoLabelError, ValueError):
    pass


class DomainError(PseudoLabelError, ValueError):
    pass


class EmptyPositiveSet(PseudoLabelError, ValueError):
    pass


class ZeroVector(PseudoLabelError, ValueError):
    pass


class NoGroundTruth(PseudoLabelError, ValueError):
    pass


class ParseError(PseudoLabelError):
    """Scene container could not be decoded."""


class SchemaError(PseudoLabelError):
    """Scene container decoded but violates a data-model invariant."""


class VersionError(PseudoLabelError):
    """Scene container declares an unsupported format version."""


class IoError(PseudoLabelError, OSError):
    """An output file could not be written."""
