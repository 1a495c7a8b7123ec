"""Exception types shared across the package."""

from __future__ import annotations


class FupLabError(Exception):
    """Base class for all library errors."""


class ConfigError(FupLabError, ValueError):
    """Invalid user configuration; carries the offending field path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ResolutionTooCoarse(FupLabError):
    """Requested scale lies below the resolution of the set."""


class EmptySetError(FupLabError):
    """Operation needs at least one cell."""


class PreconditionViolated(FupLabError):
    """A named hypothesis of an operation does not hold."""

    def __init__(self, clause: str, detail: str = ""):
        msg = clause if not detail else f"{clause}: {detail}"
        super().__init__(msg)
        self.clause = clause


class NoEmptyCell(FupLabError):
    """Every subinterval meets the set.

    ``precondition_held`` tells a genuine regularity failure (True) apart from
    a partition count below the required threshold (False).
    """

    def __init__(self, message: str, precondition_held: bool):
        super().__init__(message)
        self.precondition_held = precondition_held


class ChildCountViolation(FupLabError):
    """Some tree node has all L children."""

    def __init__(self, message: str, parents: list, precondition_held: bool):
        super().__init__(message)
        self.parents = parents
        self.precondition_held = precondition_held


class DerivativeBoundViolated(FupLabError):
    """Sampled derivative of a map leaves [1/C_F, C_F]."""


class DiskOverlapError(FupLabError):
    """Schottky disks (or their images) overlap."""


class InsufficientScales(FupLabError):
    """Too few scales for a dimension estimate."""


class InsufficientPoints(FupLabError):
    """Too few points for a regression."""


class GridTooCoarse(FupLabError):
    """Quadrature spacing exceeds the required fraction of h."""


class DegeneratePhase(FupLabError):
    """Mixed derivative of a phase vanishes on the support."""


class SupportTouchesDiagonal(FupLabError):
    """Cutoff support comes too close to the diagonal."""


class PointOnSlit(FupLabError):
    """Observation point lies on (or too close to) the slit."""


class RegularityPreconditionFailed(FupLabError):
    """Input set is not certified on the required scales."""


class EmptySupport(FupLabError):
    """Frequency support is empty."""


class ContractionFailed(FupLabError):
    """An iteration step failed to contract."""
