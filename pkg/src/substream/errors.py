"""Exception taxonomy shared across the package.

Everything raised on purpose derives from SubstreamError so callers can catch
one base class at the CLI boundary. Warnings derive from UserWarning and go
through the warnings module.
"""

from __future__ import annotations


class SubstreamError(Exception):
    """Base class for all errors raised by this package."""


# -- geometry ---------------------------------------------------------------


class GeometryViolation(SubstreamError):
    """A boundary profile fails one of its admissibility checks."""


class AngleViolation(GeometryViolation):
    """Slope bound |f'| <= delta violated somewhere on the boundary."""


class HeightViolation(GeometryViolation):
    """Profile leaves the admissible vertical band."""


class NormViolation(GeometryViolation):
    """Sampled weighted norm of a boundary piece exceeds its bound."""


class DiscontinuousBoundary(GeometryViolation):
    """Boundary pieces do not agree at the matching points."""


class TruncationTooSmall(GeometryViolation):
    """Requested truncated domain does not contain the curved region."""


class JacobianNonPositive(GeometryViolation):
    """Grid map is degenerate or folds over somewhere."""


# -- far field --------------------------------------------------------------


class InvalidFarField(SubstreamError):
    """Far-field data violates positivity or smallness constraints."""


class NonMonotoneStreamLimit(InvalidFarField):
    """Stream-function limit is not strictly increasing."""


# -- thermodynamics ---------------------------------------------------------


class NegativeChi(SubstreamError):
    """Kinetic term is negative; upstream data is corrupt."""


class SupersonicChi(SubstreamError):
    """Kinetic term exceeds the sonic maximum; no subsonic density exists."""

    def __init__(self, message: str, *, margin=None):
        super().__init__(message)
        self.margin = margin


class SonicProximityWarning(UserWarning):
    """Kinetic term is within rounding of the sonic maximum."""


# -- solver -----------------------------------------------------------------


class SubsonicViolation(SubstreamError):
    """An iterate leaves the subsonic regime at some nodes."""

    def __init__(self, message: str, *, nodes=None):
        super().__init__(message)
        self.nodes = nodes


class QuadratureStateSupersonic(SubsonicViolation):
    """A quadrature state between iterates leaves the subsonic regime."""


class LinearSolveDiverged(SubstreamError):
    """Inner linear solve failed to reach its tolerance."""


class IllConditioned(SubstreamError):
    """Assembled linear system is numerically singular."""


class MaxIterationsExceeded(SubstreamError):
    """Outer fixed-point loop hit its iteration cap.

    Carries the partial report so callers can inspect the update history.
    """

    def __init__(self, message: str, *, report=None):
        super().__init__(message)
        self.report = report


# -- analysis ---------------------------------------------------------------


class StagnationEncountered(SubstreamError):
    """Streamline tracing hit a near-zero momentum region."""


class LeftDomain(SubstreamError):
    """Streamline tracing left the truncated domain."""


class InsufficientRadii(SubstreamError):
    """Decay fit requested with too few usable radii."""


# -- configuration ----------------------------------------------------------


class ParseError(SubstreamError):
    """Config file is not valid JSON or has wrong types."""


class ConstraintViolation(SubstreamError):
    """Config parsed but one or more fields violate their constraints.

    All violations are collected before raising; `violations` lists them.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(self.violations)
        super().__init__(f"{len(self.violations)} constraint violation(s): {lines}")
