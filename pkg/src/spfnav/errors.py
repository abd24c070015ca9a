"""Exception types raised across the toolkit."""


class SpfError(Exception):
    """Base class for all toolkit errors."""


class InsideObstacle(SpfError):
    """Query point lies inside or on an obstacle."""


class EmptyWorld(SpfError):
    """Distance query against a world with no obstacles."""


class NonSmoothPoint(SpfError):
    """Distance Hessian requested on a tie locus or Voronoi seam."""


class UnknownReach(SpfError):
    """Feasibility bounds cannot be computed for spline/implicit obstacles."""


class InvalidThreshold(SpfError):
    """Transition threshold must be positive."""


class PenaltyUnbounded(SpfError):
    """Penalty value requested where the blend weight saturates at 1."""


class InvalidNormal(SpfError):
    """Sensor reading claims validity but its normal is not unit length."""


class OutsidePracticalFreeSpace(SpfError):
    """Closed-loop field evaluated at a state with margin below tolerance."""


class FieldEvaluationFailed(SpfError):
    """An integrator stage left the practical free space beyond tolerance."""


class NoBoundary(SpfError):
    """Equilibrium search on an empty world."""


class DegenerateGradient(SpfError):
    """Potential gradient vanishes where a level-set curvature is needed."""


class IndefiniteResult(SpfError):
    """A tangent eigenvalue sits within tolerance of zero; verdict undecidable."""


class Unsupported(SpfError):
    """Operation not available for this world dimension."""


class SchemaError(SpfError):
    """Run document or world document violates the schema."""


class SaturatedPenalty(UserWarning):
    """A multi-obstacle blend weight reached saturation and was clamped."""
