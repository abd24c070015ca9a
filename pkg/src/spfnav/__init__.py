"""Smooth penalty-based safety filtering for reactive navigation.

The package provides an obstacle-world geometry engine, a simulated LiDAR
front-end, the closed-form projection safety filter, a trajectory simulator,
and a curvature-based analyzer of undesired equilibria, together with a CLI
that runs configuration documents end to end.
"""

from .analysis import (
    EquilibriumReport,
    classify_equilibrium,
    curvature_levelset,
    curvature_obstacle,
    find_equilibria,
    jacobian_at,
)
from .controller import (
    FilterDiagnostics,
    QuadraticPotential,
    SensorReading,
    closed_loop_field,
    nominal_control,
    spf_filter,
    spf_filter_multi,
)
from .geometry import (
    Bounds,
    ConvexPolygon2D,
    Disk2D,
    DistanceQuery,
    Implicit,
    RobotParams,
    Sphere3D,
    Spline2D,
    World,
    distance_hessian,
    distance_to_obstacles,
    load_world,
    margin,
    validate_feasibility,
    world_from_dict,
    world_to_dict,
)
from .penalty import PenaltyParams, blend_weight, penalty_value, transition
from .sensing import (
    LidarConfig,
    Scan,
    extract_reading,
    make_sensor,
    oracle_reading,
    raycast,
    scan_2d,
    scan_3d,
)
from .simulation import (
    SimConfig,
    Trajectory,
    batch_simulate,
    emit_vector_field,
    sample_initial_conditions,
    simulate,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "Bounds",
    "ConvexPolygon2D",
    "Disk2D",
    "DistanceQuery",
    "EquilibriumReport",
    "FilterDiagnostics",
    "Implicit",
    "LidarConfig",
    "PenaltyParams",
    "QuadraticPotential",
    "RobotParams",
    "Scan",
    "SensorReading",
    "SimConfig",
    "Sphere3D",
    "Spline2D",
    "Trajectory",
    "World",
    "batch_simulate",
    "blend_weight",
    "classify_equilibrium",
    "closed_loop_field",
    "curvature_levelset",
    "curvature_obstacle",
    "distance_hessian",
    "distance_to_obstacles",
    "emit_vector_field",
    "extract_reading",
    "find_equilibria",
    "jacobian_at",
    "load_world",
    "make_sensor",
    "margin",
    "nominal_control",
    "oracle_reading",
    "penalty_value",
    "raycast",
    "sample_initial_conditions",
    "scan_2d",
    "scan_3d",
    "simulate",
    "spf_filter",
    "spf_filter_multi",
    "step",
    "transition",
    "validate_feasibility",
    "world_from_dict",
    "world_to_dict",
]
