"""Kinodynamic motion planning with discontinuity-bounded search and repair."""

from .dynamics import ConfigurationError, SystemModel, make_system, wrap_angle
from .geometry import Box, Environment, RobotShape, default_shape, motion_valid, state_valid
from .metric import NNIndex, StateMetric, distance
from .primitives import (
    MotionPrimitive,
    PrimitiveLibrary,
    compute_delta,
    extract_primitives,
    generate_primitives,
    load_library,
    save_library,
    sort_by_dispersion,
    split_motion,
    validate_primitive,
)
from .dbastar import DbSolution, check_db_bounded, db_astar, heuristic
from .trajopt import (
    OptProblem,
    OptResult,
    feasibility_report,
    optimize_fixed_T,
    optimize_with_time_search,
    solve_bvp,
)

__version__ = "0.1.0"
