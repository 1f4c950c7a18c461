"""Space-time least-squares damped-Newton solver for 2D unsteady Navier-Stokes."""

from .cli import ExperimentConfig, RunReport, lid_profile, parse_config, run_experiment
from .fem import Space, build_space
from .mesh import Mesh, Tag, generate_semidisk, generate_unit_square, read_triangle_format
from .newton import (
    NewtonResult,
    continuation_in_nu,
    damped_newton_solve,
    residual_variant_solve,
)
from .timestepping import FieldTrajectory, Operators, TimeGrid

__all__ = [
    "ExperimentConfig",
    "FieldTrajectory",
    "Mesh",
    "NewtonResult",
    "Operators",
    "RunReport",
    "Space",
    "Tag",
    "TimeGrid",
    "build_space",
    "continuation_in_nu",
    "damped_newton_solve",
    "generate_semidisk",
    "generate_unit_square",
    "lid_profile",
    "parse_config",
    "read_triangle_format",
    "residual_variant_solve",
    "run_experiment",
]
