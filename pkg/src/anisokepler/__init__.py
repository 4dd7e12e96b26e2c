"""Positive-energy orbits of the anisotropic Kepler problem by action minimization."""
from .dynamics import State, Trajectory, energy, integrate, monitors
from .errors import (
    AnisoKeplerError,
    BracketError,
    ConfigError,
    ConstraintError,
    ContinuationError,
    DomainError,
    FitError,
    LiftAmbiguityError,
    SingularityError,
)
from .minimize import (
    MinimizeOptions,
    MinimizeResult,
    free_time_minimize,
    minimize_constrained,
    minimize_fixed_time,
)
from .paths import Path, action, read_path_csv, write_path_csv
from .potential import PotentialParams, check_conditions, critical_structure, eval_U, grad_U
from .scatter import ContinuationSchedule, EscapeData, bihyperbolic_solve, hyperbolic_solve

__all__ = [
    "AnisoKeplerError",
    "BracketError",
    "ConfigError",
    "ConstraintError",
    "ContinuationError",
    "ContinuationSchedule",
    "DomainError",
    "EscapeData",
    "FitError",
    "LiftAmbiguityError",
    "MinimizeOptions",
    "MinimizeResult",
    "Path",
    "PotentialParams",
    "SingularityError",
    "State",
    "Trajectory",
    "action",
    "bihyperbolic_solve",
    "check_conditions",
    "critical_structure",
    "energy",
    "eval_U",
    "free_time_minimize",
    "grad_U",
    "hyperbolic_solve",
    "integrate",
    "minimize_constrained",
    "minimize_fixed_time",
    "monitors",
    "read_path_csv",
    "write_path_csv",
]
