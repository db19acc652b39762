"""
Numerical defaults and the Options bundle passed through the checkers.

Defaults live here as module-level constants. A problem file's "options"
block and CLI flags override them through Options.from_mapping() and
Options.with_overrides(). The worker count falls back to the DCCERT_THREADS
environment variable.
"""

import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Mapping, Optional, Tuple

# Absolute tolerance on LP objective values and set comparisons
DEFAULT_TOL = 1e-9

# Tolerance requested from the conic solver
SOLVER_TOL = 1e-10

# eta schedule: uniform grid on [0, eta_max] plus detected breakpoints
DEFAULT_ETA_POINTS = 64

# Random boundary points of the eps-subdifferential tested besides vertices
DEFAULT_BOUNDARY_SAMPLES = 50

# Numerical active set for inequality families
DEFAULT_ACTIVE_TOL = 1e-6

# "alpha1 > 0" in the converse is read as alpha1 >= this floor
DEFAULT_ALPHA1_FLOOR = 1e-3

# Schedule used by the "for all eta small enough" sufficiency checks
DEFAULT_SMALL_ETAS: Tuple[float, ...] = (0.0, 1e-4, 1e-3, 1e-2)

# Midpoint-convexity grid for B-DC validation
DEFAULT_VALIDATION_POINTS = 21

# Oracle grids
DEFAULT_GRID_POINTS = 201
MAX_GRID_POINTS = 10 ** 7

# Solver loop
DEFAULT_MAX_ITER = 200

THREADS_ENV = "DCCERT_THREADS"


def env_threads(default: int = 1) -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")


@dataclass(frozen=True)
class Options:
    """Tolerances, grids and seeds shared by every check.

    Args:
        tol: absolute tolerance on gaps and LP values.
        eta_max: upper end of the eta schedule; None derives it from the
            function values at the tested point.
        eta_points: uniform points in the eta schedule.
        boundary_samples: random boundary points of eps-subdifferentials.
        seed: seed for every random draw.
        threads: worker count for sweeps.
        active_tol: numerical active-set tolerance.
        alpha1_floor: operational reading of alpha1 > 0.
        small_etas: schedule for local sufficiency checks.
        grid_points: oracle grid points per dimension.
        max_iter: iteration cap for the DCA solver.
    """

    tol: float = DEFAULT_TOL
    eta_max: Optional[float] = None
    eta_points: int = DEFAULT_ETA_POINTS
    boundary_samples: int = DEFAULT_BOUNDARY_SAMPLES
    seed: int = 0
    threads: int = field(default_factory=env_threads)
    active_tol: float = DEFAULT_ACTIVE_TOL
    alpha1_floor: float = DEFAULT_ALPHA1_FLOOR
    small_etas: Tuple[float, ...] = DEFAULT_SMALL_ETAS
    validation_points: int = DEFAULT_VALIDATION_POINTS
    grid_points: int = DEFAULT_GRID_POINTS
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.tol < 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")
        if self.eta_points < 2:
            raise ValueError(f"eta_points must be >= 2, got {self.eta_points}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.grid_points < 2:
            raise ValueError(f"grid_points must be >= 2, got {self.grid_points}")

    def with_overrides(self, **overrides: Any) -> "Options":
        """Copy with every non-None override applied."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        if "small_etas" in changes:
            changes["small_etas"] = tuple(float(e) for e in changes["small_etas"])
        return replace(self, **changes)

    @classmethod
    def from_mapping(cls, data: Optional[Mapping[str, Any]]) -> "Options":
        """Build from a problem file's "options" block (unknown keys rejected)."""
        if not data:
            return cls()
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown option(s): {', '.join(unknown)}")
        return cls().with_overrides(**dict(data))

    def to_dict(self) -> Dict[str, Any]:
        out = {name: getattr(self, name) for name in self.__dataclass_fields__}
        out["small_etas"] = list(self.small_etas)
        return out
