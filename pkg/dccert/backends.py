"""
Thin wrappers around the two numerical back ends.

  solve_lp       scipy.optimize.linprog (HiGHS dual simplex). Used for every
                 LP whose data is available as plain arrays: polytope
                 boundedness, Chebyshev centers, multiplier and QC searches.
  solve_program  cvxpy problems. Purely linear programs go to the SCIPY
                 (HiGHS) interface so vertex solutions come back exact;
                 programs with quad-over-lin or PSD cones go to Clarabel with
                 tight tolerances, falling back to ECOS and SCS.

Both return a normalized status string: "optimal", "inaccurate",
"infeasible" or "unbounded". Anything else raises NumericFailure.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog

from .config import SOLVER_TOL
from .errors import NumericFailure

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INACCURATE = "inaccurate"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

# Comparison floor for values produced by interior-point conic solves
CONIC_TOL = 1e-7

_LINPROG_STATUS = {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}

_CVXPY_STATUS = {
    cp.OPTIMAL: OPTIMAL,
    cp.OPTIMAL_INACCURATE: INACCURATE,
    cp.INFEASIBLE: INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: INFEASIBLE,
    cp.UNBOUNDED: UNBOUNDED,
    cp.UNBOUNDED_INACCURATE: UNBOUNDED,
}

_CONIC_CHAIN = (
    (cp.CLARABEL, {"tol_gap_abs": SOLVER_TOL, "tol_gap_rel": SOLVER_TOL, "tol_feas": SOLVER_TOL,
                   "max_iter": 500}),
    (cp.ECOS, {"abstol": SOLVER_TOL, "reltol": SOLVER_TOL, "feastol": SOLVER_TOL, "max_iters": 500}),
    (cp.SCS, {"eps": 1e-9, "max_iters": 100000}),
)

_LINEAR_CHAIN = ((cp.SCIPY, {"scipy_options": {"method": "highs-ds"}}),) + _CONIC_CHAIN


@dataclass
class LPResult:
    status: str
    x: Optional[np.ndarray]
    fun: float


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None,
             label: str = "lp") -> LPResult:
    """Solve min c.x s.t. A_ub x <= b_ub, A_eq x = b_eq; variables free by default."""
    c = np.asarray(c, dtype=float)
    if bounds is None:
        bounds = [(None, None)] * c.size
    A_ub = None if A_ub is None or np.size(A_ub) == 0 else np.asarray(A_ub, dtype=float)
    b_ub = None if A_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = None if A_eq is None or np.size(A_eq) == 0 else np.asarray(A_eq, dtype=float)
    b_eq = None if A_eq is None else np.asarray(b_eq, dtype=float)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs-ds")
    status = _LINPROG_STATUS.get(res.status)
    if status is None:
        raise NumericFailure(f"{label}: linprog failed ({res.message})", status=str(res.status))
    if status != OPTIMAL:
        logger.debug(f"{label}: linprog status {status}")
        return LPResult(status, None, np.inf if status == INFEASIBLE else -np.inf)
    return LPResult(status, np.asarray(res.x, dtype=float), float(res.fun))


def is_linear(problem: cp.Problem) -> bool:
    """True when the canonicalized problem only needs the nonnegative cone."""
    linear_kinds = (cp.constraints.Zero, cp.constraints.NonPos, cp.constraints.NonNeg,
                    cp.constraints.Equality, cp.constraints.Inequality)
    for constraint in problem.constraints:
        if not isinstance(constraint, linear_kinds):
            return False
        if not all(arg.is_pwl() for arg in constraint.args):
            return False
    return problem.objective.expr.is_pwl()


def solve_program(problem: cp.Problem, label: str = "program", linear: Optional[bool] = None) -> str:
    """Solve a cvxpy problem through the solver chain; return the status."""
    if linear is None:
        linear = is_linear(problem)
    installed = set(cp.installed_solvers())
    chain = _LINEAR_CHAIN if linear else _CONIC_CHAIN
    last_error = None
    for name, kwargs in chain:
        if name not in installed:
            continue
        try:
            problem.solve(solver=name, **kwargs)
        except cp.error.SolverError as exc:
            last_error = exc
            logger.debug(f"{label}: {name} raised {exc}")
            continue
        status = _CVXPY_STATUS.get(problem.status)
        if status is None:
            last_error = problem.status
            logger.debug(f"{label}: {name} returned {problem.status}")
            continue
        if status == INACCURATE:
            logger.warning(f"{label}: {name} returned an inaccurate solution")
        return status
    raise NumericFailure(f"{label}: no solver succeeded ({last_error})", status=str(last_error))


def value_tol(tol: float, linear: bool) -> float:
    """Comparison tolerance for a value coming from an LP or a conic solve."""
    return tol if linear else max(tol, CONIC_TOL)
