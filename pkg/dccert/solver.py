"""
DCA-style local solver producing candidate points for the certificates.

The merit is the improvement function at the best feasible value so far,

  psi_k(x) = max(phi(x) - alpha_k, f(x)),   f = max_k <lam_k, Phi> + offset_k,

with alpha_k = +inf (merit f) until the first feasible iterate. phi and f
share the control h, so psi_k + h is convex and every iteration minimizes
psi_k + h minus the linearization of h at x_k in cvxpy. Each step satisfies
psi_k(x_{k+1}) <= psi_k(x_k); once an iterate is feasible psi_k(x_k) <= 0,
so later iterates stay feasible and alpha_k never increases.

A zero control makes the problem convex; the step is then the exact solve
of min phi subject to f <= 0, which also decreases psi_k.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np

from .backends import INACCURATE, INFEASIBLE, OPTIMAL, solve_program
from .certificates import Problem, improvement_objective
from .config import Options
from .convex_functions import ConvexFunc, Quadratic, as_vector, same_function, subgradient, to_cvxpy
from .errors import NumericFailure, SubproblemFailure
from .workers import map_parallel

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter"
STALLED = "stalled"

# Merit increase tolerated as subproblem solver noise before declaring a stall
MONOTONE_SLACK = 1e-7


@dataclass
class Iterate:
    """x_k with alpha_k, the best feasible value up to and including x_k (None before)."""

    x: np.ndarray
    merit: float
    objective: float
    feasible: bool
    alpha: Optional[float] = None


@dataclass
class SolveTrace:
    iterates: List[Iterate] = field(default_factory=list)
    status: str = MAX_ITER
    final: Optional[np.ndarray] = None

    @property
    def best_feasible(self) -> Optional[Iterate]:
        feas = [it for it in self.iterates if it.feasible]
        return min(feas, key=lambda it: it.objective) if feas else None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "final": None if self.final is None else self.final.tolist(),
            "iterations": len(self.iterates) - 1,
            "merits": [it.merit for it in self.iterates],
            "alphas": [it.alpha for it in self.iterates],
        }


def improvement_merit(P: Problem, x, alpha: Optional[float]) -> float:
    """max(phi(x) - alpha, f(x)); f(x) alone while alpha is None."""
    x = as_vector(x, P.dim)
    value = P.constraint.value(x)
    if alpha is None:
        return value
    return max(P.objective.evaluate(x) - alpha, value)


def _pieces(P: Problem, alpha: Optional[float]) -> List[ConvexFunc]:
    """Convex pieces of psi + h at level alpha."""
    imp = improvement_objective(P, level=0.0 if alpha is None else alpha)
    return imp.pieces if alpha is None else imp.all_pieces()


def _linearization(h: ConvexFunc, xk: np.ndarray, xvar: cp.Variable) -> cp.Expression:
    return h.evaluate(xk) + subgradient(h, xk) @ (xvar - xk)


class _Majorant:
    """Convex majorant of psi_k at x_k: max of the pieces minus the linearized control.

    With a zero control the problem is convex and is solved in one step:
    minimize phi subject to f <= 0, falling back to minimizing f when that
    is infeasible.
    """

    def __init__(self, P: Problem, box=None):
        if not hasattr(P.constraint, "dual_vertices"):
            raise TypeError(f"solve_dca needs a polyhedral set or cone constraint, got {type(P.constraint).__name__}")
        self.P = P
        self.box = box
        self.convex = same_function(P.h, Quadratic.zero(P.dim))

    def _base_constraints(self, x: cp.Variable) -> list:
        cons = []
        for S in (self.P.Q, self.box):
            if S is None:
                continue
            A, b, Aeq, beq = S.hrep
            if A.shape[0]:
                cons.append(A @ x <= b)
            if Aeq.shape[0]:
                cons.append(Aeq @ x == beq)
        return cons

    def _exprs(self, pieces: List[ConvexFunc], x: cp.Variable, cons: list) -> list:
        exprs = []
        for g in pieces:
            expr, dom = to_cvxpy(g, x)
            exprs.append(expr)
            cons.extend(dom)
        return exprs

    def _solve(self, problem: cp.Problem, xk: np.ndarray) -> str:
        try:
            return solve_program(problem, "dca-step")
        except NumericFailure as exc:
            raise SubproblemFailure(f"DCA subproblem at x={xk.tolist()} failed: {exc}", status=exc.status) from exc

    def _convex_step(self, xk: np.ndarray, x: cp.Variable) -> Optional[np.ndarray]:
        cons = self._base_constraints(x)
        psi1, *pieces = _pieces(self.P, 0.0)
        objective = self._exprs([psi1], x, cons)[0]
        cons.extend(e <= 0 for e in self._exprs(pieces, x, cons))
        status = self._solve(cp.Problem(cp.Minimize(objective), cons), xk)
        if status == INFEASIBLE:
            logger.info("convex problem has no feasible point; minimizing the constraint value")
            return None
        if status not in (OPTIMAL, INACCURATE) or x.value is None:
            raise SubproblemFailure(f"convex solve from x={xk.tolist()} ended with status {status}", status=status)
        return np.asarray(x.value, dtype=float)

    def step(self, xk: np.ndarray, alpha: Optional[float]) -> np.ndarray:
        x = cp.Variable(self.P.dim, name="x")
        if self.convex:
            x_new = self._convex_step(xk, x)
            if x_new is not None:
                return x_new
            alpha = None
        cons = self._base_constraints(x)
        exprs = self._exprs(_pieces(self.P, alpha), x, cons)
        objective = cp.max(cp.hstack(exprs)) - _linearization(self.P.h, xk, x)
        status = self._solve(cp.Problem(cp.Minimize(objective), cons), xk)
        if status not in (OPTIMAL, INACCURATE) or x.value is None:
            raise SubproblemFailure(f"DCA subproblem at x={xk.tolist()} ended with status {status}", status=status)
        return np.asarray(x.value, dtype=float)


def _iterate(P: Problem, x: np.ndarray, alpha: Optional[float], tol: float) -> Iterate:
    feasible = P.feasible(x, tol)
    objective = P.objective.evaluate(x)
    if feasible:
        alpha = objective if alpha is None else min(alpha, objective)
    return Iterate(x, improvement_merit(P, x, alpha), objective, feasible, alpha)


def _alpha_drop(before: Optional[float], after: Optional[float]) -> float:
    if after is None:
        return 0.0
    return np.inf if before is None else before - after


def solve_dca(P: Problem, x0, opts: Optional[Options] = None, box=None) -> SolveTrace:
    """Run DCA on the improvement function from x0.

    Stops when the merit decrease plus the decrease of alpha falls below
    opts.tol (or the subproblem noise floor) and the step is small.
    """
    opts = opts or Options()
    x = as_vector(x0, P.dim)
    if not np.isfinite(P.h.evaluate(x)):
        raise ValueError(f"x0={x.tolist()} is outside dom h")
    feas_tol = max(opts.tol, 1e-7)
    majorant = _Majorant(P, box)
    trace = SolveTrace([_iterate(P, x, None, feas_tol)])
    for k in range(opts.max_iter):
        current = trace.iterates[-1]
        x_new = majorant.step(current.x, current.alpha)
        reached = improvement_merit(P, x_new, current.alpha)
        if reached > current.merit + MONOTONE_SLACK * (1 + abs(current.merit)):
            logger.warning(f"DCA merit increased at step {k}: {current.merit:.12g} -> {reached:.12g}")
            trace.status = STALLED
            break
        nxt = _iterate(P, x_new, current.alpha, feas_tol)
        if current.feasible and not nxt.feasible:
            logger.warning(f"DCA step {k} left the feasible set by {P.constraint.value(x_new):.3g}")
            trace.status = STALLED
            break
        trace.iterates.append(nxt)
        logger.debug(f"DCA step {k}: x={x_new.tolist()} merit={nxt.merit:.12g} alpha={nxt.alpha}")
        progress = (current.merit - reached) + _alpha_drop(current.alpha, nxt.alpha)
        if progress < max(opts.tol, MONOTONE_SLACK * (1 + abs(nxt.merit))) and \
                np.linalg.norm(x_new - current.x) <= np.sqrt(max(opts.tol, 1e-12)) * (1 + np.linalg.norm(x_new)):
            trace.status = CONVERGED
            break
    trace.final = trace.iterates[-1].x
    logger.info(f"DCA finished ({trace.status}) after {len(trace.iterates) - 1} steps at x={trace.final.tolist()}")
    return trace


def solve_multistart(P: Problem, starts: Sequence, opts: Optional[Options] = None,
                     box=None) -> Tuple[Optional[SolveTrace], List[SolveTrace]]:
    """Independent traces from every start, plus the one reaching the best feasible point."""
    opts = opts or Options()
    traces = map_parallel(lambda x0: solve_dca(P, x0, opts, box), list(starts), opts.threads)
    feasible = [t for t in traces if t.best_feasible is not None]
    best = min(feasible, key=lambda t: t.best_feasible.objective) if feasible else None
    return best, traces


def write_trace_csv(trace: SolveTrace, path: str):
    """iter, merit, alpha, objective, feasible, x_1 .. x_n; alpha is empty before the first feasible iterate."""
    n = trace.iterates[0].x.size if trace.iterates else 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iter", "merit", "alpha", "objective", "feasible"] + [f"x{i + 1}" for i in range(n)])
        for k, it in enumerate(trace.iterates):
            alpha = "" if it.alpha is None else repr(float(it.alpha))
            writer.writerow([k, repr(float(it.merit)), alpha, repr(float(it.objective)), int(it.feasible)]
                            + [repr(float(v)) for v in it.x])
