"""
Semi-infinite DC programs on a discretized index set:

    minimize phi(x)  subject to  phi_t(x) <= 0 for t in T

with T replaced by finitely many index points and every phi_t sharing the
control h. Multipliers are finitely supported measures on the active set
T(x_bar) = {t : |phi_t(x_bar)| <= active_tol}.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np

from .backends import INFEASIBLE, OPTIMAL, solve_lp, solve_program, value_tol
from .config import Options
from .convex_functions import DCPair, as_vector, conjugate_terms, grad, same_function
from .errors import Infeasible, NumericFailure, QCViolated
from .geometry import Polytope

logger = logging.getLogger(__name__)


@dataclass
class SipProblem:
    objective: DCPair
    index_points: List[Any]
    constraint_funcs: List[DCPair]
    box: Optional[Polytope] = None

    def __post_init__(self):
        if not self.index_points:
            raise ValueError("index_points must be nonempty")
        if len(self.index_points) != len(self.constraint_funcs):
            raise ValueError(f"{len(self.index_points)} index points but {len(self.constraint_funcs)} constraint functions")
        h = self.constraint_funcs[0].h
        for k, f in enumerate(self.constraint_funcs):
            if f.dim != self.objective.dim:
                raise ValueError(f"constraint {k} has dimension {f.dim}, objective has {self.objective.dim}")
            if not same_function(f.h, h):
                raise ValueError(f"constraint {k} does not share the control function")

    @property
    def dim(self) -> int:
        return self.objective.dim

    def constraint_values(self, x) -> np.ndarray:
        return np.array([f.evaluate(x) for f in self.constraint_funcs])

    def feasible(self, x, tol: float = 1e-9) -> bool:
        x = as_vector(x, self.dim)
        if self.box is not None and not self.box.contains(x, tol):
            return False
        return bool(np.all(self.constraint_values(x) <= tol))


@dataclass
class DiscreteMeasure:
    """Finitely supported measure: (position in index_points, weight) pairs."""

    weights: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def support(self) -> List[int]:
        return [i for i, w in self.weights if w > 0]

    @property
    def total(self) -> float:
        return float(sum(w for _, w in self.weights))

    def to_dict(self, index_points: Optional[Sequence[Any]] = None) -> dict:
        out = {"weights": [[i, w] for i, w in self.weights], "total": self.total}
        if index_points is not None:
            out["points"] = [_point_list(index_points[i]) for i, _ in self.weights]
        return out


def _point_list(t) -> Any:
    return np.asarray(t, dtype=float).tolist()


@dataclass
class SipResult:
    found: bool
    measure: Optional[DiscreteMeasure]
    active: List[int]
    complementarity: float = 0.0
    qc: bool = True
    gap: float = 0.0
    lipschitz_estimate: Optional[float] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["measure"] = None if self.measure is None else self.measure.to_dict()
        return out


def active_indices(S: SipProblem, xbar, active_tol: float) -> List[int]:
    vals = S.constraint_values(xbar)
    return [k for k, v in enumerate(vals) if abs(v) <= active_tol]


def _constraint_gradients(S: SipProblem, xbar: np.ndarray, active: Sequence[int]) -> np.ndarray:
    if not active:
        return np.zeros((0, S.dim))
    gh = grad(S.constraint_funcs[active[0]].h, xbar)
    return np.vstack([grad(S.constraint_funcs[k].u, xbar) - gh for k in active])


def sip_qc(gradients: np.ndarray, tol: float = 1e-9) -> bool:
    """No probability vector nu on the active set with sum_t nu_t grad phi_t = 0."""
    k = gradients.shape[0]
    if k == 0:
        return True
    # minimize the infinity-norm residual t: -t <= G'nu <= t
    n = gradients.shape[1]
    c = np.zeros(k + 1)
    c[-1] = 1.0
    A_ub = np.vstack([np.hstack([gradients.T, -np.ones((n, 1))]),
                      np.hstack([-gradients.T, -np.ones((n, 1))])])
    res = solve_lp(c, A_ub, np.zeros(2 * n), np.hstack([np.ones((1, k)), np.zeros((1, 1))]), [1.0],
                   bounds=[(0, None)] * (k + 1), label="sip-qc")
    if res.status != OPTIMAL:
        raise NumericFailure(f"sip qualification LP ended with status {res.status}", status=res.status)
    return res.fun > tol


def sip_check_local(S: SipProblem, xbar, opts: Optional[Options] = None) -> SipResult:
    """Multiplier measure mu >= 0 on T(x_bar) with -sum_t mu_t grad phi_t(x_bar) in d^phi(x_bar).

    Raises QCViolated when the qualification fails on the active set.
    """
    opts = opts or Options()
    xbar = as_vector(xbar, S.dim)
    if not S.feasible(xbar, opts.active_tol):
        raise Infeasible(f"x={xbar.tolist()} violates a constraint")
    active = active_indices(S, xbar, opts.active_tol)
    G = _constraint_gradients(S, xbar, active)
    if not sip_qc(G, opts.tol):
        raise QCViolated(f"the active gradients at x={xbar.tolist()} admit a zero convex combination")
    u = S.objective.u
    can = u.canonical()
    gh = grad(S.objective.h, xbar)
    s = cp.Variable(S.dim, name="objective_subgradient")
    cons = []
    if active:
        mu = cp.Variable(len(active), nonneg=True, name="measure")
        cons.append(s == gh - G.T @ mu)
    else:
        mu = None
        cons.append(s == gh)
    cost, conj_cons = conjugate_terms(can, s, 1.0, "sip")
    cons.extend(conj_cons)
    gap = cost + u.evaluate(xbar) - s @ xbar
    problem = cp.Problem(cp.Minimize(gap), cons)
    status = solve_program(problem, "sip-multiplier", linear=can.is_polyhedral)
    lipschitz = sip_lipschitz_estimate(S, xbar, opts=opts)
    if status == INFEASIBLE or problem.value > value_tol(opts.tol, can.is_polyhedral):
        value = np.inf if status == INFEASIBLE else float(problem.value)
        logger.info(f"sip: no multiplier at x={xbar.tolist()} (gap {value:.3g})")
        return SipResult(False, None, active, gap=value, lipschitz_estimate=lipschitz)
    weights = [] if mu is None else [(k, max(0.0, float(w))) for k, w in zip(active, mu.value)]
    measure = DiscreteMeasure(weights)
    vals = S.constraint_values(xbar)
    comp = float(sum(w * vals[k] for k, w in weights))
    return SipResult(True, measure, active, comp, True, float(problem.value), lipschitz)


def sip_lipschitz_estimate(S: SipProblem, xbar, radius: float = 1e-2, samples: int = 64,
                           opts: Optional[Options] = None) -> float:
    """max over t and sampled pairs in the radius ball of |phi_t(y) - phi_t(z)| / |y - z|."""
    opts = opts or Options()
    rng = np.random.default_rng(opts.seed)
    xbar = as_vector(xbar, S.dim)
    Y = xbar + radius * rng.uniform(-1.0, 1.0, size=(samples, S.dim))
    Z = xbar + radius * rng.uniform(-1.0, 1.0, size=(samples, S.dim))
    dist = np.linalg.norm(Y - Z, axis=1)
    keep = dist > 1e-12
    best = 0.0
    for f in S.constraint_funcs:
        fy = f.u.canonical().evaluate_many(Y[keep]) - f.h.canonical().evaluate_many(Y[keep])
        fz = f.u.canonical().evaluate_many(Z[keep]) - f.h.canonical().evaluate_many(Z[keep])
        ok = np.isfinite(fy) & np.isfinite(fz)
        if np.any(ok):
            best = max(best, float(np.max(np.abs(fy[ok] - fz[ok]) / dist[keep][ok])))
    return best


def sip_multiplier_stability(S: SipProblem, refined: SipProblem, xbar,
                             opts: Optional[Options] = None) -> Dict[str, Any]:
    """Compare multiplier measures on two discretizations (reported only)."""
    coarse = sip_check_local(S, xbar, opts)
    fine = sip_check_local(refined, xbar, opts)
    out: Dict[str, Any] = {"coarse_found": coarse.found, "fine_found": fine.found}
    if coarse.found and fine.found:
        def moment(result: SipResult, problem: SipProblem) -> np.ndarray:
            total = result.measure.total
            if total <= 0:
                return np.zeros(np.size(problem.index_points[0]))
            return sum(w * np.asarray(problem.index_points[k], dtype=float)
                       for k, w in result.measure.weights) / total
        out["total_mass"] = [coarse.measure.total, fine.measure.total]
        out["mass_difference"] = abs(coarse.measure.total - fine.measure.total)
        out["barycenter_shift"] = float(np.linalg.norm(np.atleast_1d(moment(coarse, S) - moment(fine, refined))))
    logger.info(f"sip multiplier stability: {out}")
    return out
