"""
Cone-constrained DC programs

    minimize phi(x)  subject to  Phi(x) in -K  (and x in Q)

for a polyhedral cone K. The positive polar K+ is replaced by a compact base
B (cone(B) = K+, 0 not in B), so that

    Phi(x) in -K   iff   max over vertices lam of B of <lam, Phi(x)> <= 0

and the improvement function pieces become G_lam = <lam, Phi> + h with no
offset. All certificate checks then run through the set-constraint
machinery in certificates.py with ConeConstraint supplying dual_vertices and
offset().

When K has empty interior, K+ is not pointed and B is K+ cut by the unit
cross-polytope, which contains 0. Every check still runs: the necessary
tests then hold trivially with alpha1 = 0, so only witnesses with alpha1 > 0
(check_global_sufficient) and the control intersection test carry
information. Results are flagged with pointed_base = False.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .backends import OPTIMAL, solve_lp
from .certificates import (Certificate, LocalMultipliers, LocalSufficiency, Problem, SetConstraint,
                           _global, check_local_necessary, check_local_sufficient)
from .config import DEFAULT_TOL, Options
from .convex_functions import Quadratic, as_vector, linear_combination
from .dc_calculus import VectorMap
from .errors import DegenerateCone, NotRepresentable
from .geometry import PolyCone, Polytope, positive_polar

logger = logging.getLogger(__name__)


@dataclass
class ConeBase:
    """Compact base B of K+; pointed is False when K has empty interior and B
    is the cross-polytope slice of K+ (which then contains 0)."""

    K: PolyCone
    Kplus: PolyCone
    B: Polytope
    e: Optional[np.ndarray]
    pointed: bool

    def to_dict(self) -> dict:
        return {
            "K": self.K.to_dict(),
            "base_vertices": self.B.vertices.tolist(),
            "e": None if self.e is None else self.e.tolist(),
            "pointed": self.pointed,
        }


def _interior_direction(K: PolyCone, tol: float) -> Optional[np.ndarray]:
    """Chebyshev-center direction of K in the unit box, or None if int K is empty."""
    A = K.hrep
    m = K.dim
    if A.shape[0] == 0:
        return np.ones(m)
    norms = np.linalg.norm(A, axis=1)
    keep = norms > tol
    A = A[keep] / norms[keep, None]
    if A.shape[0] == 0:
        return np.ones(m)
    A_ub = np.hstack([A, np.ones((A.shape[0], 1))])
    c = np.zeros(m + 1)
    c[-1] = -1.0
    res = solve_lp(c, A_ub, np.zeros(A.shape[0]), bounds=[(-1.0, 1.0)] * m + [(0.0, 1.0)],
                   label="cone-interior")
    if res.status != OPTIMAL or res.x[-1] <= tol:
        return None
    return res.x[:m]


def make_base(K: PolyCone, e=None, tol: float = DEFAULT_TOL) -> ConeBase:
    """B = K+ ∩ {<e, lam> = 1} for e interior to K, else the cross-polytope slice."""
    Kplus = positive_polar(K)
    if Kplus.is_trivial():
        raise DegenerateCone("K+ = {0}: the cone constraint is vacuous")
    if e is None:
        e = _interior_direction(K, tol)
    else:
        e = as_vector(e, K.dim)
        if not K.contains(e) or _interior_direction(K, tol) is None:
            raise ValueError(f"e={e.tolist()} is not interior to K")
    if e is not None:
        G = Kplus.generators
        G = G[np.linalg.norm(G, axis=1) > tol]
        scale = G @ e
        if np.any(scale <= tol):
            raise ValueError(f"e={e.tolist()} is not interior to K")
        B = Polytope.from_vertices(G / scale[:, None])
        return ConeBase(K, Kplus, B, e, True)
    logger.warning("K has empty interior: K+ is not pointed, using its cross-polytope slice")
    m = K.dim
    signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * m, indexing="ij")).reshape(m, -1).T
    A = np.vstack([Kplus.hrep, signs])
    b = np.concatenate([np.zeros(Kplus.hrep.shape[0]), np.ones(signs.shape[0])])
    return ConeBase(K, Kplus, Polytope.from_hrep(A, b), None, False)


class ConeConstraint:
    """Phi(x) in -K with a compact base of K+."""

    def __init__(self, Phi: VectorMap, K: PolyCone, base: Optional[ConeBase] = None, e=None):
        if K.dim != Phi.m:
            raise ValueError(f"K has dimension {K.dim}, Phi has {Phi.m} components")
        self.Phi = Phi
        self.K = K
        self.base = base if base is not None else make_base(K, e)

    def with_map(self, Phi: VectorMap) -> "ConeConstraint":
        return ConeConstraint(Phi, self.K, base=self.base)

    @property
    def dual_vertices(self) -> np.ndarray:
        return self.base.B.vertices

    def offset(self, lam) -> float:
        return 0.0

    def feasible(self, x, tol: float = 1e-9) -> bool:
        z = self.Phi.evaluate(x)
        return bool(np.all(np.isfinite(z))) and self.K.contains(-z, tol)

    def value(self, x) -> float:
        """max over base vertices of <lam, Phi(x)>; feasible iff <= 0."""
        z = self.Phi.evaluate(x)
        if not np.all(np.isfinite(z)):
            return np.inf
        return float(np.max(self.dual_vertices @ z))


def cone_feasible(base: ConeBase, Phi: VectorMap, x, tol: float = 1e-9) -> bool:
    """Phi(x) in -K through the base: every base vertex gives <lam, Phi(x)> <= 0."""
    z = Phi.evaluate(x)
    if not np.all(np.isfinite(z)):
        return False
    return bool(np.max(base.B.vertices @ z) <= tol * (1.0 + np.linalg.norm(z)))


def _cone_problem(P: Problem) -> ConeConstraint:
    con = P.constraint
    if not isinstance(con, ConeConstraint):
        raise TypeError("expected a problem with a ConeConstraint")
    if not con.base.pointed:
        logger.warning("K has empty interior: the base of K+ contains 0 and only alpha1 > 0 witnesses certify")
    return con


def check_cone_global(P: Problem, xbar, opts: Optional[Options] = None,
                      schedule: Optional[Sequence[float]] = None) -> Certificate:
    """Global test with the cone scalar condition alpha1 eta1 + alpha2 (eta2 - <lam, Phi(x_bar)>) (+ eta3) <= eta."""
    con = _cone_problem(P)
    cert = _global(P, xbar, opts, schedule, "cone_global" if P.Q is None else "cone_global_with_q")
    cert.meta["pointed_base"] = con.base.pointed
    return cert


def check_cone_local(P: Problem, xbar, opts: Optional[Options] = None) -> LocalMultipliers:
    """Multipliers over the face {lam in B : <lam, Phi(x_bar)> = 0}."""
    con = _cone_problem(P)
    out = check_local_necessary(P, xbar, opts)
    out.pointed_base = con.base.pointed
    return out


def check_cone_local_with_q(P: Problem, xbar, opts: Optional[Options] = None) -> LocalMultipliers:
    """check_cone_local with N_Q(x_bar) in both the multiplier inclusion and the qualification."""
    if P.Q is None:
        raise ValueError("problem has no abstract set Q")
    return check_cone_local(P, xbar, opts)


def check_cone_sufficient(P: Problem, xbar, opts: Optional[Options] = None) -> LocalSufficiency:
    con = _cone_problem(P)
    out = check_local_sufficient(P, xbar, opts)
    out.inclusion.meta["pointed_base"] = con.base.pointed
    return out


def set_as_cone(P: Problem) -> Problem:
    """Rewrite Phi(x) in C = {y : Ay <= b, Aeq y = beq} as A Phi(x) - b in -R^k_+.

    Equality rows become two opposite inequalities. Raises NotRepresentable
    when a row combination <a, Phi> + h is not a supported convex function.
    """
    con = P.constraint
    if not isinstance(con, SetConstraint):
        raise TypeError("set_as_cone needs a SetConstraint")
    A, b = con.C.inequalities_with_equalities()
    Phi = con.Phi
    n = Phi.n
    us = []
    for a, bi in zip(A, b):
        try:
            row = Phi.scalarization(a)
        except NotRepresentable as exc:
            raise NotRepresentable(f"row {a.tolist()} of C gives a non-convex <a, Phi> + h") from exc
        us.append(linear_combination([(1.0, row), (1.0, Quadratic(np.zeros((n, n)), np.zeros(n), -float(bi)))]))
    cone_map = VectorMap(us, Phi.h, Phi.domain)
    cone = ConeConstraint(cone_map, PolyCone.orthant(len(us)))
    return Problem(P.objective, cone, P.Q, name=P.name)
