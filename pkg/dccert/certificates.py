"""
Optimality certificates for the set-constrained DC program

    minimize  phi(x)   subject to  Phi(x) in C,  x in Q

with phi = u - h and Phi sharing the control h, C a polytope with z0 in its
interior and Q an optional polytope.

Global test: x_bar is optimal iff for every eta >= 0

    eps_eta h(x_bar)  inside  eps_eta psi(x_bar),
    psi = max(phi + h - phi(x_bar), G_1, ..., G_K) (+ indicator of Q),
    G_k = <lam_k, Phi> + h - <lam_k, z0> - 1,

lam_k running over the vertices of the dual slope of C at z0. Each
eta-subdifferential of psi is decided exactly by one GapProgram solve, whose
optimal weights and piece gaps are the multipliers (alpha, lam, eta1, eta2,
eta3) of the certificate.

Local tests (h differentiable at x_bar) use the same engine with exact
subdifferentials: pieces u and <lam_k, Phi> + h over the equality face of
the dual slope, each shifted by the gradient of its control at x_bar.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import Options
from .convex_functions import (ConvexFunc, DCPair, GapProgram, Quadratic, SupportProgram, as_vector,
                               eps_subdiff_vrep, grad, in_eps_subdiff, linear_combination,
                               subgradient)
from .dc_calculus import VectorMap, coderivative_contains, common_control
from .errors import (Infeasible, InfiniteValue, NotDifferentiable, NotDifferentiableControl,
                     UnboundedSet)
from .geometry import Polytope, dual_slope, eps_normal_set_contains
from .workers import map_parallel

logger = logging.getLogger(__name__)

HOLDS = "holds"
FAILS = "fails"
NOT_FOUND = "not_found_at_resolution"
LOCAL_MIN = "local_min"
NOT_CERTIFIED = "not_certified"
OPTIMAL = "optimal"
UNDECIDED = "undecided"

# Weights below this count as zero when reading multipliers
WEIGHT_TOL = 1e-10

ASSUMPTIONS = [
    "finite-dimensional: continuity hypotheses on h and the scalarizations hold automatically",
    "constraint and abstract sets are polytopes",
]


@dataclass
class SetConstraint:
    """Phi(x) in C with z0 in int C."""

    Phi: VectorMap
    C: Polytope
    z0: np.ndarray

    def __post_init__(self):
        self.z0 = as_vector(self.z0, self.Phi.m)
        if self.C.dim != self.Phi.m:
            raise ValueError(f"C has dimension {self.C.dim}, Phi has {self.Phi.m} components")
        self._slope = None

    def with_map(self, Phi: VectorMap) -> "SetConstraint":
        return SetConstraint(Phi, self.C, self.z0)

    @property
    def slope(self) -> Polytope:
        """Dual slope (C - z0)°; NotInterior when z0 is not interior to C."""
        if self._slope is None:
            self._slope = dual_slope(self.C, self.z0)
        return self._slope

    @property
    def dual_vertices(self) -> np.ndarray:
        return self.slope.vertices

    def offset(self, lam) -> float:
        """Constant c with G_lam = <lam, Phi> + h + c."""
        return -float(np.asarray(lam) @ self.z0) - 1.0

    def feasible(self, x, tol: float = 1e-9) -> bool:
        z = self.Phi.evaluate(x)
        return bool(np.all(np.isfinite(z))) and self.C.contains(z, tol)

    def value(self, x) -> float:
        """f(x) = max_k <lam_k, Phi(x) - z0> - 1; feasible iff <= 0."""
        z = self.Phi.evaluate(x)
        if not np.all(np.isfinite(z)):
            return np.inf
        return float(np.max(self.slope.vertices @ (z - self.z0))) - 1.0


@dataclass
class Problem:
    """DC objective with one constraint and an optional abstract set Q.

    Set and cone constraints are rewritten so that the objective and the
    constraint map carry the same control object (see common_control).
    """

    objective: DCPair
    constraint: Any
    Q: Optional[Polytope] = None
    name: str = ""

    def __post_init__(self):
        Phi = getattr(self.constraint, "Phi", None)
        if Phi is not None and Phi.n != self.objective.dim:
            raise ValueError(f"objective has dimension {self.objective.dim}, constraint map has {Phi.n}")
        if self.Q is not None and self.Q.dim != self.objective.dim:
            raise ValueError(f"Q has dimension {self.Q.dim}, problem has {self.objective.dim}")
        if Phi is not None and hasattr(self.constraint, "with_map"):
            objective, shared = common_control(self.objective, Phi)
            if shared is not Phi:
                self.objective = objective
                self.constraint = self.constraint.with_map(shared)

    @property
    def h(self) -> ConvexFunc:
        return self.objective.h

    @property
    def dim(self) -> int:
        return self.objective.dim

    def feasible(self, x, tol: float = 1e-9) -> bool:
        x = as_vector(x, self.dim)
        if self.Q is not None and not self.Q.contains(x, tol):
            return False
        return self.constraint.feasible(x, tol)

    def require_feasible(self, x) -> np.ndarray:
        x = as_vector(x, self.dim)
        if not self.feasible(x):
            raise Infeasible(f"x={x.tolist()} is not feasible")
        return x


@dataclass
class Witness:
    """Multipliers of one tested point x* in eps_eta h(x_bar).

    x* = alpha1 * parts[0] + alpha2 * parts[1] + parts[2] with
    parts[0] in eps_eta1 (phi + h), parts[1] in eps_eta2 (<lam, Phi> + h) and
    parts[2] in the eta3-normal set of Q, all at x_bar.
    """

    eta: float
    x_star: List[float]
    alpha: List[float]
    eta1: float
    eta2: float
    eta3: float
    lam: Optional[List[float]]
    parts: List[List[float]]
    slack: float
    normal_eta: Optional[float] = None
    normal_ok: Optional[bool] = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Certificate:
    kind: str
    verdict: str
    witnesses: List[Witness] = field(default_factory=list)
    failure: Optional[Dict[str, Any]] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.verdict in (HOLDS, LOCAL_MIN, OPTIMAL)

    @property
    def min_alpha1(self) -> Optional[float]:
        if not self.witnesses:
            return None
        return min(w.alpha[0] for w in self.witnesses)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "failure": self.failure,
            "min_alpha1": self.min_alpha1,
            "witnesses": [w.to_dict() for w in self.witnesses],
            "meta": self.meta,
        }


# ---- improvement function ----

@dataclass
class Improvement:
    """psi = max(psi1, psi2) with psi1 = phi + h - level and psi2 = f + h = max_k G_k."""

    psi1: ConvexFunc
    pieces: List[ConvexFunc]
    lams: np.ndarray
    level: float
    h: ConvexFunc

    @property
    def psi2_pieces(self) -> List[ConvexFunc]:
        return self.pieces

    def psi2(self, x) -> float:
        return max(G.evaluate(x) for G in self.pieces)

    def f(self, x) -> float:
        """The constraint function f = psi2 - h; feasible iff f <= 0."""
        return self.psi2(x) - self.h.evaluate(x)

    def psi(self, x) -> float:
        return max(self.psi1.evaluate(x), self.psi2(x))

    def reformulated_value(self, x) -> float:
        """psi(x) - h(x); its minimum is 0 when level is the optimal value."""
        return self.psi(x) - self.h.evaluate(x)

    def all_pieces(self) -> List[ConvexFunc]:
        return [self.psi1] + self.pieces


def _constant(n: int, c: float) -> Quadratic:
    return Quadratic(np.zeros((n, n)), np.zeros(n), c)


def improvement_objective(P: Problem, xbar=None, level: Optional[float] = None) -> Improvement:
    """Improvement function of P at level alpha = phi(x_bar) unless given."""
    con = P.constraint
    if not hasattr(con, "dual_vertices"):
        raise TypeError(f"no improvement function for {type(con).__name__}")
    n = P.dim
    if level is None:
        if xbar is None:
            raise ValueError("give x_bar or a level")
        level = P.objective.evaluate(xbar)
    if not np.isfinite(level):
        raise InfiniteValue(f"improvement level is not finite ({level})")
    lams = con.dual_vertices
    psi1 = linear_combination([(1.0, P.objective.u), (1.0, _constant(n, -float(level)))])
    pieces = [con.Phi.scalarization(lam, extra=_constant(n, con.offset(lam))) for lam in lams]
    return Improvement(psi1, pieces, lams, float(level), P.h)


# ---- global certificates ----

def _breakpoints(f: ConvexFunc, x: np.ndarray) -> List[float]:
    can = f.canonical()
    if not can.A.shape[0]:
        return []
    vals = can.A @ x + can.b
    return (np.max(vals) - vals).tolist()


def global_schedule(P: Problem, xbar: np.ndarray, imp: Improvement, opts: Options) -> np.ndarray:
    """Uniform eta grid on [0, eta_max] plus the level and piece gaps at x_bar."""
    hx = P.h.evaluate(xbar)
    eta_max = opts.eta_max if opts.eta_max is not None else \
        10.0 * (1.0 + abs(P.objective.evaluate(xbar)) + abs(hx))
    breaks = _breakpoints(P.h, xbar)
    breaks += [hx - G.evaluate(xbar) for G in imp.pieces]
    for f in imp.all_pieces():
        breaks += _breakpoints(f, xbar)
    breaks = [e for e in breaks if 0.0 <= e <= eta_max]
    return np.unique(np.concatenate([np.linspace(0.0, eta_max, opts.eta_points), breaks]))


def _test_points(h: ConvexFunc, x: np.ndarray, eta: float, opts: Options) -> Tuple[np.ndarray, bool]:
    """Vertices of eps_eta h(x) (exact) or support points in sampled directions."""
    if h.is_polyhedral:
        try:
            return eps_subdiff_vrep(h, x, eta).vertices, True
        except UnboundedSet:
            logger.warning(f"eps_eta h(x) is unbounded at eta={eta:g}; sampling support points")
    rng = np.random.default_rng(opts.seed)
    support = SupportProgram(h, x)
    dirs = np.vstack([np.eye(h.dim), -np.eye(h.dim), rng.normal(size=(opts.boundary_samples, h.dim))])
    pts = []
    for d in dirs:
        try:
            pts.append(support.point(d, eta))
        except UnboundedSet:
            continue
    return (np.vstack(pts) if pts else np.zeros((0, h.dim))), False


def _read_witness(res, eta: float, xs: np.ndarray, imp: Improvement, xbar: np.ndarray,
                  P: Problem) -> Witness:
    w = res.weights
    alpha1 = float(w[0])
    alpha2 = float(np.sum(w[1:]))
    n = P.dim
    if alpha1 > WEIGHT_TOL:
        x1 = res.parts[0] / alpha1
        eta1 = float(res.piece_gaps[0] / alpha1)
    else:
        x1, eta1 = subgradient(imp.psi1, xbar), 0.0
    lam = None
    if alpha2 > WEIGHT_TOL:
        lam = (w[1:] @ imp.lams) / alpha2
        x2 = np.sum(res.parts[1:], axis=0) / alpha2
        eta2 = float(np.sum(res.piece_gaps[1:]) / alpha2)
    else:
        x2, eta2 = np.zeros(n), 0.0
    witness = Witness(float(eta), xs.tolist(), [alpha1, alpha2], eta1, eta2, float(res.domain_gap),
                      None if lam is None else lam.tolist(),
                      [x1.tolist(), x2.tolist(), res.domain_part.tolist()], float(eta - res.value))
    if lam is not None and isinstance(P.constraint, SetConstraint):
        con = P.constraint
        z = con.Phi.evaluate(xbar)
        normal_eta = max(0.0, 1.0 + float(lam @ (con.z0 - z)))
        witness.normal_eta = normal_eta
        witness.normal_ok = eps_normal_set_contains(con.C, z, normal_eta, lam, tol=1e-7)
    return witness


def _check_eta(P: Problem, xbar: np.ndarray, imp: Improvement, eta: float, opts: Options,
               maximize_alpha1: bool) -> Dict[str, Any]:
    points, exact = _test_points(P.h, xbar, eta, opts)
    hx = P.h.evaluate(xbar)
    program = GapProgram(imp.all_pieces(), xbar, levels=np.full(len(imp.pieces) + 1, hx), domain=P.Q)
    tol = program.tolerance(opts.tol)
    out = {"eta": float(eta), "exact": exact, "witnesses": [], "failure": None, "inaccurate": False}
    for xs in points:
        res = program.solve(xs)
        if not res.accurate:
            out["inaccurate"] = True
        if res.value > eta + tol:
            if res.accurate:
                out["failure"] = {"eta": float(eta), "x_star": xs.tolist(), "gap": float(res.value)}
                logger.debug(f"inclusion refuted at eta={eta:g}, x*={xs.tolist()}, gap={res.value:.6g}")
                return out
            continue
        if maximize_alpha1:
            best = program.max_weight(xs, 0, eta + tol)
            if np.isfinite(best.value):
                res = best
        out["witnesses"].append(_read_witness(res, eta, xs, imp, xbar, P))
    return out


def _global(P: Problem, xbar, opts: Optional[Options], schedule: Optional[Sequence[float]],
            kind: str, maximize_alpha1: bool = True) -> Certificate:
    opts = opts or Options()
    xbar = P.require_feasible(xbar)
    imp = improvement_objective(P, xbar)
    etas = np.asarray(schedule, dtype=float) if schedule is not None else global_schedule(P, xbar, imp, opts)
    results = map_parallel(lambda e: _check_eta(P, xbar, imp, float(e), opts, maximize_alpha1),
                           etas, opts.threads)
    witnesses = [w for r in results for w in r["witnesses"]]
    meta = {
        "schedule": [float(e) for e in etas],
        "tol": opts.tol,
        "exact_test_points": all(r["exact"] for r in results),
        "assumptions": ASSUMPTIONS,
        "value": P.objective.evaluate(xbar),
    }
    failures = [r["failure"] for r in results if r["failure"] is not None]
    if failures:
        logger.info(f"{kind}: inclusion fails at eta={failures[0]['eta']:g}")
        return Certificate(kind, FAILS, witnesses, failures[0], meta)
    if any(r["inaccurate"] for r in results):
        return Certificate(kind, NOT_FOUND, witnesses, None, meta)
    cert = Certificate(kind, HOLDS, witnesses, None, meta)
    floor = opts.alpha1_floor
    cert.meta["all_alpha1_positive"] = bool(witnesses) and cert.min_alpha1 >= floor
    logger.info(f"{kind}: inclusion holds on {len(etas)} eta values, min alpha1 {cert.min_alpha1}")
    return cert


def check_global(P: Problem, xbar, opts: Optional[Options] = None,
                 schedule: Optional[Sequence[float]] = None) -> Certificate:
    """Global optimality test of x_bar on the eta schedule."""
    if P.Q is not None:
        return check_global_with_q(P, xbar, opts, schedule)
    return _global(P, xbar, opts, schedule, "global")


def check_global_with_q(P: Problem, xbar, opts: Optional[Options] = None,
                        schedule: Optional[Sequence[float]] = None) -> Certificate:
    """Global test with the eta3-normal set of Q added to the witness inclusion."""
    if P.Q is None:
        raise ValueError("problem has no abstract set Q")
    return _global(P, xbar, opts, schedule, "global_with_q")


def check_global_sufficient(P: Problem, xbar, eps0: float, opts: Optional[Options] = None,
                            schedule: Optional[Sequence[float]] = None) -> Certificate:
    """Sufficient test: the inclusion holds with witnesses whose alpha1 >= eps0."""
    if eps0 <= 0:
        raise ValueError(f"eps0 must be > 0, got {eps0}")
    cert = _global(P, xbar, opts, schedule, "global_sufficient", maximize_alpha1=True)
    if cert.verdict == HOLDS and cert.min_alpha1 is not None and cert.min_alpha1 >= eps0 - 1e-9:
        cert.verdict = OPTIMAL
    elif cert.verdict == HOLDS:
        cert.verdict = UNDECIDED
    cert.meta["eps0"] = eps0
    return cert


def verify_witness(P: Problem, xbar, witness: Witness, tol: float = 1e-6) -> bool:
    """Re-check the scalar budget and the three memberships of a global witness."""
    con = P.constraint
    xbar = as_vector(xbar, P.dim)
    alpha1, alpha2 = witness.alpha
    if min(alpha1, alpha2) < -tol or abs(alpha1 + alpha2 - 1.0) > tol:
        return False
    x1, x2, x3 = (np.asarray(p, dtype=float) for p in witness.parts)
    z = con.Phi.evaluate(xbar)
    budget = alpha1 * witness.eta1 + witness.eta3
    if alpha2 > WEIGHT_TOL:
        lam = np.asarray(witness.lam, dtype=float)
        budget += alpha2 * (witness.eta2 - float(lam @ z) - con.offset(lam))
    if budget > witness.eta + tol:
        return False
    if np.linalg.norm(alpha1 * x1 + alpha2 * x2 + x3 - np.asarray(witness.x_star)) > tol * (1.0 + np.linalg.norm(x3)):
        return False
    if alpha1 > WEIGHT_TOL and not in_eps_subdiff(P.objective.u, xbar, x1, witness.eta1, tol):
        return False
    if alpha2 > WEIGHT_TOL and not in_eps_subdiff(con.Phi.scalarization(lam), xbar, x2, witness.eta2, tol):
        return False
    if P.Q is not None:
        return eps_normal_set_contains(P.Q, xbar, witness.eta3, x3, tol)
    return bool(np.linalg.norm(x3) <= tol)


@dataclass
class ConverseReport:
    """Grid points y in dom dh: x* in dh(y) must lie in eps_eta psi(x_bar) with
    eta = h(x_bar) - h(y) - <x*, x_bar - y>. eta_bar is the largest such eta."""

    points: int
    failures: List[Dict[str, Any]]
    eta_bar_estimate: float
    estimate: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def check_converse(P: Problem, xbar, box: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
                   radius: float = 2.0, opts: Optional[Options] = None) -> ConverseReport:
    opts = opts or Options()
    xbar = P.require_feasible(xbar)
    imp = improvement_objective(P, xbar)
    if box is None:
        if P.Q is not None:
            V = P.Q.vertices
            box = (V.min(axis=0), V.max(axis=0))
        else:
            box = (xbar - radius, xbar + radius)
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    axes = [np.linspace(lo[i], hi[i], opts.validation_points) for i in range(P.dim)]
    grid = np.column_stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")])
    hx = P.h.evaluate(xbar)
    program = GapProgram(imp.all_pieces(), xbar, levels=np.full(len(imp.pieces) + 1, hx), domain=P.Q)
    tol = program.tolerance(opts.tol)
    failures, eta_bar, count = [], 0.0, 0
    for y in grid:
        if not P.feasible(y) or not np.isfinite(P.h.evaluate(y)):
            continue
        xs = subgradient(P.h, y)
        eta = max(0.0, hx - P.h.evaluate(y) - float(xs @ (xbar - y)))
        eta_bar = max(eta_bar, eta)
        count += 1
        res = program.solve(xs)
        if res.value > eta + tol:
            failures.append({"y": y.tolist(), "x_star": xs.tolist(), "eta": eta, "gap": float(res.value)})
    logger.info(f"converse check: {count} points, {len(failures)} failures, eta_bar ~ {eta_bar:.6g}")
    return ConverseReport(count, failures, eta_bar)


# ---- local certificates ----

@dataclass
class LocalMultipliers:
    """0 in alpha1 d^phi(x_bar) + alpha2 D*Phi(x_bar)(lam) (+ N_Q(x_bar))."""

    found: bool
    alpha: Optional[List[float]] = None
    lam: Optional[List[float]] = None
    complementarity: Optional[float] = None
    normal_ok: Optional[bool] = None
    qc: Optional[bool] = None
    cone_multiplier: Optional[float] = None
    face_size: int = 0
    inaccurate: bool = False
    pointed_base: Optional[bool] = None

    def to_dict(self) -> dict:
        return asdict(self)


def equality_face(con, xbar, tol: float) -> np.ndarray:
    """Dual vertices whose piece G_lam is active at x_bar: <lam, Phi(x_bar)> + offset(lam) = 0.

    Set constraint: <lam, Phi(x_bar) - z0> = 1. Cone constraint: <lam, Phi(x_bar)> = 0.
    """
    z = con.Phi.finite_value(xbar)
    V = con.dual_vertices
    vals = np.array([float(lam @ z) + con.offset(lam) for lam in V])
    return V[vals >= -tol * (1.0 + np.abs(V @ z))]


def _face_pieces(con, face: np.ndarray) -> List[ConvexFunc]:
    return [con.Phi.scalarization(lam) for lam in face]


def _control_gradient(h: ConvexFunc, xbar: np.ndarray) -> np.ndarray:
    try:
        return grad(h, xbar)
    except NotDifferentiable as exc:
        raise NotDifferentiableControl(f"h is not differentiable at x={xbar.tolist()}") from exc


def check_qc(P: Problem, xbar, opts: Optional[Options] = None) -> bool:
    """0 not in the union of D*Phi(x_bar)(lam) (+ N_Q(x_bar)) over the equality face."""
    opts = opts or Options()
    con = P.constraint
    xbar = as_vector(xbar, P.dim)
    face = equality_face(con, xbar, opts.active_tol)
    if face.shape[0] == 0:
        return True
    try:
        gh = grad(con.Phi.h, xbar)
    except NotDifferentiable:
        for lam in face:
            if coderivative_contains(con.Phi, xbar, lam, np.zeros(P.dim), opts.tol):
                return False
        return True
    program = GapProgram(_face_pieces(con, face), xbar, domain=P.Q, shifts=np.tile(gh, (face.shape[0], 1)))
    res = program.solve(np.zeros(P.dim))
    return not res.value <= program.tolerance(opts.tol)


def check_local_necessary(P: Problem, xbar, opts: Optional[Options] = None) -> LocalMultipliers:
    """Fritz John multipliers at x_bar; alpha1 is maximized, and under the
    qualification condition the cone multiplier alpha2 / alpha1 is reported."""
    opts = opts or Options()
    xbar = P.require_feasible(xbar)
    con = P.constraint
    face = equality_face(con, xbar, opts.active_tol)
    shifts = _control_gradient(P.h, xbar)[None, :]
    if face.shape[0]:
        shifts = np.vstack([shifts, np.tile(_control_gradient(con.Phi.h, xbar), (face.shape[0], 1))])
    pieces = [P.objective.u] + _face_pieces(con, face)
    program = GapProgram(pieces, xbar, domain=P.Q, shifts=shifts)
    tol = program.tolerance(opts.tol)
    target = np.zeros(P.dim)
    res = program.solve(target)
    if res.value > tol:
        return LocalMultipliers(False, face_size=int(face.shape[0]), inaccurate=not res.accurate)
    best = program.max_weight(target, 0, tol)
    if np.isfinite(best.value):
        res = best
    w = res.weights
    alpha1, alpha2 = float(w[0]), float(np.sum(w[1:]))
    out = LocalMultipliers(True, [alpha1, alpha2], face_size=int(face.shape[0]),
                           inaccurate=not res.accurate)
    if alpha2 > WEIGHT_TOL:
        lam = (w[1:] @ face) / alpha2
        z = con.Phi.evaluate(xbar)
        out.lam = lam.tolist()
        out.complementarity = -alpha2 * (float(lam @ z) + con.offset(lam))
        if isinstance(con, SetConstraint):
            out.normal_ok = eps_normal_set_contains(con.C, z, 0.0, lam, tol=1e-7)
    else:
        out.complementarity = 0.0
    out.qc = check_qc(P, xbar, opts)
    if out.qc and alpha1 > WEIGHT_TOL:
        out.cone_multiplier = alpha2 / alpha1
    return out


@dataclass
class LocalSufficiency:
    verdict: str
    inclusion: Certificate
    intersection_empty: bool

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "inclusion": self.inclusion.to_dict(),
                "intersection_empty": self.intersection_empty}


def control_intersection_empty(P: Problem, xbar, opts: Optional[Options] = None) -> bool:
    """dh(x_bar) has no point in common with d(<lam, Phi> + h)(x_bar) for lam in the equality face."""
    opts = opts or Options()
    con = P.constraint
    xbar = as_vector(xbar, P.dim)
    face = equality_face(con, xbar, opts.active_tol)
    if face.shape[0] == 0:
        return True
    program = GapProgram(_face_pieces(con, face), xbar, source=P.h)
    res = program.solve()
    return not res.value <= program.tolerance(opts.tol)


def check_local_sufficient(P: Problem, xbar, opts: Optional[Options] = None) -> LocalSufficiency:
    """Inclusion on the small eta schedule plus the control intersection condition."""
    opts = opts or Options()
    inclusion = _global(P, xbar, opts, opts.small_etas, "local_inclusion")
    empty = control_intersection_empty(P, xbar, opts)
    verdict = LOCAL_MIN if inclusion.verdict == HOLDS and empty else NOT_CERTIFIED
    logger.info(f"local sufficiency at x={np.ravel(xbar).tolist()}: {verdict}")
    return LocalSufficiency(verdict, inclusion, empty)
