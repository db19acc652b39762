"""
Subdifferential calculus for DC functions and B-DC vector maps.

A VectorMap Phi = (u_1 - h, ..., u_m - h) shares one control function h, so
every scalarization <lam, Phi> + h = sum_j lam_j u_j + (1 - sum_j lam_j) h is a
linear combination of convex kinds. When that combination is representable
it is convex by construction; otherwise convexity is tested numerically by
midpoint sampling.

Membership tests:

  dc_subdiff_contains           x* + eps_eta h(x) inside eps_{eta+eps} g(x) for all eta
  sup_compact_subdiff_contains  eps-subdifferential of sup over a polytope of scalarizations
  max_rule_contains             eps-subdifferential of max(psi1, psi2)
  coderivative_contains         regular coderivative of Phi in direction lam

The last three reduce to one GapProgram solve each (no alpha or eta grid):
the multiplier weights enter the conic program through the perspective of
the conjugate.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .config import DEFAULT_TOL, Options
from .convex_functions import (ConvexFunc, DCPair, GapProgram, IndicatorPoly, MaxAffine, Quadratic,
                               SupportProgram, as_vector, eps_gap, eps_subdiff_vrep, grad,
                               linear_combination, regular_subdiff_contains, same_function)
from .errors import (InfiniteValue, NotDifferentiable, NotRepresentable, ScheduleTooCoarse,
                     UnboundedSet, ValidationFailed)
from .geometry import Polytope, same_polytope
from .workers import map_parallel

logger = logging.getLogger(__name__)

# Pairs tested exhaustively by the midpoint check up to this many grid points
MIDPOINT_ALL_PAIRS = 400
MIDPOINT_RANDOM_PAIRS = 20000


class VectorMap:
    """Phi = (u_1 - h, ..., u_m - h) with a shared control h.

    Args:
        us: convex functions u_j = Phi_j + h.
        h: the shared control function.
        domain: optional polytope restricting dom Phi.
    """

    def __init__(self, us: Sequence[ConvexFunc], h: ConvexFunc, domain: Optional[Polytope] = None):
        us = list(us)
        if not us:
            raise ValueError("VectorMap needs at least one component")
        for j, u in enumerate(us):
            if u.dim != h.dim:
                raise ValueError(f"component {j} has dimension {u.dim}, control has {h.dim}")
        if domain is not None and domain.dim != h.dim:
            raise ValueError(f"domain has dimension {domain.dim}, map has {h.dim}")
        self.us = us
        self.h = h
        self.domain = domain
        self.n = h.dim
        self.m = len(us)

    @classmethod
    def from_pairs(cls, pairs: Sequence[DCPair], domain: Optional[Polytope] = None) -> "VectorMap":
        """Build from DCPairs that all carry the same control object."""
        pairs = list(pairs)
        h = pairs[0].h
        for j, pair in enumerate(pairs[1:], start=1):
            if pair.h is not h:
                raise ValueError(f"component {j} does not share the control function")
        return cls([p.u for p in pairs], h, domain)

    @classmethod
    def affine(cls, J, offset=None, domain: Optional[Polytope] = None) -> "VectorMap":
        """Phi(x) = Jx + offset with zero control."""
        J = np.atleast_2d(np.asarray(J, dtype=float))
        offset = np.zeros(J.shape[0]) if offset is None else as_vector(offset, J.shape[0])
        us = [MaxAffine.affine(J[j], offset[j]) for j in range(J.shape[0])]
        return cls(us, Quadratic.zero(J.shape[1]), domain)

    @property
    def components(self) -> List[DCPair]:
        return [DCPair(u, self.h) for u in self.us]

    def evaluate(self, x) -> np.ndarray:
        x = as_vector(x, self.n)
        if self.domain is not None and not self.domain.contains(x):
            return np.full(self.m, np.inf)
        hx = self.h.evaluate(x)
        if not np.isfinite(hx):
            return np.full(self.m, np.inf)
        return np.array([u.evaluate(x) - hx for u in self.us])

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def finite_value(self, x) -> np.ndarray:
        z = self.evaluate(x)
        if not np.all(np.isfinite(z)):
            raise InfiniteValue(f"x={as_vector(x).tolist()} is outside dom Phi")
        return z

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """(N, m) values; +inf rows outside the domain."""
        X = np.atleast_2d(X)
        hv = self.h.canonical().evaluate_many(X)
        out = np.column_stack([u.canonical().evaluate_many(X) - hv for u in self.us])
        bad = ~np.isfinite(hv)
        if self.domain is not None:
            A, b, Aeq, beq = self.domain.hrep
            if A.shape[0]:
                bad |= np.any(X @ A.T - b > 1e-9 * (1.0 + np.abs(b)), axis=1)
            if Aeq.shape[0]:
                bad |= np.any(np.abs(X @ Aeq.T - beq) > 1e-9 * (1.0 + np.abs(beq)), axis=1)
        out[bad] = np.inf
        return out

    def scalarization(self, lam, extra: Optional[ConvexFunc] = None, control_weight: float = 1.0) -> ConvexFunc:
        """<lam, Phi> + control_weight * h (+ extra) as a convex function.

        Raises NotRepresentable when the combination is not convex in the
        supported kinds.
        """
        lam = as_vector(lam, self.m)
        terms = [(lam[j], u) for j, u in enumerate(self.us)]
        terms.append((control_weight - float(np.sum(lam)), self.h))
        if extra is not None:
            terms.append((1.0, extra))
        if self.domain is not None:
            terms.append((1.0, IndicatorPoly(self.domain)))
        return linear_combination(terms)

    def jacobian(self, x) -> np.ndarray:
        """(m, n) Jacobian at x; NotDifferentiable when any component is not."""
        gh = grad(self.h, x)
        return np.vstack([grad(u, x) - gh for u in self.us])

    def negated(self) -> "VectorMap":
        """-Phi with the same control; components u'_j = 2h - u_j may be non-convex."""
        return _NegatedMap(self)

    def __repr__(self):
        return f"VectorMap(m={self.m}, n={self.n})"


class _NegatedMap(VectorMap):
    """Evaluation-only view of -Phi used by the B-DC report."""

    def __init__(self, base: VectorMap):
        super().__init__(base.us, base.h, base.domain)
        self.base = base

    def evaluate(self, x) -> np.ndarray:
        return -self.base.evaluate(x)

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        return -self.base.evaluate_many(X)

    def scalarization(self, lam, extra=None, control_weight: float = 1.0) -> ConvexFunc:
        return self.base.scalarization(-as_vector(lam, self.m), extra, control_weight)


def common_control(objective: DCPair, Phi: VectorMap) -> Tuple[DCPair, VectorMap]:
    """Rewrite phi = u - h and Phi = U - g over the one control H = h + g.

    phi = (u + g) - H and Phi_j = (U_j + h) - H keep every value; a zero
    control on either side leaves that side unchanged.
    """
    if objective.dim != Phi.n:
        raise ValueError(f"objective has dimension {objective.dim}, map has {Phi.n}")
    if same_function(objective.h, Phi.h):
        return objective, Phi
    zero = Quadratic.zero(Phi.n)
    obj_zero = same_function(objective.h, zero)
    map_zero = same_function(Phi.h, zero)
    if map_zero:
        H = objective.h
    elif obj_zero:
        H = Phi.h
    else:
        H = linear_combination([(1.0, objective.h), (1.0, Phi.h)])
    u = objective.u if map_zero else linear_combination([(1.0, objective.u), (1.0, Phi.h)])
    us = Phi.us if obj_zero else [linear_combination([(1.0, U), (1.0, objective.h)]) for U in Phi.us]
    logger.debug(f"objective and constraint map rewritten over a common control ({type(H).__name__})")
    return DCPair(u, H), VectorMap(us, H, Phi.domain)


@dataclass
class ActiveSet:
    """eps-active part of C at x: lam in C with <lam, Phi(x)> >= sup_C - eps."""

    base: Polytope
    x: np.ndarray
    eps: float
    face: Polytope
    value: float


# ---- B-DC validation ----

@dataclass
class BdcVertexCheck:
    vertex: List[float]
    exact: bool
    violation: float


@dataclass
class BdcReport:
    passed: bool
    worst_violation: float
    worst_vertex: Optional[List[float]]
    vertices: List[BdcVertexCheck] = field(default_factory=list)
    domain_convex: bool = True
    sum_closure: bool = True
    negation_symmetric: Optional[bool] = None
    control_domain_violations: int = 0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_violation": self.worst_violation,
            "worst_vertex": self.worst_vertex,
            "vertices": [vars(v) for v in self.vertices],
            "domain_convex": self.domain_convex,
            "sum_closure": self.sum_closure,
            "negation_symmetric": self.negation_symmetric,
            "control_domain_violations": self.control_domain_violations,
        }


def default_grid(Phi: VectorMap, points: int, radius: float = 2.0) -> np.ndarray:
    """Uniform grid over the domain's bounding box, or [-radius, radius]^n."""
    if Phi.domain is not None and not Phi.domain.is_empty():
        V = Phi.domain.vertices
        lo, hi = V.min(axis=0), V.max(axis=0)
    else:
        lo, hi = -radius * np.ones(Phi.n), radius * np.ones(Phi.n)
    per_dim = max(2, int(round(points ** (1.0 / max(1, Phi.n)))) if Phi.n > 2 else points)
    axes = [np.linspace(lo[i], hi[i], per_dim) for i in range(Phi.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _pairs(N: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    if N <= MIDPOINT_ALL_PAIRS:
        i, j = np.triu_indices(N, k=1)
        return i, j
    return rng.integers(0, N, MIDPOINT_RANDOM_PAIRS), rng.integers(0, N, MIDPOINT_RANDOM_PAIRS)


def midpoint_violation(values: Callable[[np.ndarray], np.ndarray], grid: np.ndarray,
                       rng: np.random.Generator) -> float:
    """max f((x+y)/2) - (f(x) + f(y))/2 over grid pairs with finite values."""
    i, j = _pairs(grid.shape[0], rng)
    fx = values(grid[i])
    fy = values(grid[j])
    fm = values(0.5 * (grid[i] + grid[j]))
    ok = np.isfinite(fx) & np.isfinite(fy)
    if not np.any(ok):
        return 0.0
    viol = fm[ok] - 0.5 * (fx[ok] + fy[ok])
    viol = np.where(np.isfinite(viol), viol, np.inf)
    return float(max(0.0, np.max(viol)))


def _scal_values(Phi: VectorMap, lam: np.ndarray, control_weight: float = 1.0):
    def values(X):
        return Phi.evaluate_many(X) @ lam + control_weight * Phi.h.canonical().evaluate_many(X)
    return values


def validate_bdc(Phi: VectorMap, B: Polytope, grid: Optional[np.ndarray] = None,
                 opts: Optional[Options] = None) -> BdcReport:
    """Check <lam, Phi> + h convex for every vertex lam of B.

    Exact when the scalarization is representable in the supported kinds;
    otherwise a midpoint-convexity test over the grid. Also reports the sum
    closure (Phi + Phi with control 2h) and, when B = -B and Phi has full
    domain, whether -Phi is B-DC with the same control.
    """
    opts = opts or Options()
    if B.dim != Phi.m:
        raise ValueError(f"B has dimension {B.dim}, Phi has {Phi.m} components")
    rng = np.random.default_rng(opts.seed)
    grid = default_grid(Phi, opts.validation_points) if grid is None else np.atleast_2d(grid)
    tol = max(opts.tol, 1e-9)

    checks: List[BdcVertexCheck] = []
    for lam in B.vertices:
        try:
            Phi.scalarization(lam)
            checks.append(BdcVertexCheck(lam.tolist(), True, 0.0))
            continue
        except NotRepresentable:
            pass
        viol = midpoint_violation(_scal_values(Phi, lam), grid, rng)
        checks.append(BdcVertexCheck(lam.tolist(), False, viol))
        logger.debug(f"B-DC midpoint check at lam={lam.tolist()}: violation {viol:.3g}")

    worst = max(checks, key=lambda c: c.violation) if checks else None
    worst_violation = worst.violation if worst else 0.0
    passed = worst_violation <= tol

    sum_ok = all(midpoint_violation(_scal_values(Phi, 2.0 * np.asarray(c.vertex), 2.0), grid, rng) <= 2 * tol
                 for c in checks if not c.exact)

    negation = None
    symmetric = same_polytope(B, Polytope.from_vertices(-B.vertices))
    if symmetric and Phi.domain is None:
        neg = Phi.negated()
        negation = all(midpoint_violation(_scal_values(neg, lam), grid, rng) <= tol for lam in B.vertices)

    report = BdcReport(passed, worst_violation, worst.vertex if worst else None, checks,
                       domain_convex=True, sum_closure=bool(sum_ok) and passed,
                       negation_symmetric=negation,
                       control_domain_violations=sum(p.domain_violations(grid) for p in Phi.components))
    if not passed:
        logger.info(f"B-DC validation failed: violation {worst_violation:.3g} at lam={report.worst_vertex}")
    return report


# ---- DC subdifferential ----

def _piece_gaps(f: ConvexFunc, x: np.ndarray) -> List[float]:
    """Gaps f(x) - piece_i(x) of the max-affine pieces: where eps-subdifferentials change shape."""
    can = f.canonical()
    if not can.A.shape[0]:
        return []
    vals = can.A @ x + can.b
    return sorted(set(np.round(np.max(vals) - vals, 12).tolist()))


def default_eta_max(g: ConvexFunc, h: ConvexFunc, x) -> float:
    return 10.0 * (1.0 + abs(g.evaluate(x)) + abs(h.evaluate(x)))


def _crossing_gaps(g: ConvexFunc, h: ConvexFunc, x: np.ndarray, xs: np.ndarray) -> List[float]:
    """Levels eta at which x* + eps_eta h(x) first reaches a slope of g."""
    can = g.canonical()
    if not (can.is_polyhedral and h.is_polyhedral and can.A.shape[0]) or can.G.shape[0] or can.Geq.shape[0]:
        return []
    gaps = [eps_gap(h, x, can.q + a - xs) for a in can.A]
    return [e for e in gaps if np.isfinite(e)]


def eta_schedule(g: ConvexFunc, h: ConvexFunc, x, opts: Options, xs=None) -> np.ndarray:
    """Uniform grid on [0, eta_max] joined with the detected breakpoints.

    Breakpoints are the piece gaps of g and h at x and, given x*, the crossing
    levels of x* + eps_eta h(x) through the slopes of g. They are kept beyond
    eta_max: past the last one the margin only decreases.
    """
    x = as_vector(x, g.dim)
    eta_max = opts.eta_max if opts.eta_max is not None else default_eta_max(g, h, x)
    grid = np.linspace(0.0, eta_max, opts.eta_points)
    breaks = _piece_gaps(g, x) + _piece_gaps(h, x)
    if xs is not None:
        breaks += _crossing_gaps(g, h, x, as_vector(xs, g.dim))
    breaks = [e for e in breaks if e >= 0.0]
    return np.unique(np.concatenate([grid, breaks]))


def _directions(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    eye = np.eye(n)
    extra = rng.normal(size=(max(0, count), n))
    norms = np.linalg.norm(extra, axis=1, keepdims=True)
    extra = extra / np.where(norms > 0, norms, 1.0)
    return np.vstack([eye, -eye, extra])


def eps_subdiff_test_points(h: ConvexFunc, x, eta: float, samples: int, rng: np.random.Generator,
                            support: Optional[SupportProgram] = None) -> Tuple[np.ndarray, bool]:
    """Points of eps_eta h(x) to test: all vertices when h is polyhedral and the
    set is bounded (exact = True), else support points in sampled directions."""
    if h.is_polyhedral:
        try:
            return eps_subdiff_vrep(h, x, eta).vertices, True
        except UnboundedSet:
            logger.warning(f"eps-subdifferential of the control is unbounded at eta={eta:g}; sampling")
    support = support or SupportProgram(h, x)
    pts = []
    for d in _directions(h.dim, samples, rng):
        try:
            pts.append(support.point(d, eta))
        except UnboundedSet:
            continue
    return (np.vstack(pts) if pts else np.zeros((0, h.dim))), False


def dc_margin(g: ConvexFunc, h: ConvexFunc, x, xs, eps: float, eta: float,
              samples: int = 0, rng: Optional[np.random.Generator] = None) -> float:
    """max over tested s in eps_eta h(x) of gap_g(x* + s) - (eta + eps); <= 0 means included."""
    rng = rng or np.random.default_rng(0)
    pts, _ = eps_subdiff_test_points(h, x, eta, samples, rng)
    worst = -np.inf
    for s in pts:
        worst = max(worst, eps_gap(g, x, xs + s) - (eta + eps))
        if worst == np.inf:
            break
    return worst


def dc_subdiff_contains(g: ConvexFunc, h: ConvexFunc, x, xs, eps: float = 0.0,
                        schedule: Optional[Sequence[float]] = None, tol: float = DEFAULT_TOL,
                        opts: Optional[Options] = None) -> bool:
    """x* in the eps-subdifferential of g - h at x.

    Uses the intersection over eta >= 0 of the Minkowski differences
    eps_{eta+eps} g(x) minus eps_eta h(x), checked on the eta schedule. Adjacent
    schedule points with different verdicts emit ScheduleTooCoarse naming the
    first such interval: the schedule locates the breakpoint only to its own
    spacing.
    """
    opts = opts or Options()
    x = as_vector(x, g.dim)
    xs = as_vector(xs, g.dim)
    if not np.isfinite(g.evaluate(x)) or not np.isfinite(h.evaluate(x)):
        raise InfiniteValue(f"g or h is +inf at x={x.tolist()}")
    etas = np.asarray(schedule, dtype=float) if schedule is not None else eta_schedule(g, h, x, opts, xs)
    tol = max(tol, opts.tol)

    def margin(eta: float) -> float:
        rng = np.random.default_rng(opts.seed)
        return dc_margin(g, h, x, xs, eps, float(eta), opts.boundary_samples, rng)

    ok = [m <= tol for m in map_parallel(margin, etas, opts.threads)]
    if all(ok):
        return True
    flips = [k for k in range(len(etas) - 1) if ok[k] != ok[k + 1]]
    if flips:
        k = flips[0]
        warnings.warn(f"verdict flips between eta={etas[k]:g} and eta={etas[k + 1]:g}", ScheduleTooCoarse)
    logger.debug(f"dc_subdiff_contains refuted at eta={etas[ok.index(False)]:g}")
    return False


def regular_subdiff_sum_contains(f: ConvexFunc, g_smooth: ConvexFunc, x, xs, tol: float = DEFAULT_TOL) -> bool:
    """x* in the regular subdifferential of f + g with g differentiable at x."""
    return regular_subdiff_contains(f, x, as_vector(xs, f.dim) - grad(g_smooth, x), tol)


# ---- suprema and max rules ----

def active_index_face(C: Polytope, Phi: VectorMap, x, eps: float) -> ActiveSet:
    """{lam in C : <lam, Phi(x)> >= sup_C <., Phi(x)> - eps} as an exact H-rep."""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    z = Phi.finite_value(x)
    top = C.support(z)
    A, b, Aeq, beq = C.hrep
    face = Polytope.from_hrep(np.vstack([A, -z[None, :]]), np.concatenate([b, [eps - top]]), Aeq, beq)
    return ActiveSet(C, as_vector(x, Phi.n), float(eps), face, float(top))


@dataclass
class SupWitness:
    """lam in C_{eps-eta}(x) with x* in eps_eta(<lam, Phi> + g)(x)."""

    eta: float
    lam: List[float]
    slack: float


def _vertex_scalarizations(Phi: VectorMap, g: ConvexFunc, C: Polytope) -> Tuple[np.ndarray, List[ConvexFunc]]:
    V = C.vertices
    funcs = []
    for lam in V:
        try:
            funcs.append(Phi.scalarization(lam, extra=g, control_weight=0.0))
        except NotRepresentable as exc:
            raise ValidationFailed(f"<lam, Phi> + g is not a supported convex function at lam={lam.tolist()}") from exc
    return V, funcs


def sup_compact_subdiff_contains(Phi: VectorMap, g: ConvexFunc, C: Polytope, x, xs, eps: float,
                                 tol: float = DEFAULT_TOL) -> Tuple[bool, Optional[SupWitness]]:
    """x* in the eps-subdifferential of sup_{lam in C} <lam, Phi> + g at x.

    The supremum is the max of the vertex scalarizations F_k, so the union
    over eta in [0, eps] and lam in the (eps - eta)-active face is one
    GapProgram solve over convex weights on the vertices.
    """
    x = as_vector(x, Phi.n)
    V, funcs = _vertex_scalarizations(Phi, g, C)
    values = np.array([f.evaluate(x) for f in funcs])
    if not np.all(np.isfinite(values)):
        raise InfiniteValue(f"x={x.tolist()} is outside the domain of the scalarizations")
    levels = np.full(len(funcs), np.max(values))
    program = GapProgram(funcs, x, levels=levels)
    res = program.solve(xs)
    if res.value > eps + program.tolerance(tol):
        return False, None
    lam = res.weights @ V
    eta = float(np.sum(res.piece_gaps))
    return True, SupWitness(eta, lam.tolist(), float(eps - res.value))


@dataclass
class MaxWitness:
    """x* = alpha1 * s1 + alpha2 * s2 with s_i in eps_{eta_i} psi_i(x)."""

    alpha: List[float]
    eta1: float
    eta2: float
    slack: float


def max_rule_contains(psi1: ConvexFunc, psi2: ConvexFunc, x, xs, eta: float,
                      tol: float = DEFAULT_TOL) -> Tuple[bool, Optional[MaxWitness]]:
    """x* in the eta-subdifferential of max(psi1, psi2) at x.

    Exact: alpha in the simplex is a variable of the conic program, the level
    gaps alpha_i (max - psi_i(x)) enter the budget together with alpha_i eta_i.
    """
    x = as_vector(x, psi1.dim)
    values = np.array([psi1.evaluate(x), psi2.evaluate(x)])
    if not np.all(np.isfinite(values)):
        raise InfiniteValue(f"psi1 or psi2 is +inf at x={x.tolist()}")
    program = GapProgram([psi1, psi2], x, levels=np.full(2, np.max(values)))
    res = program.solve(xs)
    if res.value > eta + program.tolerance(tol):
        return False, None
    etas = [float(e / a) if a > 1e-12 else 0.0 for e, a in zip(res.piece_gaps, res.weights)]
    return True, MaxWitness(res.weights.tolist(), etas[0], etas[1], float(eta - res.value))


def coderivative_contains(Phi: VectorMap, x, lam, xs, tol: float = DEFAULT_TOL) -> bool:
    """x* in the regular coderivative of Phi at x applied to lam.

    Convex <lam, Phi>: regular subdifferential directly. Otherwise, with
    <lam, Phi> + h convex: sum rule when h is differentiable at x, the DC
    intersection formula when it is not.
    """
    x = as_vector(x, Phi.n)
    Phi.finite_value(x)
    xs = as_vector(xs, Phi.n)
    try:
        return regular_subdiff_contains(Phi.scalarization(lam, control_weight=0.0), x, xs, tol)
    except NotRepresentable:
        pass
    scal = Phi.scalarization(lam)
    try:
        return regular_subdiff_contains(scal, x, xs + grad(Phi.h, x), tol)
    except NotDifferentiable:
        return dc_subdiff_contains(scal, Phi.h, x, xs, 0.0, tol=tol)
