"""
Proper lsc convex functions and their exact eps-subdifferential calculus.

Supported kinds and their closure under sums:

    MaxAffine     max_i (a_i . x + b_i)
    Quadratic     1/2 x'Qx + q'x + c      (Q symmetric PSD)
    IndicatorPoly 0 on a polytope P, +inf outside
    Sum           any finite sum of the above

Every function reduces to one canonical form

    f(x) = 1/2 x'Qx + q'x + c + max_i (a_i . x + b_i) + indicator{Gx <= g, Geq x = geq}

(max-affine atoms of a Sum are product-expanded into one atom). Conjugates
follow from the inf-convolution of the three parts, which is exact here
because the polyhedral parts need no closure:

    f*(y) = min  1/2 (y_Q - q)'Q^+(y_Q - q) - c - b.mu + g.nu + geq.nu_eq
            s.t. y = y_Q + A'mu + G'nu + Geq'nu_eq,  mu in simplex,  nu >= 0,
                 y_Q - q in range(Q)

Scaling a function by w >= 0 gives the perspective of f*, which stays convex
jointly in (y, w). The GapProgram below uses that to decide membership in
sums of scaled eps-subdifferentials (max rules, improvement functions) with a
single conic program per query.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np

from .backends import INFEASIBLE, OPTIMAL, UNBOUNDED, INACCURATE, solve_program, value_tol
from .config import DEFAULT_TOL
from .errors import (InfiniteValue, NotDifferentiable, NotRepresentable, NumericFailure,
                     UnboundedSet)
from .geometry import Polytope, enumerate_vertices

logger = logging.getLogger(__name__)

# Domain membership slack used by evaluate()
DOMAIN_TOL = 1e-9

# A max-affine piece counts as active within this gap of the maximum
ACTIVE_TOL = 1e-9

# PSD check for quadratic parts
PSD_TOL = 1e-9

# Coefficients below this are treated as zero when combining atoms
ATOM_TOL = 1e-12

# Eigenvalues of Q below this are treated as zero
EIG_TOL = 1e-12

# Product expansion of max-affine atoms beyond this many pieces logs a warning
PIECE_WARN = 4096


def as_vector(x, n: Optional[int] = None) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if n is not None and x.size != n:
        raise ValueError(f"expected a vector of length {n}, got {x.size}")
    return x


class Canonical:
    """Canonical data (Q, q, c, A, b, G, g, Geq, geq) of a convex function."""

    def __init__(self, Q, q, c, A, b, G, g, Geq, geq):
        self.Q = np.asarray(Q, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.c = float(c)
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.G = np.asarray(G, dtype=float)
        self.g = np.asarray(g, dtype=float)
        self.Geq = np.asarray(Geq, dtype=float)
        self.geq = np.asarray(geq, dtype=float)
        self.dim = self.q.size
        self.is_polyhedral = not np.any(self.Q)
        self._factor = None

    def in_domain(self, x, tol: float = DOMAIN_TOL) -> bool:
        if self.G.shape[0] and np.any(self.G @ x - self.g > tol * (1.0 + np.abs(self.g))):
            return False
        if self.Geq.shape[0] and np.any(np.abs(self.Geq @ x - self.geq) > tol * (1.0 + np.abs(self.geq))):
            return False
        return True

    def smooth_value(self, x) -> float:
        return 0.5 * float(x @ self.Q @ x) + float(self.q @ x) + self.c

    def evaluate(self, x) -> float:
        if not self.in_domain(x):
            return np.inf
        value = self.smooth_value(x)
        if self.A.shape[0]:
            value += float(np.max(self.A @ x + self.b))
        return value

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """Vectorized evaluate over the rows of X."""
        X = np.atleast_2d(X)
        values = 0.5 * np.einsum("ij,jk,ik->i", X, self.Q, X) + X @ self.q + self.c
        if self.A.shape[0]:
            values = values + np.max(X @ self.A.T + self.b, axis=1)
        outside = np.zeros(X.shape[0], dtype=bool)
        if self.G.shape[0]:
            outside |= np.any(X @ self.G.T - self.g > DOMAIN_TOL * (1.0 + np.abs(self.g)), axis=1)
        if self.Geq.shape[0]:
            outside |= np.any(np.abs(X @ self.Geq.T - self.geq) > DOMAIN_TOL * (1.0 + np.abs(self.geq)), axis=1)
        values[outside] = np.inf
        return values

    def factor(self):
        """(R, N): Q^+ = R'R on range(Q), columns of N span null(Q)."""
        if self._factor is None:
            w, U = np.linalg.eigh(0.5 * (self.Q + self.Q.T))
            keep = w > EIG_TOL * max(1.0, np.max(np.abs(w)))
            R = (U[:, keep] / np.sqrt(w[keep])).T
            self._factor = (R, U[:, ~keep])
        return self._factor


class ConvexFunc:
    """Base class of the supported convex function kinds."""

    kind = "abstract"

    def __init__(self, dim: int):
        self.dim = int(dim)
        self._canonical: Optional[Canonical] = None

    def canonical(self) -> Canonical:
        if self._canonical is None:
            self._canonical = self._build_canonical()
        return self._canonical

    def _build_canonical(self) -> Canonical:
        raise NotImplementedError

    def evaluate(self, x) -> float:
        return self.canonical().evaluate(as_vector(x, self.dim))

    def __call__(self, x) -> float:
        return self.evaluate(x)

    @property
    def is_polyhedral(self) -> bool:
        return self.canonical().is_polyhedral

    def __add__(self, other: "ConvexFunc") -> "ConvexFunc":
        return Sum([self, other])

    def to_dict(self) -> dict:
        raise NotImplementedError


def _empty_domain(n: int):
    return np.zeros((0, n)), np.zeros(0), np.zeros((0, n)), np.zeros(0)


class MaxAffine(ConvexFunc):
    """max_i (a_i . x + b_i).

    Args:
        slopes: (K, n) array of a_i.
        offsets: (K,) array of b_i.
    """

    kind = "maxaffine"

    def __init__(self, slopes, offsets):
        slopes = np.atleast_2d(np.asarray(slopes, dtype=float))
        offsets = np.atleast_1d(np.asarray(offsets, dtype=float)).ravel()
        if slopes.shape[0] < 1:
            raise ValueError("MaxAffine needs at least one piece")
        if slopes.shape[0] != offsets.size:
            raise ValueError(f"{slopes.shape[0]} slopes but {offsets.size} offsets")
        super().__init__(slopes.shape[1])
        self.slopes = slopes
        self.offsets = offsets

    @classmethod
    def from_pieces(cls, pieces) -> "MaxAffine":
        """Rows [a_1 ... a_n, b]."""
        P = np.atleast_2d(np.asarray(pieces, dtype=float))
        return cls(P[:, :-1], P[:, -1])

    @classmethod
    def abs(cls, dim: int = 1, index: int = 0, scale: float = 1.0) -> "MaxAffine":
        e = np.zeros(dim)
        e[index] = scale
        return cls(np.vstack([e, -e]), np.zeros(2))

    @classmethod
    def affine(cls, slope, offset: float = 0.0) -> "MaxAffine":
        return cls(np.atleast_2d(slope), [offset])

    def _build_canonical(self) -> Canonical:
        n = self.dim
        G, g, Geq, geq = _empty_domain(n)
        if self.slopes.shape[0] == 1:
            return Canonical(np.zeros((n, n)), self.slopes[0], self.offsets[0],
                             np.zeros((0, n)), np.zeros(0), G, g, Geq, geq)
        return Canonical(np.zeros((n, n)), np.zeros(n), 0.0, self.slopes, self.offsets,
                         G, g, Geq, geq)

    def to_dict(self) -> dict:
        return {"maxaffine": np.hstack([self.slopes, self.offsets[:, None]]).tolist()}

    def __repr__(self):
        return f"MaxAffine(pieces={self.slopes.shape[0]}, dim={self.dim})"


class Quadratic(ConvexFunc):
    """1/2 x'Qx + q'x + c with Q symmetric PSD."""

    kind = "quadratic"

    def __init__(self, Q, q=None, c: float = 0.0):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ValueError(f"Q must be square, got shape {Q.shape}")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        n = Q.shape[0]
        if n and np.min(np.linalg.eigvalsh(Q)) < -PSD_TOL * (1.0 + np.max(np.abs(Q))):
            raise ValueError("Q must be positive semidefinite")
        super().__init__(n)
        self.Q = Q
        self.q = np.zeros(n) if q is None else as_vector(q, n)
        self.c = float(c)

    @classmethod
    def zero(cls, dim: int) -> "Quadratic":
        return cls(np.zeros((dim, dim)))

    @classmethod
    def squared_norm(cls, dim: int = 1, scale: float = 1.0) -> "Quadratic":
        """scale * |x|^2."""
        return cls(2.0 * scale * np.eye(dim))

    def _build_canonical(self) -> Canonical:
        G, g, Geq, geq = _empty_domain(self.dim)
        return Canonical(self.Q, self.q, self.c, np.zeros((0, self.dim)), np.zeros(0),
                         G, g, Geq, geq)

    def to_dict(self) -> dict:
        return {"quadratic": {"Q": self.Q.tolist(), "q": self.q.tolist(), "c": self.c}}

    def __repr__(self):
        return f"Quadratic(dim={self.dim})"


class IndicatorPoly(ConvexFunc):
    """0 on the polytope P, +inf elsewhere."""

    kind = "indicator"

    def __init__(self, P: Polytope):
        super().__init__(P.dim)
        self.P = P

    def _build_canonical(self) -> Canonical:
        n = self.dim
        A, b, Aeq, beq = self.P.hrep
        return Canonical(np.zeros((n, n)), np.zeros(n), 0.0, np.zeros((0, n)), np.zeros(0),
                         A, b, Aeq, beq)

    def to_dict(self) -> dict:
        return {"indicator": self.P.to_dict()}

    def __repr__(self):
        return f"IndicatorPoly({self.P!r})"


class Sum(ConvexFunc):
    """Finite sum of convex functions of the same dimension."""

    kind = "sum"

    def __init__(self, terms: Sequence[ConvexFunc]):
        terms = list(terms)
        if not terms:
            raise ValueError("Sum needs at least one term")
        dims = {t.dim for t in terms}
        if len(dims) != 1:
            raise ValueError(f"Sum terms have mixed dimensions {sorted(dims)}")
        super().__init__(dims.pop())
        flat: List[ConvexFunc] = []
        for t in terms:
            flat.extend(t.terms if isinstance(t, Sum) else [t])
        self.terms = flat

    def _build_canonical(self) -> Canonical:
        n = self.dim
        Q = np.zeros((n, n))
        q = np.zeros(n)
        c = 0.0
        A, b = np.zeros((0, n)), np.zeros(0)
        Gs, gs, Geqs, geqs = [], [], [], []
        for t in self.terms:
            can = t.canonical()
            Q, q, c = Q + can.Q, q + can.q, c + can.c
            if can.A.shape[0]:
                if A.shape[0] == 0:
                    A, b = can.A, can.b
                else:
                    A = (A[:, None, :] + can.A[None, :, :]).reshape(-1, n)
                    b = (b[:, None] + can.b[None, :]).ravel()
                    if A.shape[0] > PIECE_WARN:
                        logger.warning(f"Max-affine product expansion reached {A.shape[0]} pieces")
            Gs.append(can.G)
            gs.append(can.g)
            Geqs.append(can.Geq)
            geqs.append(can.geq)
        return Canonical(Q, q, c, A, b, np.vstack(Gs), np.concatenate(gs),
                         np.vstack(Geqs), np.concatenate(geqs))

    def to_dict(self) -> dict:
        return {"sum": [t.to_dict() for t in self.terms]}

    def __repr__(self):
        return f"Sum({', '.join(repr(t) for t in self.terms)})"


class DCPair:
    """f = u - h with u = f + h convex; h is the control function."""

    def __init__(self, u: ConvexFunc, h: ConvexFunc):
        if u.dim != h.dim:
            raise ValueError(f"u has dimension {u.dim} but h has dimension {h.dim}")
        self.u = u
        self.h = h
        self.dim = u.dim

    def evaluate(self, x) -> float:
        ux = self.u.evaluate(x)
        if not np.isfinite(ux):
            return np.inf
        return ux - self.h.evaluate(x)

    def __call__(self, x) -> float:
        return self.evaluate(x)

    def domain_violations(self, samples: np.ndarray) -> int:
        """Sample points in dom u but outside dom h (should be zero)."""
        samples = np.atleast_2d(samples)
        u_vals = self.u.canonical().evaluate_many(samples)
        h_vals = self.h.canonical().evaluate_many(samples)
        return int(np.sum(np.isfinite(u_vals) & ~np.isfinite(h_vals)))

    def __repr__(self):
        return f"DCPair(u={self.u!r}, h={self.h!r})"


def evaluate(f: ConvexFunc, x) -> float:
    return f.evaluate(x)


def same_function(f: ConvexFunc, g: ConvexFunc) -> bool:
    """Identity, or equal canonical data."""
    if f is g:
        return True
    if f.dim != g.dim:
        return False
    a, b = f.canonical(), g.canonical()
    pairs = [(a.Q, b.Q), (a.q, b.q), (a.A, b.A), (a.b, b.b), (a.G, b.G), (a.g, b.g), (a.Geq, b.Geq), (a.geq, b.geq)]
    return a.c == b.c and all(x.shape == y.shape and np.allclose(x, y) for x, y in pairs)


# ---- linear combinations with atom cancellation ----

@dataclass
class _Atoms:
    Q: np.ndarray
    q: np.ndarray
    c: float
    maxaffine: List[np.ndarray] = field(default_factory=list)
    domains: List[Polytope] = field(default_factory=list)


def _atoms(f: ConvexFunc) -> _Atoms:
    n = f.dim
    if isinstance(f, Sum):
        out = _Atoms(np.zeros((n, n)), np.zeros(n), 0.0)
        for t in f.terms:
            part = _atoms(t)
            out.Q, out.q, out.c = out.Q + part.Q, out.q + part.q, out.c + part.c
            out.maxaffine.extend(part.maxaffine)
            out.domains.extend(part.domains)
        return out
    if isinstance(f, Quadratic):
        return _Atoms(f.Q.copy(), f.q.copy(), f.c)
    if isinstance(f, IndicatorPoly):
        return _Atoms(np.zeros((n, n)), np.zeros(n), 0.0, domains=[f.P])
    if isinstance(f, MaxAffine):
        if f.slopes.shape[0] == 1:
            return _Atoms(np.zeros((n, n)), f.slopes[0].copy(), float(f.offsets[0]))
        return _Atoms(np.zeros((n, n)), np.zeros(n), 0.0,
                      maxaffine=[np.hstack([f.slopes, f.offsets[:, None]])])
    raise NotRepresentable(f"unsupported function kind {type(f).__name__}")


def _normalize_atom(pieces: np.ndarray) -> Tuple[tuple, float, np.ndarray]:
    """Key, scale and normalized rows of a max-affine atom (positively homogeneous)."""
    rows = np.unique(np.round(pieces, 12), axis=0)
    scale = float(np.max(np.abs(rows)))
    if scale == 0.0:
        return ("zero",), 0.0, rows
    norm = rows / scale
    key = (norm.shape,) + tuple(np.round(norm, 10).ravel())
    return key, scale, norm


def linear_combination(terms: Sequence[Tuple[float, ConvexFunc]]) -> ConvexFunc:
    """sum_k c_k f_k as a supported convex function.

    Negative coefficients are allowed only when the nonsmooth atoms they
    multiply cancel against positive ones and the merged quadratic part stays
    PSD; otherwise NotRepresentable is raised. Domains are intersected.
    """
    terms = [(float(c), f) for c, f in terms]
    if not terms:
        raise ValueError("empty linear combination")
    n = terms[0][1].dim
    Q = np.zeros((n, n))
    q = np.zeros(n)
    c0 = 0.0
    atoms: Dict[tuple, list] = {}
    domains: List[Polytope] = []
    for coef, f in terms:
        if f.dim != n:
            raise ValueError(f"mixed dimensions {n} and {f.dim}")
        part = _atoms(f)
        Q += coef * part.Q
        q += coef * part.q
        c0 += coef * part.c
        for pieces in part.maxaffine:
            key, scale, norm = _normalize_atom(pieces)
            if scale == 0.0:
                continue
            slot = atoms.setdefault(key, [0.0, norm])
            slot[0] += coef * scale
        domains.extend(part.domains)

    Q = 0.5 * (Q + Q.T)
    if n and np.min(np.linalg.eigvalsh(Q)) < -PSD_TOL * (1.0 + np.max(np.abs(Q))):
        raise NotRepresentable("the combined quadratic part is not positive semidefinite")
    max_terms: List[MaxAffine] = []
    for coef, norm in atoms.values():
        if coef < -ATOM_TOL:
            raise NotRepresentable("a nonsmooth atom keeps a negative coefficient")
        if coef > ATOM_TOL:
            max_terms.append(MaxAffine(coef * norm[:, :-1], coef * norm[:, -1]))

    out: List[ConvexFunc] = []
    if len(max_terms) == 1 and not np.any(Q):
        only = max_terms[0]
        out.append(MaxAffine(only.slopes + q, only.offsets + c0))
    else:
        out.append(Quadratic(Q, q, c0))
        out.extend(max_terms)
    out.extend(IndicatorPoly(P) for P in domains)
    return out[0] if len(out) == 1 else Sum(out)


# ---- conjugates and eps-subdifferentials ----

def conjugate_terms(can: Canonical, y, w, label: str):
    """Perspective of can's conjugate at (y, w) as (cost expression, constraints)."""
    n = can.dim
    cons = []
    parts = []
    cost = 0
    yQ = cp.Variable(n, name=f"{label}_quad")
    parts.append(yQ)
    if can.is_polyhedral:
        cons.append(yQ == w * can.q)
    else:
        R, N = can.factor()
        diff = yQ - w * can.q
        if N.shape[1]:
            cons.append(N.T @ diff == 0)
        if isinstance(w, (int, float)) and w <= 0:
            cons.append(diff == 0)
        else:
            cost = cost + 0.5 * cp.quad_over_lin(R @ diff, w)
    cost = cost - can.c * w
    if can.A.shape[0]:
        mu = cp.Variable(can.A.shape[0], nonneg=True, name=f"{label}_mu")
        cons.append(cp.sum(mu) == w)
        parts.append(can.A.T @ mu)
        cost = cost - can.b @ mu
    if can.G.shape[0]:
        nu = cp.Variable(can.G.shape[0], nonneg=True, name=f"{label}_nu")
        parts.append(can.G.T @ nu)
        cost = cost + can.g @ nu
    if can.Geq.shape[0]:
        nu_eq = cp.Variable(can.Geq.shape[0], name=f"{label}_nueq")
        parts.append(can.Geq.T @ nu_eq)
        cost = cost + can.geq @ nu_eq
    cons.append(y == sum(parts[1:], parts[0]))
    return cost, cons


def conjugate_value(f: ConvexFunc, xs) -> float:
    """f*(x*) = sup_x <x*, x> - f(x); +inf allowed."""
    can = f.canonical()
    xs = as_vector(xs, f.dim)
    if can.A.shape[0] == 0 and can.G.shape[0] == 0 and can.Geq.shape[0] == 0:
        return _quadratic_conjugate(can, xs)
    y = cp.Constant(xs)
    cost, cons = conjugate_terms(can, y, 1.0, "conj")
    problem = cp.Problem(cp.Minimize(cost), cons)
    status = solve_program(problem, "conjugate", linear=can.is_polyhedral)
    if status == INFEASIBLE:
        return np.inf
    if status == UNBOUNDED:
        raise ValueError("function is not proper (conjugate unbounded below)")
    return float(problem.value)


def _quadratic_conjugate(can: Canonical, xs: np.ndarray) -> float:
    rhs = xs - can.q
    if can.is_polyhedral:
        return -can.c if np.max(np.abs(rhs), initial=0.0) <= DEFAULT_TOL * (1.0 + np.max(np.abs(xs), initial=0.0)) else np.inf
    z, *_ = np.linalg.lstsq(can.Q, rhs, rcond=None)
    if np.linalg.norm(can.Q @ z - rhs) > 1e-9 * (1.0 + np.linalg.norm(rhs)):
        return np.inf
    return 0.5 * float(rhs @ z) - can.c


def _finite_value(f: ConvexFunc, x: np.ndarray) -> float:
    fx = f.evaluate(x)
    if not np.isfinite(fx):
        raise InfiniteValue(f"function is +inf at x={x.tolist()}")
    return fx


def eps_gap(f: ConvexFunc, x, xs) -> float:
    """f(x) + f*(x*) - <x*, x>: the smallest eps with x* in the eps-subdifferential."""
    x = as_vector(x, f.dim)
    xs = as_vector(xs, f.dim)
    fx = _finite_value(f, x)
    conj = conjugate_value(f, xs)
    if not np.isfinite(conj):
        return np.inf
    return max(0.0, fx + conj - float(xs @ x))


def in_eps_subdiff(f: ConvexFunc, x, xs, eps: float, tol: float = DEFAULT_TOL) -> bool:
    """x* in the eps-subdifferential of f at x (Fenchel characterization)."""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    gap = eps_gap(f, x, xs)
    return gap <= eps + value_tol(tol, f.is_polyhedral)


def regular_subdiff_contains(f: ConvexFunc, x, xs, tol: float = DEFAULT_TOL) -> bool:
    """Regular (Frechet) subdifferential; equals the convex one for convex f."""
    return in_eps_subdiff(f, x, xs, 0.0, tol)


def eps_subdiff_vrep(f: ConvexFunc, x, eps: float) -> Polytope:
    """V-representation of the eps-subdifferential of a polyhedral f at x.

    Lifted description {q + A'lam + G'nu : lam in simplex, nu >= 0,
    d.lam + s.nu <= eps} with d_i = f(x) - (a_i x + b_i) and s the domain slacks;
    bounded only when x is interior to every domain row.
    """
    can = f.canonical()
    if not can.is_polyhedral:
        raise NotRepresentable("eps_subdiff_vrep needs a polyhedral function")
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    x = as_vector(x, f.dim)
    fx = _finite_value(f, x)
    if can.Geq.shape[0] and np.any(np.abs(can.Geq) > 0):
        raise UnboundedSet("equality domain rows make the subdifferential a non-compact set")
    K = can.A.shape[0]
    r = can.G.shape[0]
    lin = fx - can.q @ x - can.c
    d = lin - (can.A @ x + can.b) if K else np.zeros(0)
    s = can.g - can.G @ x if r else np.zeros(0)
    dim = K + r
    if dim == 0:
        return Polytope.point(can.q)
    A_ub = np.vstack([-np.eye(dim), np.concatenate([d, s])[None, :]])
    b_ub = np.concatenate([np.zeros(dim), [eps]])
    Aeq = np.concatenate([np.ones(K), np.zeros(r)])[None, :] if K else np.zeros((0, dim))
    beq = np.ones(1) if K else np.zeros(0)
    lifted = enumerate_vertices(A_ub, b_ub, Aeq, beq)
    image_map = np.vstack([can.A, can.G]) if dim else np.zeros((0, f.dim))
    points = can.q + lifted @ image_map
    return Polytope.from_vertices(points)


@dataclass
class SubdiffPolyhedron:
    """The (eps = 0) subdifferential shift + conv(points) + cone(rays) + span(lines)."""

    shift: np.ndarray
    points: np.ndarray
    rays: np.ndarray
    lines: np.ndarray

    @property
    def is_singleton(self) -> bool:
        spread = np.ptp(self.points, axis=0) if self.points.shape[0] > 1 else np.zeros(1)
        return self.rays.shape[0] == 0 and self.lines.shape[0] == 0 and np.max(spread) <= 1e-12

    def representative(self) -> np.ndarray:
        """Lexicographically smallest point of shift + conv(points)."""
        order = np.lexsort(self.points.T[::-1])
        return self.shift + self.points[order[0]]


def subdiff_description(f: ConvexFunc, x, tol: float = ACTIVE_TOL) -> SubdiffPolyhedron:
    x = as_vector(x, f.dim)
    _finite_value(f, x)
    can = f.canonical()
    shift = can.Q @ x + can.q
    if can.A.shape[0]:
        vals = can.A @ x + can.b
        active = vals >= np.max(vals) - tol * (1.0 + abs(np.max(vals)))
        points = can.A[active]
    else:
        points = np.zeros((1, f.dim))
    if can.G.shape[0]:
        slack = can.g - can.G @ x
        rays = can.G[slack <= tol * (1.0 + np.abs(can.g))]
    else:
        rays = np.zeros((0, f.dim))
    return SubdiffPolyhedron(shift, points, rays, can.Geq.copy())


def grad(f: ConvexFunc, x, tol: float = ACTIVE_TOL) -> np.ndarray:
    """Gradient at x, or NotDifferentiable when the subdifferential is not a point."""
    desc = subdiff_description(f, x, tol)
    if desc.rays.shape[0] or (desc.lines.shape[0] and np.any(desc.lines)):
        raise NotDifferentiable(f"x={np.ravel(x).tolist()} is on the boundary of the domain")
    if desc.points.shape[0] > 1 and np.max(np.ptp(desc.points, axis=0)) > tol:
        raise NotDifferentiable(f"{desc.points.shape[0]} distinct active pieces at x={np.ravel(x).tolist()}")
    return desc.shift + desc.points[0]


def subgradient(f: ConvexFunc, x) -> np.ndarray:
    """Deterministic subgradient: lexicographically smallest vertex of conv(active gradients)."""
    return subdiff_description(f, x).representative()


def to_cvxpy(f: ConvexFunc, xvar: cp.Expression):
    """cvxpy expression and domain constraints for f(xvar)."""
    can = f.canonical()
    expr = can.q @ xvar + can.c
    if not can.is_polyhedral:
        w, U = np.linalg.eigh(0.5 * (can.Q + can.Q.T))
        F = (U * np.sqrt(np.clip(w, 0.0, None))).T
        expr = expr + 0.5 * cp.sum_squares(F @ xvar)
    if can.A.shape[0]:
        expr = expr + cp.max(can.A @ xvar + can.b)
    cons = []
    if can.G.shape[0]:
        cons.append(can.G @ xvar <= can.g)
    if can.Geq.shape[0]:
        cons.append(can.Geq @ xvar == can.geq)
    return expr, cons


class SupportProgram:
    """argmax <d, s> over the eps-subdifferential of f at x, reusable over (d, eps)."""

    def __init__(self, f: ConvexFunc, x):
        self.f = f
        self.x = as_vector(x, f.dim)
        self.fx = _finite_value(f, self.x)
        can = f.canonical()
        self.linear = can.is_polyhedral
        self.s = cp.Variable(f.dim, name="support_s")
        self.d = cp.Parameter(f.dim, name="direction")
        self.eps = cp.Parameter(nonneg=True, name="eps")
        cost, cons = conjugate_terms(can, self.s, 1.0, "support")
        cons.append(cost + self.fx - self.s @ self.x <= self.eps)
        self.problem = cp.Problem(cp.Maximize(self.d @ self.s), cons)

    def point(self, d, eps: float) -> np.ndarray:
        self.d.value = as_vector(d, self.f.dim)
        self.eps.value = float(eps)
        status = solve_program(self.problem, "eps-subdiff-support", linear=self.linear)
        if status == UNBOUNDED:
            raise UnboundedSet("eps-subdifferential is unbounded in the requested direction")
        if status not in (OPTIMAL, INACCURATE):
            raise NumericFailure(f"support point solve ended with status {status}", status=status)
        return np.asarray(self.s.value, dtype=float)


def eps_subdiff_support_point(f: ConvexFunc, x, eps: float, d) -> np.ndarray:
    return SupportProgram(f, x).point(d, eps)


@dataclass
class GapResult:
    """Outcome of a GapProgram solve.

    value:       minimal total gap (+inf when s is unreachable)
    weights:     w_k on the simplex
    parts:       y_k with sum_k y_k + domain_part = s
    piece_gaps:  e_k, so that y_k lies in the e_k-subdifferential of w_k f_k
    level_gaps:  w_k (L_k - f_k(x))
    domain_gap:  eps-normal level of domain_part
    """

    value: float
    status: str
    weights: Optional[np.ndarray] = None
    parts: Optional[np.ndarray] = None
    piece_gaps: Optional[np.ndarray] = None
    level_gaps: Optional[np.ndarray] = None
    domain_part: Optional[np.ndarray] = None
    domain_gap: float = 0.0

    @property
    def accurate(self) -> bool:
        return self.status in (OPTIMAL, INFEASIBLE)


class GapProgram:
    """Membership engine for sums of scaled eps-subdifferentials.

    For pieces f_1..f_K, levels L_k (default f_k(x)), an optional domain D and
    a dual vector s it computes

        min  sum_k [ (w_k f_k)*(y_k) + w_k L_k ] + sigma_D(v) - <s, x>
        s.t. sum_k y_k + v = s,  w in simplex (or fixed weights)

    With L_k = max_j f_j(x) this is the conjugate gap of max_k f_k, so s lies
    in the eta-subdifferential of the max (plus indicator of D) iff the value
    is <= eta. The value splits into per-piece gaps, level gaps and the domain
    gap, which are the multipliers of the max rule.

    With a source function the target s becomes a variable and the gap of s
    in the subdifferential of the source at x is added to the objective, so a
    zero value means the two subdifferentials intersect.

    Shifts d_k move the target to s + sum_k w_k d_k, so that each piece can
    carry its own control gradient.
    """

    def __init__(self, pieces: Sequence[ConvexFunc], x, levels=None, domain: Optional[Polytope] = None,
                 weights=None, source: Optional[ConvexFunc] = None, shifts=None):
        if not pieces:
            raise ValueError("GapProgram needs at least one piece")
        n = pieces[0].dim
        self.n = n
        self.x = as_vector(x, n)
        self.pieces = list(pieces)
        cans = [p.canonical() for p in self.pieces]
        self.values = np.array([_finite_value(p, self.x) for p in self.pieces])
        self.levels = self.values.copy() if levels is None else as_vector(levels, len(self.pieces))
        self.linear = all(can.is_polyhedral for can in cans)
        K = len(self.pieces)

        cons = []
        self.source_gap_expr = cp.Constant(0.0)
        if source is None:
            self.s = cp.Parameter(n, name="target")
        else:
            self.s = cp.Variable(n, name="target")
            cost, source_cons = conjugate_terms(source.canonical(), self.s, 1.0, "source")
            cons.extend(source_cons)
            self.source_gap_expr = cost + _finite_value(source, self.x) - self.s @ self.x
            self.linear = self.linear and source.is_polyhedral
        if weights is None:
            self.w = cp.Variable(K, nonneg=True, name="weights")
            cons.append(cp.sum(self.w) == 1)
            w_items = [self.w[k] for k in range(K)]
        else:
            fixed = as_vector(weights, K)
            self.w = cp.Constant(fixed)
            w_items = [float(v) for v in fixed]
        self.y = [cp.Variable(n, name=f"part{k}") for k in range(K)]
        gap_exprs = []
        for k, can in enumerate(cans):
            cost, piece_cons = conjugate_terms(can, self.y[k], w_items[k], f"p{k}")
            cons.extend(piece_cons)
            gap_exprs.append(cost + w_items[k] * self.values[k] - self.y[k] @ self.x)
        self.gap_exprs = gap_exprs
        total_parts = sum(self.y[1:], self.y[0])
        self.level_expr = self.w @ (self.levels - self.values) if weights is None else \
            cp.Constant(float(np.asarray(weights, dtype=float) @ (self.levels - self.values)))

        self.v = None
        self.domain_gap_expr = cp.Constant(0.0)
        if domain is not None:
            A, b, Aeq, beq = domain.hrep
            terms, cost = [], 0
            if A.shape[0]:
                nu = cp.Variable(A.shape[0], nonneg=True, name="dom_nu")
                terms.append(A.T @ nu)
                cost = cost + b @ nu
            if Aeq.shape[0]:
                nu_eq = cp.Variable(Aeq.shape[0], name="dom_nueq")
                terms.append(Aeq.T @ nu_eq)
                cost = cost + beq @ nu_eq
            if terms:
                self.v = sum(terms[1:], terms[0])
                self.domain_gap_expr = cost - self.v @ self.x
                total_parts = total_parts + self.v
        rhs = self.s
        if shifts is not None:
            shifts = np.reshape(np.asarray(shifts, dtype=float), (K, n))
            rhs = rhs + shifts.T @ self.w
        cons.append(total_parts == rhs)
        self.total = sum(gap_exprs[1:], gap_exprs[0]) + self.level_expr + self.domain_gap_expr + self.source_gap_expr
        self.constraints = cons
        self.problem = cp.Problem(cp.Minimize(self.total), cons)
        self._max_problem = None
        self._budget = None

    def _collect(self, status: str, value: float) -> GapResult:
        if status in (INFEASIBLE,):
            return GapResult(np.inf, status)
        if status == UNBOUNDED:
            raise NumericFailure("gap program unbounded (improper piece)", status=status)
        weights = np.clip(np.asarray(self.w.value, dtype=float).ravel(), 0.0, None)
        parts = np.vstack([np.asarray(y.value, dtype=float) for y in self.y])
        piece_gaps = np.array([max(0.0, float(e.value)) for e in self.gap_exprs])
        level_gaps = weights * (self.levels - self.values)
        dom_part = np.zeros(self.n) if self.v is None else np.asarray(self.v.value, dtype=float)
        dom_gap = max(0.0, float(self.domain_gap_expr.value)) if self.v is not None else 0.0
        return GapResult(float(value), status, weights, parts, piece_gaps, level_gaps, dom_part, dom_gap)

    def _set_target(self, s):
        if isinstance(self.s, cp.Parameter):
            self.s.value = as_vector(s, self.n)

    def solve(self, s=None) -> GapResult:
        self._set_target(s)
        status = solve_program(self.problem, "gap-program", linear=self.linear)
        value = self.problem.value if status not in (INFEASIBLE, UNBOUNDED) else np.inf
        return self._collect(status, value)

    def max_weight(self, s, index: int, budget: float) -> GapResult:
        """Maximize w_index subject to total gap <= budget."""
        if self._max_problem is None:
            self._budget = cp.Parameter(name="budget")
            cons = list(self.constraints) + [self.total <= self._budget]
            self._max_problem = cp.Problem(cp.Maximize(self.w[index]), cons)
            self._max_index = index
        elif index != self._max_index:
            raise ValueError("max_weight index is fixed per program")
        self._set_target(s)
        self._budget.value = float(budget)
        status = solve_program(self._max_problem, "gap-program-max", linear=self.linear)
        if status == INFEASIBLE:
            return GapResult(np.inf, status)
        return self._collect(status, float(self.total.value))

    def tolerance(self, tol: float) -> float:
        return value_tol(tol, self.linear)


def eps_subdiff_sum_gap(pieces: Sequence[ConvexFunc], x, s, levels=None,
                        domain: Optional[Polytope] = None, weights=None) -> GapResult:
    """One-shot GapProgram solve; see GapProgram for the quantity computed."""
    return GapProgram(pieces, x, levels=levels, domain=domain, weights=weights).solve(s)
