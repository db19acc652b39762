"""
Polytope arithmetic over real n-space.

A Polytope carries an H-representation {x : A x <= b, Aeq x = beq}, a
V-representation (its extreme points), or both. The missing one is derived on
first access and cached:

  H -> V  exhaustive vertex enumeration: every k-subset of inequality rows is
          solved inside the affine hull of the equality rows (k = hull
          dimension), feasible solutions are kept and deduplicated. Exact
          enough for desk scale (n <= 6, a few thousand vertices).
  V -> H  affine hull by SVD, then scipy.spatial.ConvexHull (Qhull) inside the
          hull coordinates; lower-dimensional sets get equality rows.

PolyCone is the conic analogue ({y : A y <= 0} or cone(generators)).

The set-level constructions used by the certificates live here too: support
function, Minkowski-difference membership, dual slope (A - z0)°, eps-normal
sets and the positive polar of a cone.
"""

import logging
from itertools import combinations
from math import comb
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.spatial import ConvexHull

from .backends import OPTIMAL, INFEASIBLE, UNBOUNDED, solve_lp
from .config import DEFAULT_TOL
from .errors import EmptySet, NotInterior, UnboundedSet

logger = logging.getLogger(__name__)

# Relative tolerance used to merge numerically identical vertices / rays
MERGE_TOL = 1e-7

# Rank threshold for singular values
RANK_TOL = 1e-9

# Above this many row subsets the enumeration logs a warning
ENUMERATION_WARN = 2_000_000


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _dedupe_rows(rows: Iterable[np.ndarray], tol: float = MERGE_TOL) -> List[np.ndarray]:
    kept: List[np.ndarray] = []
    for row in rows:
        scale = 1.0 + np.max(np.abs(row))
        if all(np.max(np.abs(row - other)) > tol * scale for other in kept):
            kept.append(row)
    return kept


def _affine_reduce(Aeq: np.ndarray, beq: np.ndarray, dim: int, tol: float):
    """Return (x0, N) with {x : Aeq x = beq} = {x0 + N z}; raise EmptySet if inconsistent."""
    if Aeq.shape[0] == 0:
        return np.zeros(dim), np.eye(dim)
    x0, *_ = np.linalg.lstsq(Aeq, beq, rcond=None)
    if np.max(np.abs(Aeq @ x0 - beq)) > tol * (1.0 + np.max(np.abs(beq))) * 1e3:
        raise EmptySet("equality rows are inconsistent")
    return x0, null_space(Aeq, rcond=RANK_TOL)


def enumerate_vertices(A: np.ndarray, b: np.ndarray, Aeq: np.ndarray, beq: np.ndarray,
                       tol: float = DEFAULT_TOL) -> np.ndarray:
    """Vertices of {A x <= b, Aeq x = beq}; raises EmptySet / UnboundedSet."""
    dim = A.shape[1]
    x0, N = _affine_reduce(Aeq, beq, dim, tol)
    k = N.shape[1]
    Ar = A @ N
    br = b - A @ x0
    if k == 0:
        if A.shape[0] and np.any(br < -tol * (1.0 + np.abs(b))):
            raise EmptySet("the single affine point violates an inequality")
        return x0.reshape(1, -1)

    # boundedness / emptiness in the reduced coordinates
    for i in range(k):
        for sign in (1.0, -1.0):
            c = np.zeros(k)
            c[i] = sign
            res = solve_lp(c, Ar, br, label="polytope-bounds")
            if res.status == INFEASIBLE:
                raise EmptySet("inequality system is infeasible")
            if res.status == UNBOUNDED:
                raise UnboundedSet(f"unbounded along reduced coordinate {i}")

    m = Ar.shape[0]
    if comb(m, k) > ENUMERATION_WARN:
        logger.warning(f"Enumerating {comb(m, k)} row subsets (m={m}, k={k}); this may be slow")
    found = []
    for subset in combinations(range(m), k):
        M = Ar[list(subset)]
        if abs(np.linalg.det(M)) < RANK_TOL * max(1.0, np.max(np.abs(M)) ** k):
            continue
        z = np.linalg.solve(M, br[list(subset)])
        if np.all(Ar @ z <= br + tol * (1.0 + np.abs(br))):
            found.append(z)
    if not found:
        raise EmptySet("no vertex found")
    verts = _dedupe_rows([x0 + N @ z for z in found])
    return np.vstack(verts)


def facets_from_vertices(V: np.ndarray):
    """H-representation and extreme subset of conv(V).

    Returns (A, b, Aeq, beq, extreme_vertices).
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    m, n = V.shape
    center = V.mean(axis=0)
    M = V - center
    _, S, Wt = np.linalg.svd(M, full_matrices=True)
    k = int(np.sum(S > RANK_TOL * max(1.0, S[0] if S.size else 0.0)))
    B = Wt[:k].T
    Ncomp = Wt[k:].T
    Aeq = Ncomp.T
    beq = Ncomp.T @ center
    if k == 0:
        return np.zeros((0, n)), np.zeros(0), Aeq, beq, V[:1].copy()
    Z = M @ B
    if k == 1:
        z = Z[:, 0]
        lo, hi = int(np.argmin(z)), int(np.argmax(z))
        normals = np.array([[1.0], [-1.0]])
        rhs = np.array([z[hi], -z[lo]])
        extreme = V[[lo, hi]]
    else:
        hull = ConvexHull(Z)
        eqs = _dedupe_rows(list(hull.equations), tol=1e-9)
        eqs = np.vstack(eqs)
        normals = eqs[:, :-1]
        rhs = -eqs[:, -1]
        extreme = V[np.sort(hull.vertices)]
    A = normals @ B.T
    b = rhs + A @ center
    return A, b, Aeq, beq, extreme


class Polytope:
    """Bounded convex polyhedron with lazily completed H/V representations.

    Instances are immutable; representations are computed once and cached.

    Args:
        dim: ambient dimension n.
        A, b: inequality rows (A x <= b).
        Aeq, beq: equality rows (Aeq x = beq).
        vertices: V-representation (extreme points).
    """

    def __init__(self, dim: int, A=None, b=None, Aeq=None, beq=None, vertices=None,
                 tol: float = DEFAULT_TOL):
        self.dim = int(dim)
        self.tol = tol
        self._A = self._b = self._Aeq = self._beq = None
        self._vertices = None
        if A is not None or Aeq is not None:
            self._A = _frozen(np.zeros((0, self.dim)) if A is None else np.reshape(A, (-1, self.dim)))
            self._b = _frozen(np.zeros(0) if b is None else np.ravel(b))
            self._Aeq = _frozen(np.zeros((0, self.dim)) if Aeq is None else np.reshape(Aeq, (-1, self.dim)))
            self._beq = _frozen(np.zeros(0) if beq is None else np.ravel(beq))
            if self._A.shape[0] != self._b.size or self._Aeq.shape[0] != self._beq.size:
                raise ValueError("H-representation row counts do not match")
        if vertices is not None:
            V = np.atleast_2d(np.asarray(vertices, dtype=float))
            if V.size == 0:
                raise EmptySet("a V-representation needs at least one vertex")
            if V.shape[1] != self.dim:
                raise ValueError(f"vertices have dimension {V.shape[1]}, expected {self.dim}")
            self._vertices = V
        if self._A is None and self._vertices is None:
            raise ValueError("a polytope needs an H- or a V-representation")
        if self._vertices is not None and self._A is None:
            self._from_v_only()

    # ---- constructors ----

    @classmethod
    def from_hrep(cls, A, b, Aeq=None, beq=None, tol: float = DEFAULT_TOL) -> "Polytope":
        A = np.atleast_2d(np.asarray(A, dtype=float)) if np.size(A) else None
        dim = A.shape[1] if A is not None else np.atleast_2d(Aeq).shape[1]
        return cls(dim, A=A, b=b, Aeq=Aeq, beq=beq, tol=tol)

    @classmethod
    def from_vertices(cls, vertices, tol: float = DEFAULT_TOL) -> "Polytope":
        V = np.atleast_2d(np.asarray(vertices, dtype=float))
        return cls(V.shape[1], vertices=V, tol=tol)

    @classmethod
    def box(cls, lo, hi) -> "Polytope":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if np.any(hi < lo):
            raise EmptySet("box with hi < lo")
        n = lo.size
        return cls(n, A=np.vstack([np.eye(n), -np.eye(n)]), b=np.concatenate([hi, -lo]))

    @classmethod
    def simplex(cls, k: int) -> "Polytope":
        """Standard simplex {lam >= 0, sum lam = 1} in R^k."""
        return cls(k, vertices=np.eye(k))

    @classmethod
    def point(cls, x) -> "Polytope":
        return cls.from_vertices(np.atleast_2d(x))

    # ---- representations ----

    def _from_v_only(self):
        A, b, Aeq, beq, extreme = facets_from_vertices(self._vertices)
        self._vertices = _frozen(extreme)
        self._A, self._b = _frozen(A), _frozen(b)
        self._Aeq, self._beq = _frozen(Aeq), _frozen(beq)

    @property
    def hrep(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self._A, self._b, self._Aeq, self._beq

    @property
    def vertices(self) -> np.ndarray:
        """Extreme points; an empty (0, n) array for an empty polytope."""
        if self._vertices is None:
            try:
                V = enumerate_vertices(self._A, self._b, self._Aeq, self._beq, self.tol)
            except EmptySet:
                V = np.zeros((0, self.dim))
            self._vertices = _frozen(V)
        return self._vertices

    def is_empty(self) -> bool:
        return self.vertices.shape[0] == 0

    def inequalities_with_equalities(self) -> Tuple[np.ndarray, np.ndarray]:
        """All rows as inequalities (equalities as +/- pairs)."""
        A, b, Aeq, beq = self.hrep
        return np.vstack([A, Aeq, -Aeq]), np.concatenate([b, beq, -beq])

    # ---- queries ----

    def contains(self, x, tol: Optional[float] = None) -> bool:
        tol = self.tol if tol is None else tol
        x = np.asarray(x, dtype=float).ravel()
        A, b, Aeq, beq = self.hrep
        if A.shape[0] and np.any(A @ x - b > tol * (1.0 + np.abs(b))):
            return False
        if Aeq.shape[0] and np.any(np.abs(Aeq @ x - beq) > tol * (1.0 + np.abs(beq))):
            return False
        return True

    def support(self, d) -> float:
        """max over P of <d, x>; -inf for the empty set."""
        V = self.vertices
        if V.shape[0] == 0:
            return -np.inf
        return float(np.max(V @ np.asarray(d, dtype=float).ravel()))

    def chebyshev_center(self) -> Tuple[np.ndarray, float]:
        """Center and radius of the largest ball inside P (within its affine hull)."""
        A, b, Aeq, beq = self.hrep
        norms = np.linalg.norm(A, axis=1)
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        A_ub = np.hstack([A, norms[:, None]]) if A.shape[0] else None
        A_eq = np.hstack([Aeq, np.zeros((Aeq.shape[0], 1))]) if Aeq.shape[0] else None
        bounds = [(None, None)] * self.dim + [(0, None)]
        if A_ub is None:
            raise UnboundedSet("no inequality rows")
        res = solve_lp(c, A_ub, b, A_eq, beq if A_eq is not None else None, bounds=bounds,
                       label="chebyshev-center")
        if res.status == INFEASIBLE:
            raise EmptySet("polytope is empty")
        if res.status != OPTIMAL:
            raise UnboundedSet("polytope is unbounded")
        return res.x[:-1], float(res.x[-1])

    def is_interior(self, z, tol: Optional[float] = None) -> bool:
        tol = self.tol if tol is None else tol
        A, b, Aeq, _ = self.hrep
        if Aeq.shape[0]:
            return False
        z = np.asarray(z, dtype=float).ravel()
        return bool(np.all(b - A @ z > tol))

    def to_dict(self) -> dict:
        A, b, Aeq, beq = self.hrep
        if Aeq.shape[0] == 0:
            return {"hrep": {"A": A.tolist(), "b": b.tolist()}}
        return {"hrep": {"A": A.tolist(), "b": b.tolist(), "Aeq": Aeq.tolist(), "beq": beq.tolist()}}

    def __repr__(self):
        A = self._A
        return f"Polytope(dim={self.dim}, rows={0 if A is None else A.shape[0]})"


def convert(P: Polytope) -> Polytope:
    """Return P with both representations populated and checked."""
    V = P.vertices
    if V.shape[0] == 0:
        raise EmptySet("polytope is empty")
    A, b, Aeq, beq = P.hrep
    return Polytope(P.dim, A=A, b=b, Aeq=Aeq, beq=beq, vertices=V, tol=P.tol)


def support(P: Polytope, d) -> float:
    return P.support(d)


def same_polytope(P1: Polytope, P2: Polytope, tol: float = 1e-7) -> bool:
    """Vertex sets agree within tol (bounds the Hausdorff distance)."""
    V1, V2 = P1.vertices, P2.vertices
    if V1.shape != V2.shape:
        return False

    def covered(X, Y):
        return all(np.min(np.linalg.norm(Y - x, axis=1)) <= tol for x in X)

    return covered(V1, V2) and covered(V2, V1)


def minkowski_diff_contains(A: Polytope, B: Polytope, x, tol: float = DEFAULT_TOL) -> bool:
    """x in A ⊖ B, i.e. x + v in A for every vertex v of B."""
    VB = B.vertices
    if VB.shape[0] == 0:
        raise EmptySet("Minkowski difference with an empty set")
    x = np.asarray(x, dtype=float).ravel()
    return all(A.contains(x + v, tol) for v in VB)


def dual_slope(A: Polytope, z0, tol: float = DEFAULT_TOL) -> Polytope:
    """(A - z0)°: one row <y - z0, .> <= 1 per vertex y of A."""
    z0 = np.asarray(z0, dtype=float).ravel()
    if not A.is_interior(z0, tol):
        raise NotInterior(f"z0={z0.tolist()} is not interior; the dual slope would be unbounded")
    V = A.vertices
    return Polytope.from_hrep(V - z0, np.ones(V.shape[0]), tol=tol)


def eps_normal_set_contains(A: Polytope, x, eps: float, xs, tol: float = DEFAULT_TOL) -> bool:
    """x* in N^eps_A(x): <x*, y - x> <= eps for all y in A."""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    x = np.asarray(x, dtype=float).ravel()
    xs = np.asarray(xs, dtype=float).ravel()
    if not A.contains(x, tol):
        return False
    return A.support(xs) - float(xs @ x) <= eps + tol


# ---- cones ----

def cone_generators(A: np.ndarray, dim: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Generators (extreme rays plus +/- lineality basis) of {y : A y <= 0}."""
    A = np.reshape(np.asarray(A, dtype=float), (-1, dim))
    if A.shape[0] == 0:
        return np.vstack([np.eye(dim), -np.eye(dim)])
    L = null_space(A, rcond=RANK_TOL)
    gens = [col for col in L.T] + [-col for col in L.T]
    W = null_space(L.T, rcond=RANK_TOL) if L.shape[1] else np.eye(dim)
    p = W.shape[1]
    if p == 0:
        return np.vstack(gens)
    Ar = A @ W
    candidates = []
    if p == 1:
        candidates = [np.array([1.0]), np.array([-1.0])]
    else:
        for subset in combinations(range(Ar.shape[0]), p - 1):
            ns = null_space(Ar[list(subset)], rcond=RANK_TOL)
            if ns.shape[1] != 1:
                continue
            r = ns[:, 0]
            candidates.extend([r, -r])
    rays = []
    for r in candidates:
        if np.all(Ar @ r <= tol * (1.0 + np.linalg.norm(Ar, axis=1))):
            full = W @ r
            rays.append(full / np.linalg.norm(full))
    gens.extend(_dedupe_rows(rays))
    if not gens:
        return np.zeros((0, dim))
    return np.vstack(gens)


class PolyCone:
    """Closed convex polyhedral cone, cone(generators) or {y : A y <= 0}."""

    def __init__(self, dim: int, generators=None, A=None, tol: float = DEFAULT_TOL):
        self.dim = int(dim)
        self.tol = tol
        self._gens = None if generators is None else _frozen(np.reshape(generators, (-1, self.dim)))
        self._A = None if A is None else _frozen(np.reshape(A, (-1, self.dim)))
        if self._gens is None and self._A is None:
            raise ValueError("a cone needs generators or an H-representation")

    @classmethod
    def from_generators(cls, generators, dim: Optional[int] = None) -> "PolyCone":
        G = np.asarray(generators, dtype=float)
        if dim is None:
            dim = np.atleast_2d(G).shape[1]
        return cls(dim, generators=np.reshape(G, (-1, dim)))

    @classmethod
    def from_hrep(cls, A, dim: Optional[int] = None) -> "PolyCone":
        A = np.asarray(A, dtype=float)
        if dim is None:
            dim = np.atleast_2d(A).shape[1]
        return cls(dim, A=np.reshape(A, (-1, dim)))

    @classmethod
    def orthant(cls, dim: int) -> "PolyCone":
        return cls(dim, generators=np.eye(dim))

    @property
    def generators(self) -> np.ndarray:
        if self._gens is None:
            self._gens = _frozen(cone_generators(self._A, self.dim, self.tol))
        return self._gens

    @property
    def hrep(self) -> np.ndarray:
        """Rows of A with cone = {y : A y <= 0}."""
        if self._A is None:
            G = self.generators
            G = G[np.linalg.norm(G, axis=1) > self.tol] if G.size else G
            # cone(G) = {y : <r, y> <= 0 for every generator r of {z : G z <= 0}}
            self._A = _frozen(cone_generators(G, self.dim, self.tol) if G.size
                              else np.vstack([np.eye(self.dim), -np.eye(self.dim)]))
        return self._A

    def contains(self, y, tol: Optional[float] = None) -> bool:
        tol = self.tol if tol is None else tol
        y = np.asarray(y, dtype=float).ravel()
        A = self.hrep
        return bool(np.all(A @ y <= tol * (1.0 + np.linalg.norm(y))))

    def lineality(self) -> np.ndarray:
        """Orthonormal basis of the largest subspace inside the cone (columns)."""
        return null_space(self.hrep, rcond=RANK_TOL) if self.hrep.shape[0] else np.eye(self.dim)

    def is_trivial(self) -> bool:
        """True for the cone {0}."""
        G = self.generators
        return G.shape[0] == 0 or bool(np.all(np.abs(G) <= self.tol))

    def to_dict(self) -> dict:
        return {"generators": self.generators.tolist()}

    def __repr__(self):
        return f"PolyCone(dim={self.dim}, generators={self.generators.shape[0]})"


def positive_polar(K: PolyCone) -> PolyCone:
    """K+ = {x* : <x*, g> >= 0 for every generator g}."""
    G = K.generators
    if G.size:
        G = G[np.linalg.norm(G, axis=1) > K.tol]
    return PolyCone(K.dim, A=-G if G.size else np.zeros((0, K.dim)), tol=K.tol)
