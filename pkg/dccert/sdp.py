"""
Semidefinite constraints Phi(x) <= 0 (negative semidefinite) for symmetric
matrix-valued DC maps.

A MatrixMap stores its upper-triangle entries as convex functions u_ij with
Phi_ij = u_ij - h. The scalarization <A, Phi> + h for a symmetric A is the
VectorMap scalarization of the upper-triangle entries with weights A_ii and
2 A_ij, so the B-DC machinery applies with B the trace-one PSD matrices.
Their extreme points are the rank-one matrices vv', which turns validation
into quadratic-form checks over unit vectors.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np

from .backends import INFEASIBLE, solve_program, value_tol
from .config import Options
from .convex_functions import (ConvexFunc, DCPair, IndicatorPoly, Sum, as_vector, conjugate_terms, grad,
                               linear_combination, same_function)
from .dc_calculus import BdcReport, BdcVertexCheck, VectorMap, default_grid, midpoint_violation
from .errors import Infeasible, InfiniteValue, NoConvergence, NotRepresentable, QCViolated
from .geometry import Polytope

logger = logging.getLogger(__name__)

MAX_EIG_DIM = 64

# Sweeps of the cyclic Jacobi method before giving up
MAX_SWEEPS = 60

# Subspace iterations used to polish sampled projections
ASCENT_STEPS = 200


class SymMatrix:
    """Real symmetric matrix stored through its upper triangle."""

    def __init__(self, entries):
        a = np.atleast_2d(np.asarray(entries, dtype=float))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        upper = np.triu(a)
        self.entries = upper + np.triu(a, 1).T
        self.p = a.shape[0]

    @classmethod
    def zeros(cls, p: int) -> "SymMatrix":
        return cls(np.zeros((p, p)))

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))

    def inner(self, other) -> float:
        """<A, B> = Tr(AB)."""
        b = other.entries if isinstance(other, SymMatrix) else np.asarray(other, dtype=float)
        return float(np.sum(self.entries * b))

    def eig(self) -> Tuple[np.ndarray, np.ndarray]:
        return sym_eig(self)

    def to_list(self) -> List[List[float]]:
        return self.entries.tolist()

    def __repr__(self):
        return f"SymMatrix({self.entries.tolist()})"


def _off_norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.triu(a, 1) ** 2)))


def sym_eig(A, tol: float = 1e-15) -> Tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigen-decomposition; returns (Q, eigenvalues descending).

    A = Q diag(eigenvalues) Q'. Raises NoConvergence when the off-diagonal
    mass does not vanish within MAX_SWEEPS sweeps.
    """
    a = (A.entries if isinstance(A, SymMatrix) else SymMatrix(A).entries).copy()
    p = a.shape[0]
    if p > MAX_EIG_DIM:
        raise ValueError(f"sym_eig supports p <= {MAX_EIG_DIM}, got {p}")
    Q = np.eye(p)
    scale = max(np.linalg.norm(a), 1.0)
    for _ in range(MAX_SWEEPS):
        off = _off_norm(a)
        if off <= tol * scale:
            break
        for k in range(p - 1):
            for l in range(k + 1, p):
                akl = a[k, l]
                if abs(akl) <= tol * scale * 1e-3:
                    continue
                theta = (a[l, l] - a[k, k]) / (2.0 * akl)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ak, al = a[:, k].copy(), a[:, l].copy()
                a[:, k], a[:, l] = c * ak - s * al, s * ak + c * al
                rk, rl = a[k, :].copy(), a[l, :].copy()
                a[k, :], a[l, :] = c * rk - s * rl, s * rk + c * rl
                a[k, l] = a[l, k] = 0.0
                qk, ql = Q[:, k].copy(), Q[:, l].copy()
                Q[:, k], Q[:, l] = c * qk - s * ql, s * qk + c * ql
    else:
        off = _off_norm(a)
        if off > 1e-10 * scale:
            raise NoConvergence(f"Jacobi rotations did not converge (off-diagonal norm {off:.3g})")
    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    return Q[:, order], vals[order]


class MatrixMap:
    """Symmetric p x p map Phi_ij = u_ij - h with a shared control h.

    Only the upper triangle of `us` is read.
    """

    def __init__(self, us: Sequence[Sequence[ConvexFunc]], h: ConvexFunc, domain: Optional[Polytope] = None):
        p = len(us)
        if p == 0 or any(len(row) != p for row in us):
            raise ValueError("entry functions must form a nonempty square array")
        self.p = p
        self.h = h
        self.n = h.dim
        self.index = [(i, j) for i in range(p) for j in range(i, p)]
        self.vector_map = VectorMap([us[i][j] for i, j in self.index], h, domain)

    @property
    def domain(self) -> Optional[Polytope]:
        return self.vector_map.domain

    def entry(self, i: int, j: int) -> DCPair:
        i, j = min(i, j), max(i, j)
        return DCPair(self.vector_map.us[self.index.index((i, j))], self.h)

    def _unpack(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros((self.p, self.p))
        for (i, j), v in zip(self.index, values):
            out[i, j] = out[j, i] = v
        return out

    def evaluate(self, x) -> np.ndarray:
        return self._unpack(self.vector_map.evaluate(x))

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def weights(self, A) -> np.ndarray:
        """Upper-triangle weights with <A, Phi> = weights . entries."""
        a = A.entries if isinstance(A, SymMatrix) else SymMatrix(A).entries
        return np.array([a[i, j] if i == j else 2.0 * a[i, j] for i, j in self.index])

    def scalarization(self, A) -> ConvexFunc:
        """<A, Phi> + h; NotRepresentable when not convex in the supported kinds."""
        return self.vector_map.scalarization(self.weights(A))

    def quadratic_form(self, v) -> ConvexFunc:
        v = as_vector(v, self.p)
        return self.scalarization(np.outer(v, v))

    def entry_jacobian(self, x) -> np.ndarray:
        """(p, p, n) array of entry gradients at x."""
        J = self.vector_map.jacobian(x)
        out = np.zeros((self.p, self.p, self.n))
        for (i, j), g in zip(self.index, J):
            out[i, j] = out[j, i] = g
        return out

    def __repr__(self):
        return f"MatrixMap(p={self.p}, n={self.n})"


def matrix_map_from_entries(entries: Sequence[Sequence[DCPair]], domain: Optional[Polytope] = None) -> MatrixMap:
    """Matrix map from entrywise DC pairs Phi_ij = g_ij - h_ij.

    With a single shared control the pairs are used as given. Otherwise the
    common control is H = sum over ordered (i, j) of (g_ij + h_ij), for which
    v'Phi v + H = sum (1 + v_i v_j) g_ij + sum (1 - v_i v_j) h_ij is convex
    for every unit v.
    """
    p = len(entries)
    if p == 0 or any(len(row) != p for row in entries):
        raise ValueError("entries must form a nonempty square array")
    h0 = entries[0][0].h
    if all(same_function(entries[i][j].h, h0) for i in range(p) for j in range(p)):
        return MatrixMap([[entries[i][j].u for j in range(p)] for i in range(p)], h0, domain)
    parts = []
    for i in range(p):
        for j in range(p):
            parts.extend([(1.0, entries[i][j].u), (1.0, entries[i][j].h)])
    H = linear_combination(parts)
    us = [[None] * p for _ in range(p)]
    for i in range(p):
        for j in range(i, p):
            f = entries[i][j]
            us[i][j] = us[j][i] = linear_combination([(1.0, f.u), (-1.0, f.h)] + parts)
    return MatrixMap(us, H, domain)


def _unit_directions(p: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Coordinate vectors, normalized pair sums and differences, then random unit vectors."""
    rows = [np.eye(p)[i] for i in range(p)]
    for i in range(p):
        for j in range(i + 1, p):
            for sign in (1.0, -1.0):
                v = np.zeros(p)
                v[i], v[j] = 1.0, sign
                rows.append(v / np.sqrt(2.0))
    if samples > 0:
        R = rng.standard_normal((samples, p))
        rows.extend(R / np.linalg.norm(R, axis=1, keepdims=True))
    return np.vstack(rows)


def validate_matrix_map(M: MatrixMap, grid: Optional[np.ndarray] = None, sphere_samples: int = 32,
                        opts: Optional[Options] = None) -> BdcReport:
    """v'Phi v + h convex for sampled unit vectors v: exact when representable,
    else a midpoint test over the grid."""
    opts = opts or Options()
    rng = np.random.default_rng(opts.seed)
    grid = default_grid(M.vector_map, opts.validation_points) if grid is None else np.atleast_2d(grid)
    hv = M.h.canonical().evaluate_many
    checks: List[BdcVertexCheck] = []
    for v in _unit_directions(M.p, sphere_samples, rng):
        try:
            M.quadratic_form(v)
            checks.append(BdcVertexCheck(v.tolist(), True, 0.0))
            continue
        except NotRepresentable:
            pass
        w = M.weights(np.outer(v, v))

        def values(X, w=w):
            return M.vector_map.evaluate_many(X) @ w + hv(X)

        checks.append(BdcVertexCheck(v.tolist(), False, midpoint_violation(values, grid, rng)))
    worst = max(checks, key=lambda c: c.violation)
    passed = worst.violation <= max(opts.tol, 1e-9)
    if not passed:
        logger.info(f"matrix map validation failed: violation {worst.violation:.3g} at v={worst.vertex}")
    return BdcReport(passed, worst.violation, worst.vertex, checks,
                     control_domain_violations=sum(p.domain_violations(grid) for p in M.vector_map.components))


# ---- eigenvalue functions ----

def _finite_matrix(M: MatrixMap, x) -> np.ndarray:
    F = M.evaluate(x)
    if not np.all(np.isfinite(F)):
        raise InfiniteValue(f"x={as_vector(x).tolist()} is outside dom Phi")
    return F


def eigen_value_funcs(M: MatrixMap, x, k: int) -> Tuple[float, float]:
    """(k-th largest eigenvalue, sum of the k largest) of Phi(x)."""
    if not 1 <= k <= M.p:
        raise ValueError(f"k must be in [1, {M.p}], got {k}")
    _, vals = sym_eig(_finite_matrix(M, x))
    return float(vals[k - 1]), float(np.sum(vals[:k]))


def _subspace_ascent(F: np.ndarray, U: np.ndarray, steps: int = ASCENT_STEPS) -> np.ndarray:
    """Orthogonal iteration on F + cI, which keeps the top-k invariant subspace attractive."""
    shift = np.linalg.norm(F, ord=1) + 1.0
    G = F + shift * np.eye(F.shape[0])
    for _ in range(steps):
        U, _ = np.linalg.qr(G @ U)
    return U


def top_k_projection_check(M: MatrixMap, x, k: int, samples: int = 64,
                           opts: Optional[Options] = None) -> Dict[str, float]:
    """Compare Lambda_k(x) with the best <P, Phi(x)> over sampled rank-k projections P = UU'."""
    opts = opts or Options()
    rng = np.random.default_rng(opts.seed)
    F = _finite_matrix(M, x)
    _, big = eigen_value_funcs(M, x, k)
    best, best_U = -np.inf, None
    for _ in range(samples):
        U = np.linalg.qr(rng.standard_normal((M.p, k)))[0]
        val = float(np.trace(U.T @ F @ U))
        if val > best:
            best, best_U = val, U
    U = _subspace_ascent(F, best_U)
    refined = float(np.trace(U.T @ F @ U))
    sampled = max(best, refined)
    return {"Lambda_k": big, "projection_max": sampled, "gap": abs(big - sampled)}


def scalarization_equiv_check(M: MatrixMap, x, sphere_samples: int = 1000,
                              opts: Optional[Options] = None) -> float:
    """|max over trace-one PSD A of <A, Phi(x)> + h(x) - max over unit v of v'Phi(x)v + h(x)|.

    The left side is the top eigenvalue plus h(x); the right side is a
    sphere sample refined by power iteration.
    """
    opts = opts or Options()
    rng = np.random.default_rng(opts.seed)
    F = _finite_matrix(M, x)
    hx = M.h.evaluate(x)
    _, vals = sym_eig(F)
    lhs = float(vals[0]) + hx
    V = rng.standard_normal((sphere_samples, M.p))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    forms = np.einsum("ij,jk,ik->i", V, F, V)
    v0 = V[int(np.argmax(forms))][:, None]
    v = _subspace_ascent(F, v0)[:, 0]
    rhs = max(float(np.max(forms)), float(v @ F @ v)) + hx
    return abs(lhs - rhs)


# ---- constraint and local certificate ----

class SdpConstraint:
    """Phi(x) negative semidefinite."""

    def __init__(self, M: MatrixMap):
        self.M = M
        self.Phi = M.vector_map

    def value(self, x) -> float:
        """Largest eigenvalue of Phi(x); feasible iff <= 0."""
        F = self.M.evaluate(x)
        if not np.all(np.isfinite(F)):
            return np.inf
        return float(sym_eig(F)[1][0])

    def feasible(self, x, tol: float = 1e-9) -> bool:
        return self.value(x) <= tol


@dataclass
class SdpMultiplier:
    """0 in d^phi(x_bar) + eta * grad <A, Phi>(x_bar) + N_Q(x_bar), Tr A = 1, A PSD."""

    found: bool
    A: Optional[SymMatrix] = None
    eta: float = 0.0
    kernel_dim: int = 0
    complementarity: float = 0.0
    eigvec_residual: float = 0.0
    gap: float = 0.0
    qc: bool = True

    def to_dict(self) -> dict:
        return {
            "found": self.found,
            "A": None if self.A is None else self.A.to_list(),
            "eta": self.eta,
            "kernel_dim": self.kernel_dim,
            "complementarity": self.complementarity,
            "eigvec_residual": self.eigvec_residual,
            "gap": self.gap,
            "qc": self.qc,
        }


def _normal_part(Q: Optional[Polytope], x: np.ndarray, active_tol: float):
    """Expression for a generic element of N_Q(x) and its constraints."""
    if Q is None:
        return 0, []
    A, b, Aeq, beq = Q.hrep
    terms, cons = [], []
    active = np.abs(A @ x - b) <= active_tol * (1.0 + np.abs(b)) if A.shape[0] else np.zeros(0, dtype=bool)
    if np.any(active):
        nu = cp.Variable(int(np.sum(active)), nonneg=True, name="normal_nu")
        terms.append(A[active].T @ nu)
    if Aeq.shape[0]:
        nu_eq = cp.Variable(Aeq.shape[0], name="normal_nueq")
        terms.append(Aeq.T @ nu_eq)
    if not terms:
        return 0, cons
    return sum(terms[1:], terms[0]), cons


def _kernel_gradients(M: MatrixMap, x: np.ndarray, V: np.ndarray) -> List[np.ndarray]:
    """Per coordinate k, the r x r matrix V' dPhi/dx_k V."""
    J = M.entry_jacobian(x)
    return [V.T @ J[:, :, k] @ V for k in range(M.n)]


def _gradient_expr(Ms: List[np.ndarray], S) -> cp.Expression:
    return cp.hstack([cp.trace(Mk @ S) for Mk in Ms])


def sdp_qc(M: MatrixMap, Q: Optional[Polytope], x, V: np.ndarray, opts: Options) -> bool:
    """0 not in {grad <V S V', Phi>(x) + N_Q(x) : S PSD, Tr S = 1}."""
    r = V.shape[1]
    Ms = _kernel_gradients(M, x, V)
    S = cp.Variable((r, r), PSD=True, name="qc_S")
    normal, cons = _normal_part(Q, x, opts.active_tol)
    cons = cons + [cp.trace(S) == 1]
    problem = cp.Problem(cp.Minimize(cp.norm(_gradient_expr(Ms, S) + normal, "inf")), cons)
    status = solve_program(problem, "sdp-qc", linear=False)
    if status == INFEASIBLE:
        return True
    return problem.value > value_tol(opts.tol, False)


def sdp_check_local(M: MatrixMap, objective: DCPair, Q: Optional[Polytope], xbar,
                    opts: Optional[Options] = None) -> SdpMultiplier:
    """Multiplier eta * A at x_bar with A supported on the kernel of Phi(x_bar).

    Raises Infeasible, QCViolated, or NotDifferentiable when an entry or a
    control is not differentiable at x_bar.
    """
    opts = opts or Options()
    x = as_vector(xbar, M.n)
    if Q is not None and not Q.contains(x):
        raise Infeasible(f"x={x.tolist()} is outside Q")
    F = _finite_matrix(M, x)
    Qv, vals = sym_eig(F)
    if vals[0] > opts.active_tol:
        raise Infeasible(f"Phi(x) has eigenvalue {vals[0]:.6g} > 0 at x={x.tolist()}")
    V = Qv[:, np.abs(vals) <= opts.active_tol]
    r = V.shape[1]
    if r and not sdp_qc(M, Q, x, V, opts):
        raise QCViolated(f"the qualification fails on the {r}-dimensional kernel at x={x.tolist()}")

    u = objective.u if Q is None else Sum([objective.u, IndicatorPoly(Q)])
    can = u.canonical()
    s = cp.Variable(M.n, name="objective_subgradient")
    target = grad(objective.h, x)
    cons = []
    W = None
    if r:
        W = cp.Variable((r, r), PSD=True, name="kernel_multiplier")
        target = target - _gradient_expr(_kernel_gradients(M, x, V), W)
    cons.append(s == target)
    cost, conj_cons = conjugate_terms(can, s, 1.0, "sdp")
    cons.extend(conj_cons)
    problem = cp.Problem(cp.Minimize(cost + u.evaluate(x) - s @ x), cons)
    status = solve_program(problem, "sdp-multiplier", linear=False)
    if status == INFEASIBLE or problem.value > value_tol(opts.tol, False):
        gap = np.inf if status == INFEASIBLE else float(problem.value)
        logger.info(f"sdp: no multiplier at x={x.tolist()} (gap {gap:.3g})")
        return SdpMultiplier(False, kernel_dim=r, gap=gap)
    out = SdpMultiplier(True, kernel_dim=r, gap=float(problem.value))
    if W is not None:
        Wv = (W.value + W.value.T) / 2.0
        eta = float(np.trace(Wv))
        if eta > 1e-10:
            A = V @ (Wv / eta) @ V.T
            out.A = SymMatrix(A)
            out.eta = eta
            out.complementarity = abs(out.A.inner(F))
            out.eigvec_residual = float(max(abs(v @ F @ v) for v in V.T))
    return out
