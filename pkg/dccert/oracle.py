"""
Brute-force ground truth for the certificate modules.

Nothing here calls the conjugate / eps-subdifferential machinery: feasibility
is read off the raw H-representation (polytopes), nonnegative least squares
over the generators (cones) or numpy's eigvalsh (semidefinite constraints),
and subgradient inequalities are tested pointwise on samples.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import nnls

from .certificates import Problem, SetConstraint
from .config import DEFAULT_GRID_POINTS, MAX_GRID_POINTS, Options
from .conic import ConeConstraint
from .convex_functions import as_vector
from .errors import DomainBoundary, NoFeasiblePoint
from .geometry import PolyCone, Polytope
from .sdp import SdpConstraint
from .workers import map_parallel

logger = logging.getLogger(__name__)

# Grid points handed to one worker
CHUNK = 20000


@dataclass
class GridSpec:
    """Axis-aligned grid over the bounding box of `box`."""

    box: Polytope
    points_per_dim: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        if self.points_per_dim < 2:
            raise ValueError(f"points_per_dim must be >= 2, got {self.points_per_dim}")
        if self.total > MAX_GRID_POINTS:
            raise ValueError(f"grid of {self.total} points exceeds the {MAX_GRID_POINTS} point limit")

    @property
    def total(self) -> int:
        return self.points_per_dim ** self.box.dim

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        V = self.box.vertices
        return V.min(axis=0), V.max(axis=0)

    def points(self) -> np.ndarray:
        lo, hi = self.bounds()
        axes = [np.linspace(lo[i], hi[i], self.points_per_dim) for i in range(self.box.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


# ---- independent feasibility ----

def polytope_contains(P: Polytope, z, tol: float = 1e-9) -> bool:
    A, b, Aeq, beq = P.hrep
    z = np.ravel(z)
    if A.shape[0] and np.any(A @ z > b + tol * (1.0 + np.abs(b))):
        return False
    return not (Aeq.shape[0] and np.any(np.abs(Aeq @ z - beq) > tol * (1.0 + np.abs(beq))))


def cone_contains(K: PolyCone, y, tol: float = 1e-9) -> bool:
    """y in cone(generators) + lineality, by nonnegative least squares."""
    y = np.ravel(y)
    G = K.generators
    L = K.lineality()
    cols = [G.T] if G.size else []
    if L.size:
        cols.extend([L, -L])
    if not cols:
        return bool(np.linalg.norm(y) <= tol)
    _, residual = nnls(np.hstack(cols), y)
    return residual <= tol * (1.0 + np.linalg.norm(y)) * 10.0


def psd_max_eig(F) -> float:
    return float(np.max(np.linalg.eigvalsh(0.5 * (F + F.T))))


def constraint_feasible(P: Problem, x, tol: float = 1e-9) -> bool:
    if P.Q is not None and not polytope_contains(P.Q, x, tol):
        return False
    con = P.constraint
    if isinstance(con, SdpConstraint):
        F = con.M.evaluate(x)
        return bool(np.all(np.isfinite(F))) and psd_max_eig(F) <= tol
    z = con.Phi.evaluate(x)
    if not np.all(np.isfinite(z)):
        return False
    if isinstance(con, SetConstraint):
        return polytope_contains(con.C, z, tol)
    if isinstance(con, ConeConstraint):
        return cone_contains(con.K, -z, tol)
    raise TypeError(f"unsupported constraint {type(con).__name__}")


def _objective_values(P: Problem, X: np.ndarray) -> np.ndarray:
    u = P.objective.u.canonical().evaluate_many(X)
    h = P.objective.h.canonical().evaluate_many(X)
    out = np.full(X.shape[0], np.inf)
    ok = np.isfinite(u) & np.isfinite(h)
    out[ok] = u[ok] - h[ok]
    return out


def _scan(P: Problem, X: np.ndarray, tol: float, threads: int) -> Tuple[np.ndarray, np.ndarray]:
    chunks = [X[i:i + CHUNK] for i in range(0, X.shape[0], CHUNK)]

    def run(chunk):
        vals = _objective_values(P, chunk)
        feas = np.array([np.isfinite(v) and constraint_feasible(P, x, tol) for x, v in zip(chunk, vals)])
        return vals, feas

    results = map_parallel(run, chunks, threads)
    return np.concatenate([r[0] for r in results]), np.concatenate([r[1] for r in results])


def brute_min(P: Problem, G: GridSpec, tol: float = 1e-9,
              opts: Optional[Options] = None) -> Tuple[np.ndarray, float, int]:
    """(x_min, value, feasible_count) over the grid; NoFeasiblePoint when none is feasible."""
    opts = opts or Options()
    X = G.points()
    vals, feas = _scan(P, X, tol, opts.threads)
    count = int(np.sum(feas))
    if count == 0:
        raise NoFeasiblePoint(f"none of the {X.shape[0]} grid points is feasible")
    idx = np.flatnonzero(feas)[int(np.argmin(vals[feas]))]
    logger.info(f"brute force: {count} feasible of {X.shape[0]}, min {vals[idx]:.12g} at {X[idx].tolist()}")
    return X[idx], float(vals[idx]), count


def brute_local_min(P: Problem, xbar, radius: float = 1e-2, points: int = 1000, tol: float = 1e-6,
                    opts: Optional[Options] = None) -> Tuple[bool, np.ndarray, float]:
    """Grid search in the radius box around x_bar: (no improvement > tol, best x, best value)."""
    opts = opts or Options()
    xbar = as_vector(xbar, P.dim)
    per_dim = max(2, int(round(points ** (1.0 / P.dim))))
    G = GridSpec(Polytope.box(xbar - radius, xbar + radius), per_dim)
    X = np.vstack([G.points(), xbar])
    vals, feas = _scan(P, X, 1e-9, opts.threads)
    base = P.objective.evaluate(xbar)
    if not np.any(feas):
        return True, xbar, base
    idx = np.flatnonzero(feas)[int(np.argmin(vals[feas]))]
    return bool(vals[idx] >= base - tol), X[idx], float(vals[idx])


def subdiff_definition_check(f: Callable[[np.ndarray], float], x, xs, eps: float, samples,
                             tol: float = 1e-9) -> bool:
    """<x*, y - x> <= f(y) - f(x) + eps on every sampled y; True means "not refuted"."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    fx = f(x)
    if not np.isfinite(fx):
        raise ValueError(f"f is not finite at x={x.tolist()}")
    Y = np.atleast_2d(np.asarray(samples, dtype=float))
    if Y.shape[1] != x.size:
        Y = Y.reshape(-1, x.size)
    for y in Y:
        fy = f(y)
        if not np.isfinite(fy):
            continue
        if float(xs @ (y - x)) > fy - fx + eps + tol:
            return False
    return True


def fd_gradient(f: Callable[[np.ndarray], float], x, step: float = 1e-6) -> np.ndarray:
    """Central differences; DomainBoundary when x +/- step leaves dom f."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.zeros(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = step
        fp, fm = f(x + e), f(x - e)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise DomainBoundary(f"x={x.tolist()} is within {step} of the domain boundary along axis {i}")
        g[i] = (fp - fm) / (2.0 * step)
    return g
