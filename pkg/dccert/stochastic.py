"""
Expected-value DC functionals over a finite sample space.

    I(x) = sum_w p_w phi_w(x),   phi_w = u_w - h_w

With every control h_w differentiable at x_bar the regular subdifferential
of I is the weighted sum of the regular subdifferentials of the phi_w plus
the normal cone of the common domain, which one GapProgram solve with fixed
weights decides.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .certificates import LocalMultipliers, Problem, check_local_necessary
from .config import DEFAULT_TOL, Options
from .convex_functions import ConvexFunc, DCPair, GapProgram, as_vector, grad, linear_combination
from .errors import ImproperSum, NotDifferentiable, NotDifferentiableControl

logger = logging.getLogger(__name__)

Term = Tuple[float, DCPair]


@dataclass
class ExpectedFunctional:
    """Weighted finite sum of DC functions of a common dimension."""

    terms: List[Term]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("an expected functional needs at least one term")
        dims = {f.dim for _, f in self.terms}
        if len(dims) != 1:
            raise ValueError(f"terms have mixed dimensions {sorted(dims)}")
        for k, (w, _) in enumerate(self.terms):
            if w < 0:
                raise ValueError(f"term {k} has negative weight {w}")
        self.terms = [(float(w), f) for w, f in self.terms]

    @property
    def dim(self) -> int:
        return self.terms[0][1].dim

    @property
    def support(self) -> List[Term]:
        return [(w, f) for w, f in self.terms if w > 0]

    def evaluate(self, x) -> float:
        return float(sum(w * f.evaluate(x) for w, f in self.support))

    def aggregate(self) -> DCPair:
        """The single DC pair (sum p_w u_w, sum p_w h_w)."""
        terms = self.support
        u = linear_combination([(w, f.u) for w, f in terms])
        h = linear_combination([(w, f.h) for w, f in terms])
        return DCPair(u, h)


def _control_gradient_sum(terms: Sequence[Term], x: np.ndarray) -> np.ndarray:
    total = np.zeros(x.size)
    for k, (w, f) in enumerate(terms):
        try:
            total += w * grad(f.h, x)
        except NotDifferentiable as exc:
            raise NotDifferentiableControl(f"control of term {k} is not differentiable at x={x.tolist()}") from exc
    return total


def expected_subdiff_contains(terms: Sequence[Term], xbar, xs, tol: float = DEFAULT_TOL) -> bool:
    """x* in sum_w p_w d^phi_w(x_bar) + N_D(x_bar).

    Raises ImproperSum when the functional is +inf at x_bar.
    """
    I = terms if isinstance(terms, ExpectedFunctional) else ExpectedFunctional(list(terms))
    x = as_vector(xbar, I.dim)
    xs = as_vector(xs, I.dim)
    if not np.isfinite(I.evaluate(x)):
        raise ImproperSum(f"the expected functional is +inf at x={x.tolist()}")
    support = I.support
    if not support:
        return bool(np.linalg.norm(xs, np.inf) <= tol)
    shift = _control_gradient_sum(support, x)
    pieces: List[ConvexFunc] = [f.u for _, f in support]
    weights = np.array([w for w, _ in support])
    program = GapProgram(pieces, x, weights=weights)
    res = program.solve(xs + shift)
    logger.debug(f"expected subdifferential gap at x={x.tolist()}: {res.value:.3g}")
    return bool(res.value <= program.tolerance(tol))


def stochastic_check_local(terms: Sequence[Term], constraint, xbar, Q=None,
                           opts: Optional[Options] = None) -> LocalMultipliers:
    """Local multipliers for min sum_w p_w phi_w subject to the constraint."""
    I = terms if isinstance(terms, ExpectedFunctional) else ExpectedFunctional(list(terms))
    problem = Problem(I.aggregate(), constraint, Q, name="expected")
    return check_local_necessary(problem, xbar, opts)
