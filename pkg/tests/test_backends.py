import cvxpy as cp
import numpy as np
import pytest

from dccert.backends import INFEASIBLE, OPTIMAL, UNBOUNDED, is_linear, solve_lp, solve_program


class TestSolveLp:
    def test_vertex(self):
        # min -x - y  s.t.  x + y <= 1, x, y >= 0
        res = solve_lp([-1.0, -1.0], [[1.0, 1.0]], [1.0], bounds=[(0, None), (0, None)])
        assert res.status == OPTIMAL
        assert res.fun == pytest.approx(-1.0)

    def test_equality(self):
        res = solve_lp([1.0, 2.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], bounds=[(0, None), (0, None)])
        np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-12)

    def test_infeasible(self):
        res = solve_lp([1.0], [[1.0], [-1.0]], [0.0, -1.0])
        assert res.status == INFEASIBLE
        assert res.fun == np.inf
        assert res.x is None

    def test_unbounded(self):
        assert solve_lp([-1.0], bounds=[(0, None)]).status == UNBOUNDED


class TestSolveProgram:
    def test_linear_detection(self):
        x = cp.Variable(2)
        assert is_linear(cp.Problem(cp.Minimize(cp.max(x)), [x >= 0]))
        assert not is_linear(cp.Problem(cp.Minimize(cp.sum_squares(x)), [x >= 0]))

    def test_quadratic(self):
        x = cp.Variable()
        problem = cp.Problem(cp.Minimize(cp.square(x - 1.5)))
        assert solve_program(problem, "test") == OPTIMAL
        assert x.value == pytest.approx(1.5, abs=1e-6)

    def test_linear(self):
        x = cp.Variable()
        problem = cp.Problem(cp.Minimize(cp.abs(x - 1.0)), [x >= 2.0])
        assert solve_program(problem, "test") == OPTIMAL
        assert problem.value == pytest.approx(1.0, abs=1e-8)
