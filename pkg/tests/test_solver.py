import csv

import numpy as np
import pytest

from dccert.certificates import Problem, SetConstraint
from dccert.convex_functions import DCPair, MaxAffine, Quadratic
from dccert.dc_calculus import VectorMap
from dccert.geometry import Polytope
from dccert.sdp import MatrixMap, SdpConstraint
from dccert.solver import CONVERGED, improvement_merit, solve_dca, solve_multistart, write_trace_csv


@pytest.fixture
def square_minus_abs():
    """x^2 - 2|x| on [-3, 3]; minima at x = -1 and x = 1."""
    objective = DCPair(Quadratic.squared_norm(1), MaxAffine.abs(scale=2.0))
    constraint = SetConstraint(VectorMap.affine([[1.0]]), Polytope.box([-3.0], [3.0]), [0.0])
    return Problem(objective, constraint)


class TestSolveDca:
    def test_feasible_start(self, abs_on_interval, opts):
        trace = solve_dca(abs_on_interval, [3.0], opts)
        assert trace.status == CONVERGED
        assert len(trace.iterates) - 1 <= 2
        assert trace.final == pytest.approx([1.0], abs=1e-6)
        assert trace.best_feasible.objective == pytest.approx(1.0, abs=1e-6)

    def test_infeasible_start(self, abs_on_interval, opts):
        trace = solve_dca(abs_on_interval, [0.0], opts)
        assert not trace.iterates[0].feasible
        assert trace.iterates[0].merit == pytest.approx(1.0)
        assert trace.iterates[0].alpha is None
        assert trace.final == pytest.approx([1.0], abs=1e-6)

    def test_dc_objective(self, square_minus_abs, opts):
        trace = solve_dca(square_minus_abs, [0.1], opts)
        assert trace.final == pytest.approx([1.0], abs=1e-6)

    def test_merit_non_increasing(self, square_minus_abs, opts):
        trace = solve_dca(square_minus_abs, [2.5], opts)
        merits = [it.merit for it in trace.iterates]
        assert all(b <= a + 1e-8 for a, b in zip(merits, merits[1:]))

    def test_step_decreases_improvement_function(self, square_minus_abs, opts):
        trace = solve_dca(square_minus_abs, [2.5], opts)
        assert len(trace.iterates) > 2
        for cur, nxt in zip(trace.iterates, trace.iterates[1:]):
            assert improvement_merit(square_minus_abs, nxt.x, cur.alpha) <= \
                improvement_merit(square_minus_abs, cur.x, cur.alpha) + 1e-7

    @pytest.mark.parametrize("x0", [2.5, 0.1, -2.0])
    def test_alpha_never_increases(self, square_minus_abs, opts, x0):
        trace = solve_dca(square_minus_abs, [x0], opts)
        alphas = [it.alpha for it in trace.iterates]
        assert None not in alphas
        assert all(b <= a for a, b in zip(alphas, alphas[1:]))
        assert alphas[-1] == pytest.approx(-1.0, abs=1e-6)

    def test_alpha_is_best_feasible_value(self, square_minus_abs, opts):
        trace = solve_dca(square_minus_abs, [2.5], opts)
        for k, it in enumerate(trace.iterates):
            assert it.alpha == min(p.objective for p in trace.iterates[:k + 1] if p.feasible)

    def test_needs_polyhedral_constraint(self, opts):
        zero = MaxAffine.affine([0.0])
        M = MatrixMap([[MaxAffine.affine([1.0], -1.0), zero], [zero, MaxAffine.affine([-1.0], -1.0)]],
                      Quadratic.zero(1))
        P = Problem(DCPair(MaxAffine.abs(), Quadratic.zero(1)), SdpConstraint(M))
        with pytest.raises(TypeError):
            solve_dca(P, [0.0], opts)

    def test_report(self, abs_on_interval, opts):
        out = solve_dca(abs_on_interval, [3.0], opts).to_dict()
        assert out["status"] == CONVERGED
        assert out["iterations"] == len(out["merits"]) - 1
        assert len(out["alphas"]) == len(out["merits"])
        assert out["alphas"][0] == pytest.approx(3.0)


class TestMultistart:
    def test_best_of_symmetric_starts(self, square_minus_abs, opts):
        best, traces = solve_multistart(square_minus_abs, [[-0.5], [0.5]], opts)
        assert len(traces) == 2
        assert best.best_feasible.objective == pytest.approx(-1.0, abs=1e-6)
        np.testing.assert_allclose(np.abs(traces[0].final), [1.0], atol=1e-6)


class TestTraceCsv:
    def test_header_and_rows(self, abs_on_interval, opts, tmp_path):
        trace = solve_dca(abs_on_interval, [3.0], opts)
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, str(path))
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["iter", "merit", "alpha", "objective", "feasible", "x1"]
        assert len(rows) == len(trace.iterates) + 1
        # feasible start: the level is phi(x0) = 3 and the merit max(0, f(x0)) = 0
        assert float(rows[1][1]) == pytest.approx(0.0)
        assert float(rows[1][2]) == pytest.approx(3.0)
        assert float(rows[1][3]) == pytest.approx(3.0)

    def test_alpha_empty_until_feasible(self, abs_on_interval, opts, tmp_path):
        path = tmp_path / "trace.csv"
        write_trace_csv(solve_dca(abs_on_interval, [0.0], opts), str(path))
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[1][2] == ""
        assert float(rows[-1][2]) == pytest.approx(1.0, abs=1e-6)
