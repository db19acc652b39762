import numpy as np
import pytest

from dccert.certificates import (FAILS, HOLDS, LOCAL_MIN, NOT_CERTIFIED, OPTIMAL, Problem, SetConstraint,
                                 check_converse, check_global, check_global_sufficient, check_local_necessary,
                                 check_local_sufficient, check_qc, control_intersection_empty, equality_face,
                                 improvement_objective, verify_witness)
from dccert.convex_functions import DCPair, MaxAffine, Quadratic
from dccert.dc_calculus import VectorMap
from dccert.errors import Infeasible, NotDifferentiableControl
from dccert.geometry import Polytope
from dccert.oracle import GridSpec, brute_min


def interval_problem(objective, lo=1.0, hi=3.0, z0=2.0, Q=None):
    constraint = SetConstraint(VectorMap.affine([[1.0]]), Polytope.box([lo], [hi]), [z0])
    return Problem(objective, constraint, Q)


class TestImprovement:
    def test_constraint_function(self, abs_on_interval):
        imp = improvement_objective(abs_on_interval, [1.0])
        assert imp.f([1.0]) == pytest.approx(0.0)
        assert imp.f([3.0]) == pytest.approx(0.0)
        assert imp.f([2.0]) == pytest.approx(-1.0)
        assert imp.f([0.0]) == pytest.approx(1.0)

    def test_reformulated_value_at_optimum(self, abs_on_interval):
        imp = improvement_objective(abs_on_interval, [1.0])
        grid = np.linspace(0.0, 4.0, 401)
        assert min(imp.reformulated_value([x]) for x in grid) == pytest.approx(0.0, abs=1e-12)

    def test_needs_a_level(self, abs_on_interval):
        with pytest.raises(ValueError):
            improvement_objective(abs_on_interval)


class TestGlobal:
    def test_holds_at_optimum(self, abs_on_interval, opts):
        cert = check_global(abs_on_interval, [1.0], opts)
        assert cert.verdict == HOLDS
        assert cert.holds
        assert cert.min_alpha1 > 0
        for w in cert.witnesses:
            assert verify_witness(abs_on_interval, [1.0], w)

    def test_fails_at_interior_point(self, abs_on_interval, opts):
        cert = check_global(abs_on_interval, [2.0], opts)
        assert cert.verdict == FAILS
        assert cert.failure["x_star"] == pytest.approx([0.0])

    @pytest.mark.parametrize("xbar", [1.5, 2.5, 3.0])
    def test_fails_at_perturbed_points(self, abs_on_interval, opts, xbar):
        assert check_global(abs_on_interval, [xbar], opts).verdict == FAILS

    def test_infeasible_point(self, abs_on_interval, opts):
        with pytest.raises(Infeasible):
            check_global(abs_on_interval, [0.0], opts)

    def test_zero_control_tests_only_origin(self, abs_on_interval, opts):
        cert = check_global(abs_on_interval, [1.0], opts)
        assert cert.meta["exact_test_points"]
        assert {tuple(w.x_star) for w in cert.witnesses} == {(0.0,)}

    def test_abstract_set_active(self, opts):
        P = interval_problem(DCPair(MaxAffine.affine([1.0]), Quadratic.zero(1)), -10.0, 10.0, 0.0,
                             Q=Polytope.box([0.0], [1.0]))
        cert = check_global(P, [0.0], opts)
        assert cert.kind == "global_with_q"
        assert cert.verdict == HOLDS

    def test_abstract_set_interior(self, opts):
        P = interval_problem(DCPair(MaxAffine.affine([1.0]), Quadratic.zero(1)), -10.0, 10.0, 0.0,
                             Q=Polytope.box([0.0], [1.0]))
        assert check_global(P, [0.5], opts).verdict == FAILS

    def test_dc_objective(self, opts):
        # x^2 - 2|x| on [-3, 3] is minimized at x = +-1
        objective = DCPair(Quadratic.squared_norm(1), MaxAffine.abs(scale=2.0))
        P = interval_problem(objective, -3.0, 3.0, 0.0)
        assert check_global(P, [1.0], opts).verdict == HOLDS
        assert check_global(P, [0.0], opts).verdict == FAILS

    def test_objective_control_shared_with_map(self, opts):
        # (x + 2|x|) - 2|x| is x; the affine map has the zero control
        objective = DCPair(MaxAffine([[3.0], [-1.0]], [0.0, 0.0]), MaxAffine.abs(scale=2.0))
        P = interval_problem(objective)
        assert P.constraint.Phi.h is P.objective.h
        x, value, _ = brute_min(P, GridSpec(Polytope.box([0.0], [4.0]), 401))
        assert x == pytest.approx([1.0])
        assert value == pytest.approx(1.0)
        assert check_global(P, [1.0], opts).verdict == HOLDS
        assert check_global(P, [2.0], opts).verdict == FAILS

    def test_both_controls_merged(self, opts):
        # Phi = (x + x^2) - x^2 is x; the merged control is 2|x| + x^2
        objective = DCPair(MaxAffine([[3.0], [-1.0]], [0.0, 0.0]), MaxAffine.abs(scale=2.0))
        Phi = VectorMap([Quadratic(2.0 * np.eye(1), [1.0])], Quadratic.squared_norm(1))
        P = Problem(objective, SetConstraint(Phi, Polytope.box([1.0], [3.0]), [2.0]))
        assert P.constraint.Phi.h is P.objective.h
        assert P.objective.evaluate([2.5]) == pytest.approx(2.5)
        assert P.constraint.Phi.finite_value([2.5]) == pytest.approx([2.5])
        assert check_global(P, [1.0], opts).verdict == HOLDS
        assert check_global(P, [2.0], opts).verdict == FAILS

    def test_sufficient_with_floor(self, abs_on_interval, opts):
        cert = check_global_sufficient(abs_on_interval, [1.0], 0.1, opts)
        assert cert.verdict == OPTIMAL
        assert cert.meta["eps0"] == 0.1

    def test_sufficient_rejects_nonpositive_floor(self, abs_on_interval, opts):
        with pytest.raises(ValueError):
            check_global_sufficient(abs_on_interval, [1.0], 0.0, opts)

    def test_check_converse(self, abs_on_interval, opts):
        report = check_converse(abs_on_interval, [1.0], box=([0.0], [4.0]), opts=opts)
        assert report.points > 0
        assert report.failures == []
        assert report.eta_bar_estimate == pytest.approx(0.0)


class TestLocal:
    def test_multipliers_at_boundary_optimum(self, abs_on_interval, opts):
        mult = check_local_necessary(abs_on_interval, [1.0], opts)
        assert mult.found
        assert mult.lam == pytest.approx([-1.0], abs=1e-6)
        assert mult.qc
        assert mult.cone_multiplier == pytest.approx(1.0, abs=1e-5)
        assert mult.complementarity == pytest.approx(0.0, abs=1e-6)
        assert mult.normal_ok

    def test_interior_stationary_point(self, opts):
        P = interval_problem(DCPair(Quadratic.squared_norm(1), Quadratic.zero(1)), -1.0, 1.0, 0.0)
        mult = check_local_necessary(P, [0.0], opts)
        assert mult.found
        assert mult.alpha[0] == pytest.approx(1.0, abs=1e-6)
        assert mult.face_size == 0

    def test_no_multiplier_at_nonstationary_point(self, linear_on_interval, opts):
        assert not check_local_necessary(linear_on_interval, [2.0], opts).found

    def test_infeasible(self, abs_on_interval, opts):
        with pytest.raises(Infeasible):
            check_local_necessary(abs_on_interval, [5.0], opts)

    def test_nonsmooth_control(self, opts):
        objective = DCPair(Quadratic.squared_norm(1), MaxAffine.abs(scale=2.0))
        P = interval_problem(objective, -3.0, 3.0, 0.0)
        with pytest.raises(NotDifferentiableControl):
            check_local_necessary(P, [0.0], opts)

    def test_equality_face(self, abs_on_interval, opts):
        face = equality_face(abs_on_interval.constraint, np.array([1.0]), opts.active_tol)
        np.testing.assert_allclose(face, [[-1.0]])
        assert equality_face(abs_on_interval.constraint, np.array([2.0]), opts.active_tol).shape[0] == 0

    def test_qc(self, abs_on_interval, opts):
        assert check_qc(abs_on_interval, [1.0], opts)
        assert check_qc(abs_on_interval, [2.0], opts)

    def test_qc_fails_for_constant_map(self, opts):
        Phi = VectorMap.affine([[0.0]], [1.0])
        P = Problem(DCPair(MaxAffine.abs(), Quadratic.zero(1)),
                    SetConstraint(Phi, Polytope.box([0.0], [1.0]), [0.5]))
        assert not check_qc(P, [0.0], opts)


class TestSufficient:
    def test_local_min(self, abs_on_interval, opts):
        result = check_local_sufficient(abs_on_interval, [1.0], opts)
        assert result.verdict == LOCAL_MIN
        assert result.intersection_empty

    def test_not_certified(self, linear_on_interval, opts):
        result = check_local_sufficient(linear_on_interval, [2.0], opts)
        assert result.verdict == NOT_CERTIFIED

    def test_intersection(self, abs_on_interval, opts):
        assert control_intersection_empty(abs_on_interval, [1.0], opts)

    def test_report_shape(self, abs_on_interval, opts):
        out = check_local_sufficient(abs_on_interval, [1.0], opts).to_dict()
        assert out["verdict"] == LOCAL_MIN
        assert out["inclusion"]["verdict"] == HOLDS


class TestGoldenCorpus:
    def test_brute_force_agrees(self, golden_case, opts):
        x, value, _ = brute_min(golden_case.problem, GridSpec(golden_case.box, 61), opts=opts)
        assert value >= golden_case.value - 1e-9
        assert value <= golden_case.value + 0.05
        assert min(np.linalg.norm(x - np.asarray(o)) for o in golden_case.optima) <= 0.1

    def test_holds_at_optimum(self, golden_case, opts):
        for xbar in golden_case.optima:
            assert check_global(golden_case.problem, xbar, opts).verdict == HOLDS

    def test_fails_at_perturbed_points(self, golden_case, opts):
        P = golden_case.problem
        for xbar in golden_case.perturbed:
            assert P.feasible(xbar)
            assert P.objective.evaluate(xbar) > golden_case.value + 0.1
            assert check_global(P, xbar, opts).verdict == FAILS
