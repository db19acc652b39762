import numpy as np
import pytest

from dccert.convex_functions import (IndicatorPoly, MaxAffine, Quadratic, Sum, conjugate_value,
                                     eps_subdiff_support_point, eps_subdiff_vrep, evaluate, grad, in_eps_subdiff,
                                     linear_combination, regular_subdiff_contains, same_function, subgradient)
from dccert.errors import InfiniteValue, NotDifferentiable, NotRepresentable
from dccert.geometry import Polytope


def square():
    return Quadratic.squared_norm(1)


class TestEvaluate:
    def test_abs(self):
        assert evaluate(MaxAffine.abs(), [2.0]) == pytest.approx(2.0)

    def test_quadratic(self):
        assert evaluate(Quadratic([[2.0]]), [3.0]) == pytest.approx(9.0)

    def test_indicator_outside(self):
        assert evaluate(IndicatorPoly(Polytope.box([0.0], [1.0])), [2.0]) == np.inf

    def test_sum(self):
        f = Sum([square(), MaxAffine.abs()])
        assert f.evaluate([-2.0]) == pytest.approx(6.0)

    def test_non_psd_quadratic_rejected(self):
        with pytest.raises(ValueError):
            Quadratic([[-1.0]])


class TestConjugate:
    def test_abs_inside_dual_ball(self):
        assert conjugate_value(MaxAffine.abs(), [0.5]) == pytest.approx(0.0, abs=1e-7)

    def test_abs_outside_dual_ball(self):
        assert conjugate_value(MaxAffine.abs(), [2.0]) == np.inf

    def test_square(self):
        assert conjugate_value(square(), [2.0]) == pytest.approx(1.0)

    def test_fenchel_young(self, rng):
        f = Sum([square(), MaxAffine.abs()])
        for _ in range(10):
            x, xs = rng.normal(size=1), rng.normal(size=1) * 3
            assert f.evaluate(x) + conjugate_value(f, xs) >= float(xs @ x) - 1e-7


class TestEpsSubdiff:
    def test_abs_at_kink(self):
        assert in_eps_subdiff(MaxAffine.abs(), [0.0], [1.0], 0.0)

    def test_abs_eps_interval(self):
        assert not in_eps_subdiff(MaxAffine.abs(), [1.0], [0.4], 0.5)
        assert in_eps_subdiff(MaxAffine.abs(), [1.0], [0.5], 0.5)

    def test_square_gradient(self):
        assert in_eps_subdiff(square(), [1.0], [2.0], 0.0)

    def test_monotone_in_eps(self):
        f = MaxAffine.abs()
        hits = [in_eps_subdiff(f, [1.0], [0.3], eps) for eps in (0.0, 0.5, 0.7, 1.0, 2.0)]
        assert hits == sorted(hits)

    def test_infinite_value(self):
        f = IndicatorPoly(Polytope.box([0.0], [1.0]))
        with pytest.raises(InfiniteValue):
            in_eps_subdiff(f, [2.0], [0.0], 0.0)

    def test_negative_eps(self):
        with pytest.raises(ValueError):
            in_eps_subdiff(MaxAffine.abs(), [0.0], [0.0], -1.0)


class TestVrep:
    @pytest.mark.parametrize("f, x, eps, expected", [
        (MaxAffine.abs(), 0.0, 0.0, [-1.0, 1.0]),
        (MaxAffine.abs(), 1.0, 0.5, [0.5, 1.0]),
        (MaxAffine([[1.0], [2.0]], [0.0, -1.0]), 1.0, 0.0, [1.0, 2.0]),
    ])
    def test_intervals(self, f, x, eps, expected):
        V = np.sort(eps_subdiff_vrep(f, [x], eps).vertices.ravel())
        np.testing.assert_allclose(V, expected, atol=1e-9)

    def test_agrees_with_membership(self):
        f = MaxAffine([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]], [0.0, 0.0, 0.0])
        x, eps = np.array([0.2, 0.1]), 0.3
        P = eps_subdiff_vrep(f, x, eps)
        for v in P.vertices:
            assert in_eps_subdiff(f, x, v, eps, tol=1e-8)
        outside = P.vertices.mean(axis=0) + 3.0 * (P.vertices[0] - P.vertices.mean(axis=0))
        assert not in_eps_subdiff(f, x, outside, eps)

    def test_rejects_quadratic(self):
        with pytest.raises(NotRepresentable):
            eps_subdiff_vrep(square(), [0.0], 0.1)


class TestGrad:
    def test_square(self):
        np.testing.assert_allclose(grad(square(), [1.0]), [2.0])

    def test_abs_kink(self):
        with pytest.raises(NotDifferentiable):
            grad(MaxAffine.abs(), [0.0])

    def test_sum(self):
        np.testing.assert_allclose(grad(Sum([square(), MaxAffine.abs()]), [-2.0]), [-5.0])

    def test_matches_finite_differences(self, rng):
        f = Sum([Quadratic([[2.0, 0.5], [0.5, 1.0]], [1.0, -1.0]), MaxAffine([[1.0, 2.0], [-1.0, 0.0]], [0.0, 5.0])])
        x = np.array([0.3, -0.2])
        g = grad(f, x)
        for _ in range(20):
            d = rng.normal(size=2)
            fd = (f.evaluate(x + 1e-5 * d) - f.evaluate(x - 1e-5 * d)) / 2e-5
            assert fd == pytest.approx(g @ d, abs=1e-5)

    def test_subgradient_lexicographic(self):
        np.testing.assert_allclose(subgradient(MaxAffine.abs(), [0.0]), [-1.0])


class TestRegular:
    def test_inside(self):
        assert regular_subdiff_contains(MaxAffine.abs(), [0.0], [0.9])

    def test_outside(self):
        assert not regular_subdiff_contains(MaxAffine.abs(), [0.0], [1.1])

    def test_two_dimensional_max(self):
        f = MaxAffine(np.eye(2), np.zeros(2))
        assert regular_subdiff_contains(f, [0.0, 0.0], [0.3, 0.7])

    def test_sum_rule_with_smooth_term(self):
        f = Sum([MaxAffine.abs(), square()])
        for s in (-1.0, 0.0, 0.5, 1.0):
            assert regular_subdiff_contains(f, [0.0], [s])
        assert not regular_subdiff_contains(f, [0.0], [1.5])
        assert regular_subdiff_contains(f, [1.0], [3.0])


class TestLinearCombination:
    def test_cancels_atoms(self):
        f = linear_combination([(1.0, MaxAffine.abs()), (-1.0, MaxAffine.abs()), (1.0, square())])
        assert f.evaluate([2.0]) == pytest.approx(4.0)

    def test_negative_atom(self):
        with pytest.raises(NotRepresentable):
            linear_combination([(-1.0, MaxAffine.abs())])

    def test_negative_quadratic(self):
        with pytest.raises(NotRepresentable):
            linear_combination([(1.0, MaxAffine.abs()), (-1.0, square())])

    def test_same_function(self):
        assert same_function(Quadratic.zero(2), Quadratic.zero(2))
        assert not same_function(Quadratic.zero(1), square())


class TestSupportPoint:
    def test_square_eps_interval(self):
        # eps-subdifferential of x^2 at 0 is [-2 sqrt(eps), 2 sqrt(eps)]
        assert eps_subdiff_support_point(square(), [0.0], 1.0, [1.0]) == pytest.approx([2.0], abs=1e-5)
        assert eps_subdiff_support_point(square(), [0.0], 1.0, [-1.0]) == pytest.approx([-2.0], abs=1e-5)
