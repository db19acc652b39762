import pytest

from dccert.convex_functions import DCPair, IndicatorPoly, MaxAffine, Quadratic, Sum, regular_subdiff_contains
from dccert.errors import ImproperSum, NotDifferentiableControl
from dccert.geometry import Polytope
from dccert.stochastic import ExpectedFunctional, expected_subdiff_contains, stochastic_check_local


def abs_pair():
    return DCPair(MaxAffine.abs(), Quadratic.zero(1))


def square_pair():
    return DCPair(Quadratic.squared_norm(1), Quadratic.zero(1))


class TestExpectedFunctional:
    def test_evaluate(self):
        I = ExpectedFunctional([(0.5, abs_pair()), (0.5, square_pair())])
        assert I.evaluate([2.0]) == pytest.approx(3.0)

    def test_zero_weight_dropped(self):
        I = ExpectedFunctional([(1.0, abs_pair()), (0.0, square_pair())])
        assert len(I.support) == 1

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            ExpectedFunctional([(-0.5, abs_pair())])

    def test_mixed_dimensions(self):
        with pytest.raises(ValueError):
            ExpectedFunctional([(0.5, abs_pair()), (0.5, DCPair(Quadratic.squared_norm(2), Quadratic.zero(2)))])

    def test_aggregate(self):
        I = ExpectedFunctional([(0.5, abs_pair()), (0.5, DCPair(Quadratic.squared_norm(1), MaxAffine.abs()))])
        agg = I.aggregate()
        for x in (-2.0, -0.3, 0.0, 1.7):
            assert agg.evaluate([x]) == pytest.approx(I.evaluate([x]))


class TestExpectedSubdiff:
    def test_weighted_sum_of_gradients(self):
        terms = [(0.5, abs_pair()), (0.5, square_pair())]
        assert expected_subdiff_contains(terms, [1.0], [1.5])
        assert not expected_subdiff_contains(terms, [1.0], [3.0])

    def test_kink_interval(self):
        terms = [(0.5, abs_pair()), (0.5, square_pair())]
        assert expected_subdiff_contains(terms, [0.0], [0.5])
        assert not expected_subdiff_contains(terms, [0.0], [0.6])

    @pytest.mark.parametrize("x, xs", [(0.0, 0.5), (0.0, 1.5), (2.0, 1.0), (2.0, -1.0)])
    def test_single_term_is_regular_subdiff(self, x, xs):
        f = MaxAffine.abs()
        assert expected_subdiff_contains([(1.0, abs_pair())], [x], [xs]) == regular_subdiff_contains(f, [x], [xs])

    def test_improper_sum(self):
        bounded = DCPair(Sum([MaxAffine.abs(), IndicatorPoly(Polytope.box([0.0], [1.0]))]), Quadratic.zero(1))
        with pytest.raises(ImproperSum):
            expected_subdiff_contains([(0.5, bounded), (0.5, abs_pair())], [2.0], [0.0])

    def test_nonsmooth_control(self):
        terms = [(1.0, DCPair(Quadratic.squared_norm(1), MaxAffine.abs()))]
        with pytest.raises(NotDifferentiableControl):
            expected_subdiff_contains(terms, [0.0], [0.0])


class TestStochasticLocal:
    def test_constrained_multiplier(self, abs_on_interval, opts):
        terms = [(0.5, abs_pair()), (0.5, abs_pair())]
        mult = stochastic_check_local(terms, abs_on_interval.constraint, [1.0], opts=opts)
        assert mult.found
        assert mult.lam == pytest.approx([-1.0], abs=1e-6)

    def test_interior_point(self, abs_on_interval, opts):
        terms = [(0.5, abs_pair()), (0.5, square_pair())]
        assert not stochastic_check_local(terms, abs_on_interval.constraint, [2.0], opts=opts).found
