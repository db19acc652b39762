import numpy as np
import pytest

from dccert.errors import EmptySet, NotInterior
from dccert.geometry import (PolyCone, Polytope, convert, dual_slope, eps_normal_set_contains,
                             minkowski_diff_contains, positive_polar, same_polytope, support)


def _sorted(V):
    V = np.asarray(V)
    return V[np.lexsort(V.T[::-1])]


class TestConvert:
    def test_interval_endpoints(self):
        P = convert(Polytope.from_hrep([[1.0], [-1.0]], [1.0, 1.0]))
        np.testing.assert_allclose(_sorted(P.vertices), [[-1.0], [1.0]])

    def test_square_vertices(self):
        P = convert(Polytope.box([-1.0, -1.0], [1.0, 1.0]))
        np.testing.assert_allclose(_sorted(P.vertices), [[-1, -1], [-1, 1], [1, -1], [1, 1]])

    def test_thin_simplex(self):
        P = Polytope.from_hrep(-np.eye(2), np.zeros(2), Aeq=[[1.0, 1.0]], beq=[1.0])
        np.testing.assert_allclose(_sorted(convert(P).vertices), [[0, 1], [1, 0]], atol=1e-9)

    def test_empty_polytope(self):
        P = Polytope.from_hrep([[1.0], [-1.0]], [0.0, -1.0])
        with pytest.raises(EmptySet):
            convert(P)

    def test_box_rejects_reversed_bounds(self):
        with pytest.raises(EmptySet):
            Polytope.box([1.0], [0.0])


class TestSupport:
    def test_interval(self):
        assert support(Polytope.box([-1.0], [1.0]), [1.0]) == pytest.approx(1.0)

    def test_square(self):
        assert support(Polytope.box([-1.0, -1.0], [1.0, 1.0]), [1.0, 1.0]) == pytest.approx(2.0)

    def test_simplex(self):
        assert support(Polytope.simplex(2), [3.0, 5.0]) == pytest.approx(5.0)

    def test_sublinear(self, rng):
        P = Polytope.from_vertices(rng.normal(size=(12, 3)))
        for _ in range(20):
            d1, d2 = rng.normal(size=3), rng.normal(size=3)
            assert support(P, d1 + d2) <= support(P, d1) + support(P, d2) + 1e-9


class TestMinkowski:
    def test_inside(self):
        assert minkowski_diff_contains(Polytope.box([0.0], [2.0]), Polytope.box([0.0], [1.0]), [0.5])

    def test_outside(self):
        assert not minkowski_diff_contains(Polytope.box([0.0], [2.0]), Polytope.box([0.0], [1.0]), [1.5])

    def test_square(self):
        A = Polytope.box([-1.0, -1.0], [1.0, 1.0])
        B = Polytope.box([-0.25, -0.25], [0.25, 0.25])
        assert minkowski_diff_contains(A, B, [0.5, 0.5])


class TestDualSlope:
    def test_self_polar_interval(self):
        S = dual_slope(Polytope.box([-1.0], [1.0]), [0.0])
        np.testing.assert_allclose(_sorted(S.vertices), [[-1.0], [1.0]])

    def test_shifted_interval(self):
        S = dual_slope(Polytope.box([0.0], [4.0]), [2.0])
        np.testing.assert_allclose(_sorted(S.vertices), [[-0.5], [0.5]])

    def test_square_gives_cross_polytope(self):
        S = dual_slope(Polytope.box([-1.0, -1.0], [1.0, 1.0]), [0.0, 0.0])
        cross = Polytope.from_vertices([[1, 0], [-1, 0], [0, 1], [0, -1]])
        assert same_polytope(S, cross)

    def test_boundary_point_rejected(self):
        with pytest.raises(NotInterior):
            dual_slope(Polytope.box([0.0], [4.0]), [0.0])

    def test_bipolar(self, rng):
        A = Polytope.from_vertices(rng.normal(size=(10, 2)))
        center, _ = A.chebyshev_center()
        shifted = Polytope.from_vertices(A.vertices - center)
        back = dual_slope(dual_slope(shifted, np.zeros(2)), np.zeros(2))
        assert same_polytope(convert(back), shifted, tol=1e-6)


class TestEpsNormal:
    def test_endpoint_normal(self):
        assert eps_normal_set_contains(Polytope.box([-1.0], [1.0]), [1.0], 0.0, [2.0])

    def test_interior_only_zero(self):
        assert not eps_normal_set_contains(Polytope.box([-1.0], [1.0]), [0.0], 0.0, [1.0])

    def test_eps_enlarges(self):
        assert eps_normal_set_contains(Polytope.box([-1.0], [1.0]), [0.0], 1.0, [1.0])

    def test_outside_point(self):
        assert not eps_normal_set_contains(Polytope.box([-1.0], [1.0]), [2.0], 5.0, [0.0])


class TestPositivePolar:
    def test_orthant_self_dual(self):
        Kp = positive_polar(PolyCone.orthant(2))
        assert Kp.contains([1.0, 2.0])
        assert not Kp.contains([-1.0, 0.5])

    def test_ray_gives_halfplane(self):
        Kp = positive_polar(PolyCone.from_generators([[1.0, 1.0]]))
        assert Kp.contains([2.0, -1.0])
        assert not Kp.contains([-1.0, -1.0])

    def test_zero_cone_gives_whole_space(self):
        Kp = positive_polar(PolyCone.from_generators([[0.0, 0.0]]))
        assert Kp.contains([-3.0, 5.0])
