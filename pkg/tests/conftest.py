import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import pytest

from dccert.certificates import Problem, SetConstraint
from dccert.config import Options
from dccert.convex_functions import DCPair, MaxAffine, Quadratic
from dccert.dc_calculus import VectorMap
from dccert.geometry import Polytope


@pytest.fixture
def opts():
    """Coarse schedules keep the sweeps fast; tolerances stay at their defaults."""
    return Options(eta_points=6, eta_max=4.0, boundary_samples=4, validation_points=11, threads=1)


@pytest.fixture
def abs_on_interval():
    """min |x| subject to x in [1, 3] (z0 = 2); optimum x = 1, value 1."""
    objective = DCPair(MaxAffine.abs(), Quadratic.zero(1))
    constraint = SetConstraint(VectorMap.affine([[1.0]]), Polytope.box([1.0], [3.0]), [2.0])
    return Problem(objective, constraint, name="abs-on-interval")


@pytest.fixture
def linear_on_interval():
    """min x subject to x in [1, 3]; x = 2 is feasible but not a local minimum."""
    objective = DCPair(MaxAffine.affine([1.0]), Quadratic.zero(1))
    constraint = SetConstraint(VectorMap.affine([[1.0]]), Polytope.box([1.0], [3.0]), [2.0])
    return Problem(objective, constraint, name="linear-on-interval")


@pytest.fixture
def abs_problem_doc():
    return {
        "version": "1",
        "name": "abs-on-interval",
        "problem": {
            "dim": 1,
            "objective": {"u": {"maxaffine": [[1, 0], [-1, 0]]}, "h": {"zero": {}}},
            "constraint": {"set": {"map": {"affine": {"J": [[1]]}},
                                   "C": {"box": {"lo": [1], "hi": [3]}},
                                   "z0": [2]}},
        },
        "options": {"eta_points": 6, "eta_max": 4.0, "boundary_samples": 4, "threads": 1},
    }


@pytest.fixture
def write_doc(tmp_path):
    def write(doc, name="problem.json"):
        path = tmp_path / name
        path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
        return str(path)
    return write


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@dataclass
class GoldenCase:
    """A small problem with its known optimum set and feasible, non-optimal points."""

    problem: Problem
    optima: list
    value: float
    box: Polytope
    perturbed: list


def interval(objective, lo, hi, name):
    constraint = SetConstraint(VectorMap.affine([[1.0]]), Polytope.box([lo], [hi]), [0.5 * (lo + hi)])
    return Problem(objective, constraint, name=name)


def rectangle(objective, lo, hi, name):
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    constraint = SetConstraint(VectorMap.affine(np.eye(2)), Polytope.box(lo, hi), 0.5 * (lo + hi))
    return Problem(objective, constraint, name=name)


def convex(u):
    return DCPair(u, Quadratic.zero(u.dim))


def abs_sum_2d(shift=(0.0, 0.0)):
    """|x1 - s1| + |x2 - s2| as one max-affine function."""
    S = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
    return MaxAffine(S, -S @ np.asarray(shift))


@lru_cache(maxsize=None)
def golden_cases():
    box1 = Polytope.box
    cases = [
        GoldenCase(interval(convex(MaxAffine.abs()), 1.0, 3.0, "abs"),
                   [[1.0]], 1.0, box1([1.0], [3.0]), [[1.5], [2.2], [3.0]]),
        GoldenCase(interval(convex(MaxAffine.affine([1.0])), 1.0, 3.0, "increasing"),
                   [[1.0]], 1.0, box1([1.0], [3.0]), [[1.4], [2.0], [2.9]]),
        GoldenCase(interval(convex(MaxAffine.affine([-1.0])), 1.0, 3.0, "decreasing"),
                   [[3.0]], -3.0, box1([1.0], [3.0]), [[1.0], [2.0], [2.6]]),
        GoldenCase(interval(convex(Quadratic([[2.0]], [-4.0], 4.0)), 0.0, 3.0, "parabola"),
                   [[2.0]], 0.0, box1([0.0], [3.0]), [[0.5], [1.2], [3.0]]),
        GoldenCase(interval(convex(MaxAffine([[1.0], [-2.0]], [0.0, 0.0])), -2.0, 2.0, "skew-abs"),
                   [[0.0]], 0.0, box1([-2.0], [2.0]), [[-1.0], [0.5], [2.0]]),
        GoldenCase(interval(DCPair(Quadratic.squared_norm(1), MaxAffine.abs(scale=2.0)), -3.0, 3.0, "w-shape"),
                   [[-1.0], [1.0]], -1.0, box1([-3.0], [3.0]), [[0.0], [2.0], [-2.5]]),
        GoldenCase(interval(DCPair(Quadratic.squared_norm(1), MaxAffine.abs(scale=2.0)), 0.5, 3.0, "half-w"),
                   [[1.0]], -1.0, box1([0.5], [3.0]), [[0.5], [2.0], [3.0]]),
        GoldenCase(interval(DCPair(MaxAffine.affine([0.0]), MaxAffine.abs()), -1.0, 2.0, "neg-abs"),
                   [[2.0]], -2.0, box1([-1.0], [2.0]), [[-0.5], [0.0], [1.0]]),
        GoldenCase(interval(DCPair(MaxAffine([[2.0], [-2.0]], [-2.0, 2.0]), MaxAffine.abs()), -2.0, 3.0, "v-minus-abs"),
                   [[1.0]], -1.0, box1([-2.0], [3.0]), [[0.0], [2.0], [-1.0]]),
        GoldenCase(interval(DCPair(MaxAffine([[1.25], [-0.75]], [0.0, 0.0]), MaxAffine([[1.0], [-1.0]], [-1.0, 1.0])),
                            -1.0, 2.0, "ramp"),
                   [[-1.0]], -1.25, box1([-1.0], [2.0]), [[0.0], [0.5], [2.0]]),
        GoldenCase(rectangle(convex(abs_sum_2d()), [1.0, -1.0], [3.0, 2.0], "l1"),
                   [[1.0, 0.0]], 1.0, box1([1.0, -1.0], [3.0, 2.0]), [[2.0, 0.0], [1.0, 1.0], [3.0, -1.0]]),
        GoldenCase(rectangle(convex(MaxAffine.affine([1.0, 1.0])), [0.0, 0.0], [1.0, 1.0], "plane"),
                   [[0.0, 0.0]], 0.0, box1([0.0, 0.0], [1.0, 1.0]), [[0.5, 0.0], [0.0, 0.5], [1.0, 1.0]]),
        GoldenCase(rectangle(convex(Quadratic(2.0 * np.eye(2), [-1.0, -1.0], 0.5)), [0.0, 0.0], [2.0, 2.0], "bowl"),
                   [[0.5, 0.5]], 0.0, box1([0.0, 0.0], [2.0, 2.0]), [[1.0, 0.5], [0.0, 0.0], [2.0, 2.0]]),
        GoldenCase(rectangle(convex(MaxAffine(np.eye(2), [0.0, 0.0])), [-1.0, -1.0], [1.0, 1.0], "max"),
                   [[-1.0, -1.0]], -1.0, box1([-1.0, -1.0], [1.0, 1.0]), [[0.0, -1.0], [-1.0, 0.5], [1.0, 1.0]]),
        GoldenCase(rectangle(DCPair(Quadratic.squared_norm(2), MaxAffine.abs(dim=2, scale=2.0)),
                             [-2.0, -2.0], [2.0, 2.0], "w-valley"),
                   [[-1.0, 0.0], [1.0, 0.0]], -1.0, box1([-2.0, -2.0], [2.0, 2.0]),
                   [[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]]),
        GoldenCase(rectangle(DCPair(MaxAffine.affine([0.0, 0.0]), abs_sum_2d()), [-1.0, -1.0], [2.0, 1.0], "neg-l1"),
                   [[2.0, -1.0], [2.0, 1.0]], -3.0, box1([-1.0, -1.0], [2.0, 1.0]),
                   [[0.0, 0.0], [0.5, 1.0], [2.0, 0.0]]),
        GoldenCase(Problem(convex(MaxAffine([[1.0], [-1.0]], [-1.5, 1.5])),
                           SetConstraint(VectorMap.affine([[2.0]], [-1.0]), Polytope.box([-1.0], [3.0]), [1.0]),
                           name="scaled-map"),
                   [[1.5]], 0.0, box1([0.0], [2.0]), [[0.0], [1.0], [2.0]]),
        GoldenCase(Problem(convex(MaxAffine.affine([1.0, 2.0])),
                           SetConstraint(VectorMap.affine([[1.0, 1.0]]), Polytope.box([1.0], [2.0]), [1.5]),
                           Polytope.box([0.0, 0.0], [2.0, 2.0]), name="with-q"),
                   [[1.0, 0.0]], 1.0, box1([0.0, 0.0], [2.0, 2.0]), [[2.0, 0.0], [0.5, 0.5], [1.0, 1.0]]),
        GoldenCase(interval(DCPair(MaxAffine([[1.0], [0.0]], [0.0, 0.0]), MaxAffine.abs(scale=0.5)), -2.0, 1.0,
                            "hinge-minus-abs"),
                   [[-2.0]], -1.0, box1([-2.0], [1.0]), [[-1.0], [0.0], [1.0]]),
        GoldenCase(rectangle(DCPair(abs_sum_2d((1.0, 0.0)), MaxAffine.abs(dim=2, scale=0.5)),
                             [-1.0, -1.0], [2.0, 1.0], "l1-minus-abs"),
                   [[1.0, 0.0]], -0.5, box1([-1.0, -1.0], [2.0, 1.0]), [[0.0, 0.0], [2.0, 0.0], [1.0, 0.5]]),
    ]
    return {case.problem.name: case for case in cases}


GOLDEN_NAMES = ("abs", "increasing", "decreasing", "parabola", "skew-abs", "w-shape", "half-w", "neg-abs",
                "v-minus-abs", "ramp", "l1", "plane", "bowl", "max", "w-valley", "neg-l1", "scaled-map", "with-q",
                "hinge-minus-abs", "l1-minus-abs")


@pytest.fixture(params=GOLDEN_NAMES)
def golden_case(request):
    """Twenty small problems with known global optima."""
    return golden_cases()[request.param]
