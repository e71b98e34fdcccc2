import json
import math

import numpy as np
import pytest

from conftest import PROBLEMS
from daecert.problem import ProblemError, parse_set, problem_from_dict, set_to_text


class TestSetSyntax:
    @pytest.mark.parametrize("text,dim,inside,outside", [
        ("box([-1], [1])", 1, [0.5], [2.0]),
        ("zero(2)", 2, [0, 0], [0, 1e-3]),
        ("nonpositive(2)", 2, [-1, 0], [1, 0]),
        ("free(3)", 3, [5, -5, 1], None),
        ("point([1, 2])", 2, [1, 2], [1, 2.1]),
        ("polyhedron([[1, 1]], [1])", 2, [0, 0], [1, 1]),
        ("polyhedron([[1, 0]], [1], [[0, 1]], [0])", 2, [0.5, 0], [0.5, 1]),
        ("union(point([0]), box([1], [2]))", 1, [1.5], [0.5]),
        ("product(zero(1), box([0], [inf]))", 2, [0, 7], [0, -1]),
    ])
    def test_membership(self, text, dim, inside, outside):
        U = parse_set(text)
        assert U.dim == dim
        assert U.contains(np.array(inside, float))[0]
        if outside is not None:
            assert not U.contains(np.array(outside, float))[0]

    def test_text_round_trip(self):
        for text in ["box([-1], [1])", "union(point([0]), box([1], [2]))", "product(zero(1), free(1))"]:
            U = parse_set(text)
            V = parse_set(set_to_text(U))
            assert set_to_text(V) == set_to_text(U)

    @pytest.mark.parametrize("text", ["box([1], [0, 1])", "ball(1)", "box(", "zero(-1)"])
    def test_bad_sets(self, text):
        with pytest.raises(ProblemError):
            parse_set(text)


class TestControlProblem:
    @pytest.mark.parametrize("path", sorted(PROBLEMS.glob("*.json")), ids=lambda p: p.stem)
    def test_round_trip(self, path):
        d = json.loads(path.read_text())
        P = problem_from_dict(d)
        Q = problem_from_dict(json.loads(P.to_json()))
        assert P == Q
        assert P.to_json() == Q.to_json()

    def test_example_layout(self, problem):
        P = problem("affine_algebraic")
        assert P.layout.names == ["x", "y", "u"]
        assert P.constraint.texts() == ["u - y"]
        assert P.right_endpoint_free
        assert math.isinf(P.radius)

    def test_implicit_layout_and_dynamics(self, problem):
        P = problem("lq_dae")
        assert P.layout.names == ["x", "u", "v"]
        assert np.allclose(P.dyn.eval([0.0, 2.0, 3.0]), [3.0])

    def test_structured_E_builds_constraint(self, problem):
        P = problem("structured_e_row")
        z = P.join([0, 0], [0.6, 1.4], [1.0])
        assert np.allclose(P.constraint.eval(z), [0.0])

    def test_radius_table(self):
        P = problem_from_dict({"variables": {"x": 1}, "dynamics": ["0"],
                               "radius": {"t": [0, 1], "r": [1, 3]}})
        assert np.allclose(P.radius_at([0, 0.5, 1]), [1, 2, 3])

    @pytest.mark.parametrize("patch,msg", [
        ({"dynamics": ["u", "u"]}, "components"),
        ({"control_set": "box([-1, -1], [1, 1])"}, "dimension"),
        ({"form": "weird"}, "form"),
        ({"radius": -1}, "positive"),
        ({"horizon": [1, 0]}, "horizon"),
        ({"dynamics": ["u +"]}, "dynamics"),
        ({"variables": {"x": 1, "q": 2}}, "unknown"),
    ])
    def test_validation_errors(self, patch, msg):
        d = {"variables": {"x": 1, "u": 1}, "dynamics": ["u"]}
        d.update(patch)
        with pytest.raises(ProblemError, match=msg):
            problem_from_dict(d)

    def test_structured_E_needs_implicit_form(self):
        with pytest.raises(ProblemError):
            problem_from_dict({"variables": {"x": 1}, "structured_E": {"E": [[1]], "g": ["x"]}})
