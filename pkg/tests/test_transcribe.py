import time

import numpy as np
import pytest

from daecert.problem import problem_from_dict
from daecert.transcribe import (
    NOT_GUARANTEED,
    NotConvergedError,
    SolveOptions,
    TranscriptionError,
    discretize,
    extract_adjoint,
    kkt_residuals,
    solve_and_verify,
    solve_nlp,
)


def fixed_control():
    """min int u^2 subject to u - 1 = 0: multiplier -2 per unit weight."""
    return problem_from_dict({
        "name": "fixed_u", "variables": {"x": 1, "u": 1}, "dynamics": ["0"], "algebraic": ["u - 1"],
        "running_cost": "u^2", "endpoint_set": "product(point([0]), free(1))",
    })


class TestDiscretize:
    def test_trapezoidal_defect(self, problem):
        nlp = discretize(problem("lq"), 2)
        assert nlp.nz == 6 and np.allclose(nlp.dt, 0.5)
        c, J = nlp.equalities(np.arange(6.0))
        # (x1 - x0)/dt - (u0 + u1)/2 with z = (x0, u0, x1, u1, x2, u2)
        assert np.allclose(c, [(2 - 0) / 0.5 - (1 + 3) / 2, (4 - 2) / 0.5 - (3 + 5) / 2])
        assert np.allclose(J[0], [-2, -0.5, 2, -0.5, 0, 0])

    def test_endpoint_bounds(self, problem):
        nlp = discretize(problem("lq"), 2)
        assert nlp.lower[0] == nlp.upper[0] == 0.0
        assert nlp.lower[4] == nlp.upper[4] == 1.0

    def test_implicit_euler(self):
        P = problem_from_dict({"variables": {"x": 1}, "dynamics": ["x"]})
        nlp = discretize(P, 4, "implicit-euler")
        z = np.exp(np.linspace(0, 1, 5))
        c, _ = nlp.equalities(z)
        assert np.allclose(c, (z[1:] - z[:-1]) / 0.25 - z[1:])

    def test_row_counts(self, problem):
        nlp = discretize(problem("affine_algebraic"), 50)
        assert nlp.n_defect == 50 and nlp.n_path_eq == 51 and nlp.n_in == 0
        iu = [nlp.index["u"][0] + i * nlp.n for i in range(51)]
        assert np.all(nlp.lower[iu] == -1) and np.all(nlp.upper[iu] == 1)

    def test_jacobian_matches_differences(self, problem, rng):
        nlp = discretize(problem("affine_algebraic"), 6)
        z = rng.normal(size=nlp.nz)
        c, J = nlp.equalities(z)
        h = 1e-6
        for k in range(nlp.nz):
            e = np.zeros(nlp.nz)
            e[k] = h
            fd = (nlp.equalities(z + e)[0] - nlp.equalities(z - e)[0]) / (2 * h)
            assert np.allclose(J[:, k], fd, atol=1e-6)

    def test_bad_arguments(self, problem):
        with pytest.raises(TranscriptionError):
            discretize(problem("lq"), 1)
        with pytest.raises(TranscriptionError):
            discretize(problem("lq"), 10, "rk4")

    def test_union_needs_a_piece(self):
        d = {"variables": {"x": 1, "u": 1}, "dynamics": ["u"],
             "control_set": "union(box([-1], [0]), box([0.5], [1]))"}
        with pytest.raises(TranscriptionError, match="piece"):
            discretize(problem_from_dict(d), 4)
        d["pieces"] = {"control": 1}
        nlp = discretize(problem_from_dict(d), 4)
        assert nlp.lower[1] == 0.5


class TestSolve:
    def test_equality_multiplier(self):
        nlp = discretize(fixed_control(), 4)
        sol = solve_nlp(nlp)
        assert sol.converged
        lam = nlp.path_multipliers(sol.m_eq, sol.m_in)
        assert np.allclose(lam[:, 0] / nlp.weights, -2.0, atol=1e-8)
        cert = extract_adjoint(nlp, sol)
        assert np.allclose(cert.lam, -2.0, atol=1e-8)

    def test_linear_quadratic(self, problem):
        cert, rep = solve_and_verify(problem("lq"), 50)
        assert np.abs(cert.u - 1).max() <= 1e-4
        assert np.abs(cert.p - 1).max() <= 1e-4
        assert rep.overall == "pass"
        assert "cq" not in rep.extra  # no path constraint to qualify

    def test_affine_constraint_is_qualified(self, problem):
        _, rep = solve_and_verify(problem("affine_algebraic"), 20)
        assert rep.overall == "pass"
        assert rep.extra["cq"]["outcome"] == "established"
        assert NOT_GUARANTEED not in rep.warnings

    def test_kkt_recheck(self, problem):
        nlp = discretize(problem("affine_algebraic"), 20)
        sol = solve_nlp(nlp)
        r = kkt_residuals(nlp, sol.z, sol.m_eq, sol.m_in)
        assert sol.converged
        assert r["feasibility"] <= 1e-8 and r["stationarity"] <= 1e-6

    def test_objective_history_monotone(self, problem):
        nlp = discretize(problem("lq"), 30)
        sol = solve_nlp(nlp, opts=SolveOptions(polish=False))
        obj = [h["objective"] for h in sol.stats["history"]]
        assert len(obj) >= 2
        assert np.all(np.diff(obj) >= -1e-10)
        assert obj[-1] == pytest.approx(0.5, abs=1e-6)

    def test_deterministic(self, problem):
        nlp = discretize(problem("affine_algebraic"), 10)
        a, b = solve_nlp(nlp), solve_nlp(nlp)
        assert np.array_equal(a.z, b.z) and np.array_equal(a.m_eq, b.m_eq)

    def test_unreachable_target(self):
        P = problem_from_dict({
            "variables": {"x": 1, "u": 1}, "dynamics": ["u"], "running_cost": "0.5 * u^2",
            "control_set": "box([-1], [1])", "endpoint_set": "point([0, 5])",
        })
        with pytest.raises(NotConvergedError) as info:
            solve_and_verify(P, 20)
        assert info.value.solution.stats["feasibility"] == pytest.approx(4.0, abs=1e-6)

    def test_degenerate_constraint_warns(self, problem):
        _, rep = solve_and_verify(problem("sedae_y2"), 20)
        assert NOT_GUARANTEED in rep.warnings

    def test_implicit_form(self, problem):
        cert, rep = solve_and_verify(problem("lq_dae"), 30)
        assert rep.overall == "pass"
        assert np.abs(cert.u - 1).max() <= 1e-4


class TestConvergenceOrder:
    """x' = -x + u, x(0) = 1, running cost (x^2 + u^2)/2, free end."""

    def test_euler_residual_order(self, problem):
        P = problem("damped_lq")
        start = time.perf_counter()
        res = {}
        for N in (25, 50, 100):
            _, rep = solve_and_verify(P, N, check_cq=False)
            res[N] = rep.condition("euler").details["residuals"]
        worst = np.array([res[N].max() for N in (25, 50, 100)])
        rates = np.log2(worst[:-1] / worst[1:])
        assert np.all(rates >= 0.9), rates
        # away from the end points the residual is second order
        mid = np.array([res[N][N // 2] for N in (25, 50, 100)])
        assert np.all(np.log2(mid[:-1] / mid[1:]) >= 1.8)
        assert time.perf_counter() - start < 60
