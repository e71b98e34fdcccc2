import time

import numpy as np
import pytest

from cq_random import random_system
from daecert.cq import (
    CERTIFIED,
    REFUTED,
    CqOptions,
    InfeasiblePointError,
    check_along_trajectory,
    check_calmness_sufficient,
    check_ccq,
    check_index_one,
    check_linear_cq,
    check_mfc,
    check_nnamcq,
    check_wbcq,
    witness_residual,
)

WITNESSED = ("NNAMCQ", "MFC", "WBCQ", "FOSCMS", "SOSCMS")


def ladder(problem, name, point=None):
    P = problem(name)
    S = P.constraint_system()
    pt = np.zeros(P.n) if point is None else np.asarray(point, float)
    return S, pt, check_calmness_sufficient(S, pt)


class TestAffineExample:
    """x' = (u - y)^2, u - y = 0, U = [-1, 1]: affine constraint map."""

    def test_ladder(self, problem):
        _, _, rep = ladder(problem, "affine_algebraic")
        for name in ("Linear CQ", "NNAMCQ", "MFC", "WBCQ"):
            assert rep.verdict(name).status == CERTIFIED, name
        assert rep.sufficient and rep.via == "Linear CQ"
        assert rep.outcome == "established"

    def test_ccq_modulus(self, problem):
        S, pt, _ = ladder(problem, "affine_algebraic")
        v = check_ccq(S, pt)
        assert v.status == CERTIFIED
        assert v.modulus == pytest.approx(0.5, abs=1e-9)

    def test_certified_at_other_feasible_points(self, problem):
        S, _, _ = ladder(problem, "affine_algebraic")
        for pt in ([1.0, 0.3, 0.3], [-2.0, 1.0, 1.0], [0.0, -1.0, -1.0]):
            assert check_calmness_sufficient(S, pt).outcome == "established"

    def test_index_one(self, problem):
        S, pt, _ = ladder(problem, "affine_algebraic")
        info = check_index_one(S, pt)
        assert info["index_one"] and info["rank"] == 1


class TestDegenerateSquare:
    """h = y^2 at the origin: every multiplier-based CQ fails."""

    def test_refutations_with_valid_witnesses(self, problem):
        S, pt, rep = ladder(problem, "sedae_y2")
        for name in ("Linear CQ", "NNAMCQ", "MFC", "FOSCMS", "SOSCMS", "RCPLD", "CRCQ"):
            assert rep.verdict(name).status == REFUTED, name
        for name in ("NNAMCQ", "MFC", "FOSCMS", "SOSCMS"):
            assert witness_residual(S, pt, rep.verdict(name)) <= 1e-10, name
        assert not rep.sufficient
        assert rep.outcome == "refuted"

    def test_rank_deficient(self, problem):
        S, pt, _ = ladder(problem, "sedae_y2")
        info = check_index_one(S, pt)
        assert info["rank_deficient"] and info["rank"] == 0


class TestStateConstraint:
    """h = x: linear, so NNAMCQ holds, but the x-multiplier makes WBCQ fail."""

    def test_verdicts(self, problem):
        S, pt, rep = ladder(problem, "sedae_x")
        st = {v.name: v.status for v in rep.verdicts}
        assert st["NNAMCQ"] == CERTIFIED
        assert st["FOSCMS"] == CERTIFIED and st["SOSCMS"] == CERTIFIED
        assert st["WBCQ"] == REFUTED and st["MFC"] == REFUTED
        w = rep.verdict("WBCQ").witness
        assert abs(w["alpha"][0]) > 0
        assert witness_residual(S, pt, rep.verdict("WBCQ")) <= 1e-10
        # WBCQ is required alongside any sufficient condition
        assert not rep.sufficient and rep.outcome == "refuted"


class TestInputs:
    def test_infeasible_point(self, problem):
        S, _, _ = ladder(problem, "affine_algebraic")
        with pytest.raises(InfeasiblePointError):
            check_calmness_sufficient(S, [0.0, 0.0, 0.5])
        with pytest.raises(InfeasiblePointError):
            check_calmness_sufficient(S, [0.0, 2.0, 2.0])

    def test_dimension_cap_is_inconclusive(self, problem):
        _, _, rep = ladder(problem, "dimension_cap")
        assert rep.verdict("FOSCMS").status == "inconclusive"
        assert any("cap" in n for n in rep.verdict("FOSCMS").notes)
        assert rep.outcome == "inconclusive"

    def test_linear_cq_needs_affine_map(self, problem):
        assert check_linear_cq(problem("affine_algebraic").constraint_system()).status == CERTIFIED
        assert check_linear_cq(problem("sedae_y2").constraint_system()).status == REFUTED


class TestTrajectory:
    def test_along_worst_outcome(self, problem):
        S = problem("sedae_x").constraint_system()
        traj = np.zeros((3, 3))
        traj[:, 2] = [0.0, 1.0, -1.0]
        reports, summary = check_along_trajectory(S, traj)
        assert len(reports) == 3 and summary["outcome"] == "refuted"

    def test_tube_samples_are_feasible(self, problem):
        P = problem("affine_algebraic")
        S = P.constraint_system()
        traj = np.array([[0.0, 0.2, 0.2], [0.5, -0.3, -0.3]])
        reports, summary = check_along_trajectory(S, traj, "tube", tube_samples=3)
        assert summary["tube"]
        for _, rep in summary["tube"]:
            assert S.target.contains(S.map.eval(rep.point), 1e-8)[0]
        assert summary["outcome"] == "established"
        assert summary["notes"]

    def test_infeasible_mesh_point_reported(self, problem):
        S = problem("affine_algebraic").constraint_system()
        with pytest.raises(InfeasiblePointError, match="mesh point 1"):
            check_along_trajectory(S, [[0, 0, 0], [0, 0, 1]])


class TestImplicationChain:
    def test_random_systems(self):
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        seen = set()
        for k in range(200):
            S = random_system(rng)
            pt = np.zeros(S.n)
            rep = check_calmness_sufficient(S, pt)
            st = {v.name: v.status for v in rep.verdicts}
            if st["CCQ"] == CERTIFIED:
                assert st["MFC"] == CERTIFIED, k
            if st["MFC"] == CERTIFIED:
                assert st["NNAMCQ"] == CERTIFIED and st["WBCQ"] == CERTIFIED, k
            if st["FOSCMS"] == CERTIFIED:
                assert st["SOSCMS"] == CERTIFIED, k
            for name in WITNESSED:
                v = rep.verdict(name)
                if v.status == REFUTED and v.witness is not None:
                    assert witness_residual(S, pt, v) <= 1e-8, (k, name)
            seen.update(st.items())
        assert time.perf_counter() - start < 60
        # the corpus exercises both verdicts of the main checks
        for name in ("MFC", "NNAMCQ", "WBCQ", "FOSCMS"):
            assert (name, CERTIFIED) in seen and (name, REFUTED) in seen

    def test_deterministic(self):
        S = random_system(np.random.default_rng(3))
        a = check_calmness_sufficient(S, np.zeros(S.n), CqOptions(seed=5)).to_dict()
        b = check_calmness_sufficient(S, np.zeros(S.n), CqOptions(seed=5)).to_dict()
        assert a == b

    @pytest.mark.parametrize("check", [check_nnamcq, check_mfc, check_wbcq])
    def test_single_checks_agree_with_ladder(self, problem, check):
        S, pt, rep = ladder(problem, "sedae_x")
        v = check(S, pt)
        assert v.status == rep.verdict(v.name).status
