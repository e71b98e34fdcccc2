import json

import numpy as np
import pytest

from daecert.certificate import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    SAMPLED_PASS,
    Certificate,
    CertificateError,
    VerifyConfig,
    estimate_bound_constants,
    recover_multipliers,
    verify_certificate,
    verify_multiplier_bound,
    verify_nontriviality,
    verify_transversality,
)

MESH = np.linspace(0.0, 1.0, 51)


def col(v):
    return np.broadcast_to(np.asarray(v, float), MESH.shape)[:, None].copy()


def affine_certificate(p=1.0, u=None):
    u = 0.8 * np.sin(3 * MESH) if u is None else u
    return Certificate(MESH, col(0.0), col(u), col(p), 1, w=col(u), lam=col(0.0), mu=col(0.0))


def lq_certificate(p=1.0, **kw):
    return Certificate(MESH, col(MESH), col(1.0), col(p), 1, **kw)


class TestGoldenExample:
    """x' = (u - y)^2, u = y, free right end: p = 1, lambda = 0, mu = 0."""

    def test_passes_every_condition(self, problem):
        rep = verify_certificate(affine_certificate(), problem("affine_algebraic"))
        assert rep.overall == PASS
        names = [c.name for c in rep.conditions]
        assert names == ["feasibility", "nontriviality", "transversality", "euler", "weierstrass"]
        assert rep.condition("weierstrass").status == SAMPLED_PASS
        for name in ("feasibility", "transversality", "euler"):
            assert rep.condition(name).worst <= 1e-8

    def test_wrong_adjoint_fails_transversality(self, problem):
        rep = verify_certificate(affine_certificate(p=1.1), problem("affine_algebraic"))
        assert rep.overall == FAIL
        assert rep.condition("transversality").status == FAIL
        assert rep.condition("transversality").worst == pytest.approx(0.1, abs=1e-12)

    def test_infeasible_trajectory_halts(self, problem):
        cert = affine_certificate()
        cert.w[5] += 0.5
        rep = verify_certificate(cert, problem("affine_algebraic"))
        assert rep.overall == FAIL
        assert [c.name for c in rep.conditions] == ["feasibility"]
        assert rep.condition("feasibility").details["infeasible_nodes"] == [5]


class TestLinearQuadratic:
    """min 1/2 int u^2, x' = u, x(0) = 0, x(1) = 1: u = p = 1."""

    def test_analytic_passes(self, problem):
        assert verify_certificate(lq_certificate(), problem("lq")).overall == PASS

    def test_sign_flip_gives_weierstrass_witness(self, problem):
        P = problem("lq")
        rep = verify_certificate(lq_certificate(p=-1.0), P)
        w = rep.condition("weierstrass")
        assert w.status == FAIL
        wit = w.details["witness"]
        # H = p u - u^2/2 with p = -1: the witness control beats the reference value -3/2
        u = wit["u"][0]
        assert wit["value"] == pytest.approx(-u - 0.5 * u * u, abs=1e-12)
        assert wit["reference"] == pytest.approx(-1.5)
        assert wit["value"] - wit["reference"] > 1.0

    def test_transversality_free_at_point_target(self, problem):
        # S is a single point, so any endpoint adjoint is admissible
        assert verify_transversality(lq_certificate(p=7.0), problem("lq")).status == PASS

    def test_tiny_radius_is_inconclusive(self, problem):
        rep = verify_certificate(lq_certificate(radius=1e-13), problem("lq"))
        assert rep.condition("weierstrass").status == INCONCLUSIVE
        assert rep.overall == INCONCLUSIVE

    def test_nontriviality(self):
        cert = Certificate(MESH, col(MESH), col(1.0), col(0.0), 0)
        assert verify_nontriviality(cert).status == FAIL
        assert verify_nontriviality(lq_certificate()).status == PASS

    def test_abnormal_free_end_warns(self, problem):
        cert = affine_certificate()
        cert.lambda0 = 0.0
        rep = verify_certificate(cert, problem("affine_algebraic"))
        assert any("lambda0" in w for w in rep.warnings)


class TestRecovery:
    def test_recovered_multipliers(self, problem):
        P = problem("lq_dae")
        cert = Certificate(MESH, col(MESH), col(1.0), col(1.0), 1)
        full = recover_multipliers(cert, P)
        assert np.allclose(full.lam, 1.0, atol=1e-10)
        assert np.allclose(full.mu, 0.0, atol=1e-10)

    def test_recover_then_store_is_idempotent(self, problem):
        P = problem("lq_dae")
        cfg = VerifyConfig(seed=3)
        cert = Certificate(MESH, col(MESH), col(1.0), col(1.0), 1)
        full = recover_multipliers(cert, P)
        again = Certificate.from_dict(json.loads(json.dumps(full.to_dict(P))), P)
        assert verify_certificate(again, P, cfg).to_json() == verify_certificate(full, P, cfg).to_json()
        assert verify_certificate(cert, P, cfg).overall == PASS


class TestMultiplierBound:
    def setup_method(self):
        self.cert = Certificate(MESH, col(MESH), col(1.0), col(1.0), 1, lam=col(1.0), mu=col(0.0))

    def test_constants(self, problem):
        c = estimate_bound_constants(self.cert, problem("lq_dae"))
        assert c["kappa"] == pytest.approx(1 / np.sqrt(2))
        assert c["k"] == pytest.approx(1.0)
        assert c["k_F"] == pytest.approx(1.0)
        assert c["k_phi"] == 0.0

    def test_analytic_passes_and_corruption_fails(self, problem):
        P = problem("lq_dae")
        assert verify_multiplier_bound(self.cert, P).status == PASS
        bad = Certificate(MESH, self.cert.x, self.cert.u, self.cert.p, 1, lam=100 * self.cert.lam, mu=self.cert.mu)
        assert verify_multiplier_bound(bad, P).status == FAIL

    def test_opt_in_from_config(self, problem):
        rep = verify_certificate(self.cert, problem("lq_dae"), VerifyConfig(multiplier_bound=True))
        assert rep.condition("multiplier_bound").status == PASS

    def test_needs_lambda(self, problem):
        with pytest.raises(CertificateError):
            verify_multiplier_bound(lq_certificate(), problem("lq"))


class TestMalformed:
    @pytest.mark.parametrize("d", [
        {"mesh": [0, 1], "x": [[0], [1]], "p": [[0], [0]]},
        {"mesh": [0, 0.5, 0.5], "x": [[0]] * 3, "p": [[0]] * 3},
        {"mesh": [0, 0.5, 1], "x": [[0]] * 2, "p": [[0]] * 3},
        {"mesh": [0, 0.5, 1], "x": [[0]] * 3, "p": [[0, 1]] * 3},
        {"mesh": [0, 0.5, 1], "x": [[0]] * 3, "p": [[0]] * 3, "lambda0": 0.5},
        {"mesh": [0, 0.5, 1], "p": [[0]] * 3},
        {"mesh": [0, 0.5, 1], "x": [[0]] * 3, "p": [[0]] * 3, "radius": [1, 2]},
    ])
    def test_rejected(self, d):
        with pytest.raises(CertificateError):
            Certificate.from_dict(d)

    def test_dimension_mismatch(self, problem):
        cert = Certificate(MESH, np.zeros((51, 2)), col(1.0), np.zeros((51, 2)))
        with pytest.raises(CertificateError, match="n_x"):
            verify_certificate(cert, problem("lq"))

    def test_missing_algebraic_track(self, problem):
        cert = Certificate(MESH, col(0.0), col(0.0), col(1.0))
        with pytest.raises(CertificateError, match="y track"):
            verify_certificate(cert, problem("affine_algebraic"))


class TestReport:
    def test_json_is_deterministic(self, problem):
        P = problem("affine_algebraic")
        a = verify_certificate(affine_certificate(), P, VerifyConfig(seed=9)).to_json()
        b = verify_certificate(affine_certificate(), P, VerifyConfig(seed=9)).to_json()
        assert a == b
        d = json.loads(a)
        assert d["tolerances"]["euler"] == 1e-6 and d["overall"] == PASS
