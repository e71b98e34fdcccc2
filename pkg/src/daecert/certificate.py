"""Verification of candidate certificates against the necessary conditions.

A certificate bundles a trajectory on a mesh, an adjoint arc ``p``, the
abnormality number ``lambda0`` and (optionally) multiplier tracks.  The
checks are nontriviality, transversality, the Euler adjoint inclusion in
explicit multiplier form, a sampled Weierstrass condition on an open ball,
and optionally the multiplier estimate and the structured-``E`` reductions.

The Euler residual at node ``i`` is written for the unified form used by
``ControlProblem`` (``dyn`` gives ``x'``, ``Phi in K``)::

    x-block:  p'  - G_x - Phi_x^T lam
    w-block:        G_w + Phi_w^T lam
    u-block:        G_u + Phi_u^T lam + mu

with ``G = grad(-<p, dyn> + lambda0 F)``, ``lam in N^C_K(Phi)`` and
``mu in N^C_U(u)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import lsq_linear

from .expr import DomainError
from .polyhedra import (
    PolyCone,
    clarke_normal_cone,
    limiting_normal_cone_outer,
    member_of_cone,
)
from .problem import ControlProblem

__all__ = [
    "Certificate",
    "VerifyConfig",
    "ConditionResult",
    "VerifyReport",
    "adjoint_derivative",
    "verify_nontriviality",
    "verify_transversality",
    "verify_euler_explicit",
    "verify_weierstrass",
    "verify_multiplier_bound",
    "estimate_bound_constants",
    "verify_structured_E",
    "verify_certificate",
    "recover_multipliers",
    "CertificateError",
]

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"
SAMPLED_PASS = "pass (sampled)"


class CertificateError(ValueError):
    """Malformed certificate or mismatch with the problem dimensions."""


def _arr2(v, rows, what):
    a = np.asarray(v, dtype=float)
    if a.ndim == 1:
        a = a.reshape(rows, -1) if a.size else np.zeros((rows, 0))
    if a.ndim != 2 or a.shape[0] != rows:
        raise CertificateError(f"{what} must have one row per mesh node")
    return a


@dataclass
class Certificate:
    """Candidate multipliers on a mesh; ``w`` is ``y`` (explicit) or ``v`` (implicit)."""

    mesh: np.ndarray
    x: np.ndarray
    u: np.ndarray
    p: np.ndarray
    lambda0: float = 1.0
    w: np.ndarray | None = None
    lam: np.ndarray | None = None
    mu: np.ndarray | None = None
    radius: object = None  # None -> take from problem; scalar or per-node array

    def __post_init__(self):
        self.mesh = np.asarray(self.mesh, dtype=float).ravel()
        n1 = self.mesh.size
        if n1 < 3:
            raise CertificateError("a mesh needs at least N = 2 intervals")
        if np.any(np.diff(self.mesh) <= 0):
            raise CertificateError("mesh must be strictly increasing")
        self.x = _arr2(self.x, n1, "x")
        self.u = _arr2(self.u, n1, "u")
        self.p = _arr2(self.p, n1, "p")
        if self.p.shape[1] != self.x.shape[1]:
            raise CertificateError("p must have the state dimension")
        if self.lambda0 not in (0, 1, 0.0, 1.0):
            raise CertificateError("lambda0 must be 0 or 1")
        self.lambda0 = float(self.lambda0)
        for name in ("w", "lam", "mu"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, _arr2(v, n1, name))
        if self.radius is not None and not np.isscalar(self.radius):
            r = np.asarray(self.radius, dtype=float).ravel()
            if r.size != n1:
                raise CertificateError("radius track must have one entry per node")
            self.radius = r

    @property
    def N(self) -> int:
        return self.mesh.size - 1

    def w_for(self, problem: ControlProblem) -> np.ndarray:
        if self.w is not None:
            return self.w
        if problem.form == "implicit":
            return np.gradient(self.x, self.mesh, axis=0, edge_order=2)
        return np.zeros((self.mesh.size, problem.n_w))

    def radii(self, problem: ControlProblem) -> np.ndarray:
        if self.radius is None:
            return problem.radius_at(self.mesh)
        if np.isscalar(self.radius):
            return np.full(self.mesh.size, float(self.radius))
        return np.asarray(self.radius, dtype=float)

    def check_dims(self, problem: ControlProblem):
        n1 = self.mesh.size
        if self.x.shape[1] != problem.n_x:
            raise CertificateError(f"x has {self.x.shape[1]} columns, problem has n_x = {problem.n_x}")
        if self.u.shape[1] != problem.n_u:
            raise CertificateError(f"u has {self.u.shape[1]} columns, problem has n_u = {problem.n_u}")
        if self.w is not None and self.w.shape[1] != problem.n_w:
            raise CertificateError(f"{problem.free_block} has {self.w.shape[1]} columns, expected {problem.n_w}")
        if self.lam is not None and self.lam.shape[1] != problem.m:
            raise CertificateError(f"lambda has {self.lam.shape[1]} columns, expected {problem.m}")
        if self.mu is not None and self.mu.shape[1] != problem.n_u:
            raise CertificateError(f"mu has {self.mu.shape[1]} columns, expected {problem.n_u}")
        if problem.form == "explicit" and problem.n_w and self.w is None:
            raise CertificateError("certificate lacks the y track")
        if np.any(self.radii(problem) <= 0):
            raise CertificateError("radius must be positive")
        return n1

    # -- JSON ---------------------------------------------------------------
    def to_dict(self, problem: ControlProblem | None = None) -> dict:
        wname = problem.free_block if problem is not None else "w"
        d = {
            "mesh": self.mesh.tolist(),
            "x": self.x.tolist(),
            "u": self.u.tolist(),
            "p": self.p.tolist(),
            "lambda0": int(self.lambda0),
        }
        if self.w is not None:
            d[wname] = self.w.tolist()
        if self.lam is not None:
            d["lambda"] = self.lam.tolist()
        if self.mu is not None:
            d["mu"] = self.mu.tolist()
        if self.radius is not None:
            r = self.radius
            d["radius"] = (("inf" if math.isinf(r) else float(r)) if np.isscalar(r)
                           else ["inf" if math.isinf(v) else float(v) for v in r])
        return d

    @classmethod
    def from_dict(cls, d: dict, problem: ControlProblem | None = None) -> "Certificate":
        try:
            mesh = d["mesh"]
            x, u, p = d["x"], d.get("u", None), d["p"]
        except (KeyError, TypeError):
            raise CertificateError("certificate needs mesh, x and p") from None
        n1 = len(mesh)
        if u is None:
            u = np.zeros((n1, 0))
        w = None
        for key in ("y", "v", "w"):
            if key in d:
                w = d[key]
        radius = d.get("radius")
        if isinstance(radius, str):
            radius = float(radius)
        elif isinstance(radius, list):
            radius = [float(v) for v in radius]
        try:
            return cls(mesh, x, u, p, d.get("lambda0", 1), w, d.get("lambda"), d.get("mu"), radius)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, CertificateError):
                raise
            raise CertificateError(f"malformed certificate: {exc}") from None


# ---------------------------------------------------------------------------
# reports


@dataclass
class VerifyConfig:
    tol_feas: float = 1e-8
    tol_euler: float = 1e-6
    tol_trans: float = 1e-8
    tol_weier: float = 1e-6
    tol_nontriv: float = 1e-8
    seed: int = 0
    weier_samples: int = 100
    weier_window: float = 10.0
    newton_iters: int = 30
    newton_tol: float = 1e-10
    min_coverage: float = 0.1
    multiplier_bound: bool = False
    bound_constants: dict | None = None

    def tolerances(self) -> dict:
        return {
            "feasibility": self.tol_feas,
            "euler": self.tol_euler,
            "transversality": self.tol_trans,
            "weierstrass": self.tol_weier,
            "nontriviality": self.tol_nontriv,
        }


def _clean(v):
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (list, tuple)):
        return [_clean(e) for e in v]
    if isinstance(v, dict):
        return {str(k): _clean(e) for k, e in v.items()}
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class ConditionResult:
    name: str
    status: str
    worst: float = 0.0
    location: object = None
    tolerance: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status in (PASS, SAMPLED_PASS)

    def to_dict(self) -> dict:
        return _clean({
            "name": self.name,
            "status": self.status,
            "worst": self.worst,
            "location": self.location,
            "tolerance": self.tolerance,
            "details": self.details,
        })


@dataclass
class VerifyReport:
    conditions: list
    tolerances: dict
    warnings: list = field(default_factory=list)
    lambda0: float = 1.0
    extra: dict = field(default_factory=dict)

    @property
    def overall(self) -> str:
        st = [c.status for c in self.conditions]
        if FAIL in st:
            return FAIL
        if INCONCLUSIVE in st:
            return INCONCLUSIVE
        return PASS

    def condition(self, name) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return _clean({
            "kind": "verify",
            "overall": self.overall,
            "lambda0": self.lambda0,
            "conditions": [c.to_dict() for c in self.conditions],
            "tolerances": self.tolerances,
            "warnings": self.warnings,
            **self.extra,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# pieces


def adjoint_derivative(cert: Certificate, i: int | None = None) -> np.ndarray:
    """Finite-difference ``p'``: central inside, second-order one-sided at the ends."""
    d = np.gradient(cert.p, cert.mesh, axis=0, edge_order=2)
    return d if i is None else d[i]


def _nodes(problem: ControlProblem, cert: Certificate) -> np.ndarray:
    """Layout vectors of every node, shape (N+1, n)."""
    w = cert.w_for(problem)
    return np.stack([problem.join(cert.x[i], w[i], cert.u[i]) for i in range(cert.mesh.size)])


def _feasibility(problem: ControlProblem, cert: Certificate, cfg: VerifyConfig) -> ConditionResult:
    Z = _nodes(problem, cert)
    worst, loc = 0.0, None
    bad = []
    try:
        Phi = problem.constraint.eval(Z.T).T if problem.m else np.zeros((Z.shape[0], 0))
    except DomainError as exc:
        return ConditionResult("feasibility", FAIL, math.inf, None, cfg.tol_feas, {"error": str(exc)})
    for i in range(Z.shape[0]):
        vu = problem.control_set.violation(cert.u[i]) if problem.n_u else 0.0
        vk = problem.target_set.violation(Phi[i]) if problem.m else 0.0
        v = max(vu, vk)
        if v > worst:
            worst, loc = v, i
        if v > cfg.tol_feas:
            bad.append(i)
    ends = np.concatenate([cert.x[0], cert.x[-1]])
    vs = problem.endpoint_set.violation(ends)
    details = {"endpoint_violation": vs, "infeasible_nodes": bad}
    if vs > worst:
        worst, loc = vs, "endpoints"
    status = FAIL if (bad or vs > cfg.tol_feas) else PASS
    return ConditionResult("feasibility", status, worst, loc, cfg.tol_feas, details)


def verify_nontriviality(cert: Certificate, tol: float = 1e-8) -> ConditionResult:
    norms = np.sqrt(cert.lambda0**2 + np.sum(cert.p**2, axis=1))
    i = int(np.argmin(norms))
    status = PASS if norms[i] >= tol else FAIL
    return ConditionResult("nontriviality", status, float(norms[i]), i, tol, {"min_norm": float(norms[i])})


def verify_transversality(cert: Certificate, problem: ControlProblem, tol: float = 1e-8) -> ConditionResult:
    ends = np.concatenate([cert.x[0], cert.x[-1]])
    ok, _ = problem.endpoint_set.contains(ends, max(tol, 1e-9))
    if not ok:
        return ConditionResult("transversality", FAIL, math.inf, "endpoints", tol,
                               {"error": "endpoints are not in the endpoint set"})
    grad_f = problem.endpoint_cost.jacobian(ends)[0]
    r = np.concatenate([cert.p[0], -cert.p[-1]]) - cert.lambda0 * grad_f
    cone = limiting_normal_cone_outer(problem.endpoint_set, ends, tol=max(tol, 1e-9))
    _, dist = member_of_cone(cone, r)
    status = PASS if dist <= tol else FAIL
    details = {"residual_vector": r, "distance": dist}
    if cone.outer:
        details["note"] = "normal cone of a union taken as the union of piece cones"
    return ConditionResult("transversality", status, float(dist), "endpoints", tol, details)


def _blocks(problem):
    L = problem.layout
    s = lambda b: np.arange(L.slice(b).start, L.slice(b).stop)  # noqa: E731
    return s("x"), s(problem.free_block), s("u")


def _euler_system(problem: ControlProblem, z, p, pdot, lambda0):
    """``r0, C_lam, C_mu`` with residual ``r0 + C_lam lam + C_mu mu``."""
    ix, iw, iu = _blocks(problem)
    _, Jd = problem.dyn.value_and_jacobian(z)
    gF = problem.running_cost.jacobian(z)[0]
    G = -Jd.T @ p + lambda0 * gF
    if problem.m:
        JP = problem.constraint.jacobian(z)
    else:
        JP = np.zeros((0, z.size))
    r0 = np.concatenate([pdot - G[ix], G[iw], G[iu]])
    C_lam = np.vstack([-JP[:, ix].T, JP[:, iw].T, JP[:, iu].T])
    C_mu = np.vstack([np.zeros((ix.size + iw.size, iu.size)), np.eye(iu.size)])
    return r0, C_lam, C_mu


def _cone_basis(cone: PolyCone, n):
    R, L = cone.v_rep()
    return R, L


def _recover_node(problem, z, r0, C_lam, C_mu, lam, mu):
    """Cone-constrained least squares for whichever of ``lam``/``mu`` is missing."""
    cols, lo = [], []
    parts = []
    ix, iw, iu = _blocks(problem)
    if lam is None and problem.m:
        Kc = clarke_normal_cone(problem.target_set, problem.constraint.eval(z), tol=1e-7)
        R, L = Kc.v_rep()
        parts.append(("lam", R, L))
    if mu is None and problem.n_u:
        Uc = clarke_normal_cone(problem.control_set, z[iu], tol=1e-7)
        R, L = Uc.v_rep()
        parts.append(("mu", R, L))
    rhs = -r0.copy()
    if lam is not None and problem.m:
        rhs -= C_lam @ lam
    if mu is not None and problem.n_u:
        rhs -= C_mu @ mu
    spans = []
    for name, R, L in parts:
        C = C_lam if name == "lam" else C_mu
        start = sum(c.shape[1] for c in cols)
        cols.append(C @ R)
        lo += [0.0] * R.shape[1]
        cols.append(C @ L)
        lo += [-np.inf] * L.shape[1]
        spans.append((name, start, R, L))
    out = {"lam": lam, "mu": mu}
    if cols and sum(c.shape[1] for c in cols):
        M = np.hstack(cols)
        lo_arr = np.array(lo)
        if np.all(np.isinf(lo_arr)):
            theta, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        else:
            theta = lsq_linear(M, rhs, bounds=(lo_arr, np.full(lo_arr.size, np.inf)), method="bvls",
                               tol=1e-14, lsq_solver="exact").x
        for name, start, R, L in spans:
            a = theta[start : start + R.shape[1]]
            b = theta[start + R.shape[1] : start + R.shape[1] + L.shape[1]]
            out[name] = R @ a + L @ b
    else:
        for name, _, _ in parts:
            out[name] = np.zeros(problem.m if name == "lam" else problem.n_u)
    if out["lam"] is None:
        out["lam"] = np.zeros(problem.m)
    if out["mu"] is None:
        out["mu"] = np.zeros(problem.n_u)
    return out["lam"], out["mu"]


def recover_multipliers(cert: Certificate, problem: ControlProblem) -> Certificate:
    """Fill missing ``lam``/``mu`` tracks by cone-constrained least squares."""
    Z = _nodes(problem, cert)
    pdot = adjoint_derivative(cert)
    lams, mus = [], []
    for i in range(Z.shape[0]):
        r0, Cl, Cm = _euler_system(problem, Z[i], cert.p[i], pdot[i], cert.lambda0)
        lam, mu = _recover_node(problem, Z[i], r0, Cl, Cm,
                                None if cert.lam is None else cert.lam[i],
                                None if cert.mu is None else cert.mu[i])
        lams.append(lam)
        mus.append(mu)
    return replace(cert, lam=np.array(lams).reshape(Z.shape[0], problem.m),
                   mu=np.array(mus).reshape(Z.shape[0], problem.n_u))


def verify_euler_explicit(cert: Certificate, problem: ControlProblem, tol: float = 1e-6,
                          cone_tol: float = 1e-8):
    """Per-node Euler residuals; returns ``(ConditionResult, certificate with lam/mu)``."""
    full = recover_multipliers(cert, problem) if (cert.lam is None or cert.mu is None) else cert
    Z = _nodes(problem, full)
    pdot = adjoint_derivative(full)
    ix, iw, iu = _blocks(problem)
    residuals = np.zeros(Z.shape[0])
    cone_viol = np.zeros(Z.shape[0])
    worst_ratio, loc = -1.0, None
    failing = []
    for i in range(Z.shape[0]):
        r0, Cl, Cm = _euler_system(problem, Z[i], full.p[i], pdot[i], full.lambda0)
        r = r0 + Cl @ full.lam[i] + Cm @ full.mu[i]
        residuals[i] = float(np.linalg.norm(r))
        cv = 0.0
        if problem.m:
            Kc = clarke_normal_cone(problem.target_set, problem.constraint.eval(Z[i]), tol=1e-7)
            cv = max(cv, member_of_cone(Kc, full.lam[i])[1])
        if problem.n_u:
            Uc = clarke_normal_cone(problem.control_set, full.u[i], tol=1e-7)
            cv = max(cv, member_of_cone(Uc, full.mu[i])[1])
        cone_viol[i] = cv
        bound = tol * (1.0 + np.linalg.norm(full.p[i]))
        ratio = residuals[i] / bound
        if ratio > worst_ratio:
            worst_ratio, loc = ratio, i
        if residuals[i] > bound or cv > cone_tol * (1.0 + np.abs(np.r_[full.lam[i], full.mu[i]]).max(initial=0.0)):
            failing.append(i)
    status = FAIL if failing else PASS
    details = {
        "residuals": residuals,
        "cone_violation": cone_viol,
        "failing_nodes": failing,
        "recovered": [k for k, v in (("lambda", cert.lam), ("mu", cert.mu)) if v is None],
    }
    res = ConditionResult("euler", status, float(residuals.max()), loc if not failing else failing[0], tol, details)
    return res, full


# ---------------------------------------------------------------------------
# Weierstrass


def _u_sampling_box(problem, u_ref, R, window):
    """Axis-aligned box to draw control candidates from."""
    n = u_ref.size
    lo, hi = np.full(n, np.inf), np.full(n, -np.inf)
    for P in problem.control_set.pieces:
        cb = P.coordinate_bounds()
        if cb is None:
            cb = (np.full(n, -np.inf), np.full(n, np.inf))
        lo = np.minimum(lo, cb[0])
        hi = np.maximum(hi, cb[1])
    r = R if math.isfinite(R) else window
    lo = np.maximum(lo, u_ref - r)
    hi = np.minimum(hi, u_ref + r)
    return lo, hi


def _gauss_newton(problem, assemble, V, cols, G, g, cfg):
    """Damped min-norm Gauss-Newton on ``G Phi = g`` over the columns ``cols``."""
    k = V.shape[0]
    for _ in range(cfg.newton_iters):
        try:
            vals, jac = problem.constraint.value_and_jacobian(assemble(V))
        except DomainError:
            break
        res = (G @ vals).T - g
        nr = np.linalg.norm(res, axis=1)
        active = nr > cfg.newton_tol
        if not active.any():
            break
        Jv = G @ jac[:, :, cols]
        step = -np.einsum("kij,kj->ki", np.linalg.pinv(Jv), res)
        t = np.ones(k)
        for _ls in range(20):
            try:
                tv = problem.constraint.eval(assemble(V + t[:, None] * step))
            except DomainError:
                t *= 0.5
                continue
            tn = np.linalg.norm((G @ tv).T - g, axis=1)
            worse = (tn > nr) & active & (t > 1e-6)
            if not worse.any():
                break
            t[worse] *= 0.5
        V = np.where(active[:, None], V + t[:, None] * step, V)
    return V


def _solve_free(problem, x, W, Uc, cfg, K_piece_rows):
    """Find feasible ``(w, u)`` near the samples with ``Phi(x, w, u) in K``.

    First Gauss-Newton in ``w`` alone with ``u`` held at the sample; samples
    still infeasible are then corrected jointly in ``(w, u)`` (min-norm steps
    keep them close to the sample) and must land in ``U``.  Returns
    ``(W, U, feasible mask)``.
    """
    k = W.shape[0]
    ix, iw, iu = _blocks(problem)
    n = problem.n
    if problem.m == 0:
        return W, Uc, np.ones(k, dtype=bool)
    nw = iw.size

    def feasible(Wc, Uu):
        Z = np.empty((n, k))
        Z[ix] = x[:, None]
        Z[iw] = Wc.T
        Z[iu] = Uu.T
        try:
            vals = problem.constraint.eval(Z).T
        except DomainError:
            return np.zeros(k, dtype=bool)
        ok = np.array([problem.target_set.violation(v) <= cfg.tol_feas for v in vals])
        if problem.n_u:
            ok &= np.array([problem.control_set.contains(u, cfg.tol_feas)[0] for u in Uu])
        return ok

    best_ok = np.zeros(k, dtype=bool)
    best_W, best_U = W.copy(), Uc.copy()
    for G, g in K_piece_rows:
        if G.shape[0] and nw:
            def asm_w(V, U0=Uc):
                Z = np.empty((n, k))
                Z[ix] = x[:, None]
                Z[iw] = V.T
                Z[iu] = U0.T
                return Z
            Wc = _gauss_newton(problem, asm_w, W.copy(), iw, G, g, cfg)
        else:
            Wc = W.copy()
        Uu = Uc.copy()
        ok = feasible(Wc, Uu)
        if G.shape[0] and problem.n_u and not ok.all():
            cols = np.concatenate([iw, iu])

            def asm_wu(V):
                Z = np.empty((n, k))
                Z[ix] = x[:, None]
                Z[iw] = V[:, :nw].T
                Z[iu] = V[:, nw:].T
                return Z
            V = _gauss_newton(problem, asm_wu, np.hstack([Wc, Uu]), cols, G, g, cfg)
            W2, U2 = V[:, :nw], V[:, nw:]
            ok2 = feasible(W2, U2) & ~ok
            Wc = np.where(ok2[:, None], W2, Wc)
            Uu = np.where(ok2[:, None], U2, Uu)
            ok = ok | ok2
        newly = ok & ~best_ok
        best_W[newly] = Wc[newly]
        best_U[newly] = Uu[newly]
        best_ok |= ok
    return best_W, best_U, best_ok


def _hamiltonian(problem, Z, p, lambda0):
    dyn = problem.dyn.eval(Z)
    F = problem.running_cost.eval(Z)[0]
    return p @ dyn - lambda0 * F


def verify_weierstrass(cert: Certificate, problem: ControlProblem, cfg: VerifyConfig | None = None) -> ConditionResult:
    """Sampled Weierstrass condition on the open ball of radius ``R_i`` in ``(w, u)``."""
    cfg = cfg or VerifyConfig()
    ix, iw, iu = _blocks(problem)
    Wt = cert.w_for(problem)
    radii = cert.radii(problem)
    k = cfg.weier_samples
    K_rows = [(P.G, P.g) for P in problem.target_set.pieces] if problem.m else [(None, None)]
    worst, witness, loc = -math.inf, None, None
    coverage = []
    inconclusive = []
    for i in range(cert.mesh.size):
        rng = np.random.default_rng([cfg.seed, i])
        x, w0, u0, p = cert.x[i], Wt[i], cert.u[i], cert.p[i]
        z0 = problem.join(x, w0, u0)
        ref = float(_hamiltonian(problem, z0, p, cert.lambda0))
        R = float(radii[i])
        r_in = R - 1e-12 if math.isfinite(R) else math.inf
        if r_in <= 0:
            inconclusive.append(i)
            coverage.append(0.0)
            continue
        # control candidates
        nu = problem.n_u
        if nu:
            lo, hi = _u_sampling_box(problem, u0, r_in, cfg.weier_window)
            Uc = lo + (hi - lo) * rng.uniform(size=(k, nu))
            if math.isfinite(r_in):
                d = rng.normal(size=(k, nu))
                d /= np.linalg.norm(d, axis=1, keepdims=True)
                Uc[: k // 2] = u0 + d[: k // 2] * (r_in * rng.uniform(size=(k // 2, 1)) ** (1.0 / nu))
            if nu <= 4:
                corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)])).reshape(nu, -1).T
                Uc = np.vstack([u0[None, :], corners, Uc])
            else:
                Uc = np.vstack([u0[None, :], Uc])
            inU = np.array([problem.control_set.contains(u, cfg.tol_feas)[0] for u in Uc])
            Uc = Uc[inU]
        else:
            Uc = np.zeros((k, 0))
        kk = Uc.shape[0]
        if kk == 0:
            inconclusive.append(i)
            coverage.append(0.0)
            continue
        # free-block seeds: the reference value, or a perturbation of it
        nw = iw.size
        W = np.tile(w0, (kk, 1))
        if nw:
            scale = 0.1 * max(1.0, float(np.abs(w0).max(initial=0.0)))
            W[1::2] += scale * rng.normal(size=W[1::2].shape)
            if problem.m == 0:
                # unconstrained free block: sample it as well
                W = w0 + (r_in if math.isfinite(r_in) else cfg.weier_window) * rng.uniform(-1, 1, size=W.shape) / math.sqrt(max(nw, 1))
        W, Uc, ok = _solve_free(problem, x, W, Uc, cfg, K_rows)
        cand = np.hstack([W, Uc])
        ref_wu = np.concatenate([w0, u0])
        if math.isfinite(r_in):
            ok &= np.linalg.norm(cand - ref_wu, axis=1) <= r_in
        frac = float(ok.mean())
        coverage.append(frac)
        if frac < cfg.min_coverage or not ok.any():
            inconclusive.append(i)
            continue
        Z = np.empty((problem.n, int(ok.sum())))
        Z[ix] = x[:, None]
        Z[iw] = W[ok].T
        Z[iu] = Uc[ok].T
        vals = _hamiltonian(problem, Z, p, cert.lambda0)
        j = int(np.argmax(vals))
        margin = float(vals[j] - ref)
        if margin > worst:
            worst, loc = margin, i
            witness = {"node": i, "w": W[ok][j], "u": Uc[ok][j], "value": float(vals[j]), "reference": ref, "margin": margin}
    details = {
        "coverage_min": min(coverage) if coverage else 0.0,
        "coverage_mean": float(np.mean(coverage)) if coverage else 0.0,
        "inconclusive_nodes": inconclusive,
        "samples_per_node": k,
    }
    if worst > cfg.tol_weier:
        details["witness"] = witness
        return ConditionResult("weierstrass", FAIL, worst, loc, cfg.tol_weier, details)
    if inconclusive:
        return ConditionResult("weierstrass", INCONCLUSIVE, max(worst, 0.0) if math.isfinite(worst) else 0.0,
                               inconclusive[0], cfg.tol_weier, details)
    return ConditionResult("weierstrass", SAMPLED_PASS, max(worst, 0.0), loc, cfg.tol_weier, details)


# ---------------------------------------------------------------------------
# multiplier estimate


def estimate_bound_constants(cert: Certificate, problem: ControlProblem) -> dict:
    """Constants of the multiplier estimate, measured along the certificate.

    ``kappa`` is the largest ``1/sigma_min`` of the constraint Jacobian,
    ``k`` the largest ``|p'|/|p|`` (for the implicit form ``|(p', p)|/|p|``,
    since ``p`` itself enters the velocity slot), ``k_phi`` the largest
    dynamics-Jacobian norm (zero for the implicit form, where that slot is
    covered by ``k``) and ``k_F`` the largest running-cost gradient norm.
    """
    Z = _nodes(problem, cert)
    pdot = adjoint_derivative(cert)
    kappa = 0.0
    k = 0.0
    k_phi = 0.0
    k_F = 0.0
    for i in range(Z.shape[0]):
        if problem.m:
            s = np.linalg.svd(problem.constraint.jacobian(Z[i]), compute_uv=False)
            smin = s[-1] if s.size >= problem.m else 0.0
            kappa = max(kappa, 1.0 / smin if smin > 1e-14 else math.inf)
        pn = np.linalg.norm(cert.p[i])
        if pn > 1e-14:
            num = np.linalg.norm(np.r_[pdot[i], cert.p[i]]) if problem.form == "implicit" else np.linalg.norm(pdot[i])
            k = max(k, num / pn)
        if problem.form == "explicit":
            k_phi = max(k_phi, float(np.linalg.norm(problem.dyn.jacobian(Z[i]), 2)))
        k_F = max(k_F, float(np.linalg.norm(problem.running_cost.jacobian(Z[i]))))
    return {"kappa": kappa, "k": k, "k_phi": k_phi, "k_F": k_F}


def verify_multiplier_bound(cert: Certificate, problem: ControlProblem | None = None, constants: dict | None = None) -> ConditionResult:
    """``|lam_i| <= kappa{(k + k_phi)|p_i| + lambda0 k_F}`` at every node."""
    if cert.lam is None:
        raise CertificateError("multiplier bound needs a lambda track")
    if constants is None:
        if problem is None:
            raise CertificateError("give the constants or the problem to estimate them")
        constants = estimate_bound_constants(cert, problem)
    c = {"k_phi": 0.0, "k_F": 0.0, "k": 0.0, **constants}
    lam_n = np.linalg.norm(cert.lam, axis=1)
    bound = c["kappa"] * ((c["k"] + c["k_phi"]) * np.linalg.norm(cert.p, axis=1) + cert.lambda0 * c["k_F"])
    excess = lam_n - bound
    i = int(np.argmax(excess))
    details = {"constants": c, "max_lambda": float(lam_n.max()), "min_bound": float(np.min(bound))}
    if problem is not None and problem.n_u and cert.mu is not None and np.any(np.abs(cert.mu) > 0):
        details["note"] = "estimate presumes a trivial control normal cone"
    status = PASS if np.all(excess <= 0) else FAIL
    return ConditionResult("multiplier_bound", status, float(excess[i]), i, None, details)


# ---------------------------------------------------------------------------
# structured E


def verify_structured_E(cert: Certificate, problem: ControlProblem, tol: float = 1e-8):
    """Reductions for ``E x' = g(x, u)``; returns ``(ConditionResult, lam track)``.

    Full row rank: ``lam = (E E^T)^{-1} E p`` and both adjoint lines.
    Otherwise: ``p = E^T lam`` solved in least squares, then all three lines.
    Running-cost terms enter with ``lambda0`` (they vanish when there is no
    running cost).
    """
    sE = problem.structured_E
    if sE is None:
        raise CertificateError("problem declares no structured E")
    E = sE.E
    m, nx = E.shape
    if nx != problem.n_x:
        raise CertificateError("E has the wrong number of columns")
    full_row = np.linalg.matrix_rank(E) == m
    pdot = adjoint_derivative(cert)
    Z = _nodes(problem, cert)
    ix, iw, iu = _blocks(problem)
    lams = np.zeros((Z.shape[0], m))
    worst = {"p_dot": 0.0, "mu": 0.0, "p_range": 0.0, "mu_cone": 0.0}
    loc = {}
    full = None
    if not full_row and cert.lam is None:
        _, full = verify_euler_explicit(cert, problem)
    for i in range(Z.shape[0]):
        z = Z[i]
        gF = problem.running_cost.jacobian(z)[0]
        xu = np.concatenate([z[ix], z[iu]])
        Jg = sE.g.jacobian(xu)
        gx, gu = Jg[:, : problem.n_x], Jg[:, problem.n_x :]
        rhs_p = cert.p[i] - cert.lambda0 * gF[iw]
        if full_row:
            lam = np.linalg.solve(E @ E.T, E @ rhs_p)
        else:
            lam = cert.lam[i] if cert.lam is not None else full.lam[i]
            r = float(np.linalg.norm(E.T @ lam - rhs_p))
            if r > worst["p_range"]:
                worst["p_range"], loc["p_range"] = r, i
        lams[i] = lam
        r1 = float(np.linalg.norm(pdot[i] - (cert.lambda0 * gF[ix] - gx.T @ lam)))
        mu_formula = gu.T @ lam - cert.lambda0 * gF[iu]
        if r1 > worst["p_dot"]:
            worst["p_dot"], loc["p_dot"] = r1, i
        if cert.mu is not None:
            r2 = float(np.linalg.norm(cert.mu[i] - mu_formula))
            if r2 > worst["mu"]:
                worst["mu"], loc["mu"] = r2, i
        if problem.n_u:
            Uc = clarke_normal_cone(problem.control_set, z[iu], tol=1e-7)
            cv = member_of_cone(Uc, mu_formula)[1]
            if cv > worst["mu_cone"]:
                worst["mu_cone"], loc["mu_cone"] = cv, i
    scale = 1.0 + float(np.abs(cert.p).max())
    bad = [k for k, v in worst.items() if v > tol * scale]
    status = FAIL if bad else PASS
    details = {"case": "full row rank" if full_row else "not full row rank", "worst": worst,
               "locations": loc, "failing_lines": bad, "lambda": lams}
    first = loc.get(bad[0]) if bad else None
    return ConditionResult("structured_E", status, max(worst.values()), first, tol, details), lams


# ---------------------------------------------------------------------------
# aggregate


def verify_certificate(cert: Certificate, problem: ControlProblem, config: VerifyConfig | None = None) -> VerifyReport:
    """Run every applicable check and aggregate into a report."""
    cfg = config or VerifyConfig()
    cert.check_dims(problem)
    report = VerifyReport([], cfg.tolerances(), lambda0=cert.lambda0)
    feas = _feasibility(problem, cert, cfg)
    report.conditions.append(feas)
    if feas.status == FAIL:
        report.warnings.append("trajectory infeasible; verification halted")
        return report
    if problem.right_endpoint_free and cert.lambda0 == 0:
        report.warnings.append(
            "free right end point: lambda0 can be taken as 1, a certificate with lambda0 = 0 is abnormal"
        )
    report.conditions.append(verify_nontriviality(cert, cfg.tol_nontriv))
    report.conditions.append(verify_transversality(cert, problem, cfg.tol_trans))
    euler, full = verify_euler_explicit(cert, problem, cfg.tol_euler)
    report.conditions.append(euler)
    report.conditions.append(verify_weierstrass(cert, problem, cfg))
    if cfg.multiplier_bound:
        report.conditions.append(verify_multiplier_bound(full, problem, cfg.bound_constants))
    if problem.structured_E is not None:
        res, _ = verify_structured_E(full if cert.lam is None else cert, problem, cfg.tol_feas)
        report.conditions.append(res)
    return report
