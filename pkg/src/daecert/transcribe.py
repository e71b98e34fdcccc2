"""Direct transcription to an NLP, a small solver, and certificate extraction.

The free block ``w`` (``y`` in the explicit form, ``v`` in the implicit form)
is discretized like a control: one value per node, no continuity
constraint.  Decision vector: node-major stack of layout vectors, so node
``i`` occupies ``z[i*n:(i+1)*n]``.

Defects are normalized by the step (trapezoidal scheme)::

    (x_{i+1} - x_i)/dt_i - (dyn_i + dyn_{i+1})/2 = 0

so the defect multiplier behaves like ``dt * p`` and ``p = m/dt``.  The
Lagrangian convention is ``f + m.c + nu.g`` with ``g <= 0`` and ``nu >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from .certificate import Certificate, VerifyConfig, VerifyReport, verify_certificate
from .expr import DomainError
from .polyhedra import Polyhedron
from .problem import ControlProblem

__all__ = [
    "TranscriptionError",
    "NotConvergedError",
    "Nlp",
    "SolveOptions",
    "NlpSolution",
    "discretize",
    "solve_nlp",
    "kkt_residuals",
    "extract_adjoint",
    "solve_and_verify",
    "NOT_GUARANTEED",
]

NOT_GUARANTEED = (
    "necessary conditions not guaranteed: no calmness-sufficient constraint "
    "qualification established along the trajectory"
)
BOUND_TOL = 1e-9


class TranscriptionError(ValueError):
    """Problem cannot be transcribed (for example an unselected union piece)."""


class NotConvergedError(RuntimeError):
    """Raised when a certificate is requested from a non-converged solution."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


def _select_piece(U, key, pieces, what) -> Polyhedron:
    if len(U.pieces) == 1:
        return U.pieces[0]
    if key not in pieces:
        raise TranscriptionError(
            f"{what} is a union of {len(U.pieces)} pieces; declare pieces.{key} to pick one"
        )
    k = int(pieces[key])
    if not 0 <= k < len(U.pieces):
        raise TranscriptionError(f"pieces.{key} = {k} out of range")
    return U.pieces[k]


def _split_rows(M, r):
    """Separate single-coordinate rows (bounds) from general rows."""
    single, general = [], []
    for i in range(M.shape[0]):
        nz = np.flatnonzero(M[i])
        (single if nz.size == 1 else general).append(i)
    return single, general


@dataclass
class Nlp:
    """Transcribed problem; built by ``discretize``."""

    problem: ControlProblem
    N: int
    scheme: str
    mesh: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    K_piece: Polyhedron
    lin_eq: tuple  # (A, b, tags)
    lin_in: tuple  # (A, b, tags)

    @property
    def n(self) -> int:
        return self.problem.n

    @property
    def nodes(self) -> int:
        return self.N + 1

    @property
    def nz(self) -> int:
        return self.nodes * self.n

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.mesh)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights."""
        w = np.zeros(self.nodes)
        w[:-1] += 0.5 * self.dt
        w[1:] += 0.5 * self.dt
        return w

    @property
    def index(self) -> dict:
        L = self.problem.layout
        return {
            "x": np.arange(L.slice("x").start, L.slice("x").stop),
            "w": np.arange(L.slice(self.problem.free_block).start, L.slice(self.problem.free_block).stop),
            "u": np.arange(L.slice("u").start, L.slice("u").stop),
        }

    def var(self, node: int, block: str) -> np.ndarray:
        return node * self.n + self.index[block]

    # -- row counts ---------------------------------------------------------
    @property
    def n_defect(self) -> int:
        return self.N * self.problem.n_x

    @property
    def n_path_eq(self) -> int:
        return self.nodes * self.K_piece.G.shape[0]

    @property
    def n_path_in(self) -> int:
        return self.nodes * self.K_piece.A.shape[0]

    @property
    def n_eq(self) -> int:
        return self.n_defect + self.n_path_eq + self.lin_eq[0].shape[0]

    @property
    def n_in(self) -> int:
        return self.n_path_in + self.lin_in[0].shape[0]

    def nodes_of(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float).reshape(self.nodes, self.n)

    # -- evaluation ---------------------------------------------------------
    def _ends(self, Z):
        ix = self.index["x"]
        return np.concatenate([Z[0, ix], Z[-1, ix]])

    def objective(self, z):
        """Value and gradient of ``f(x0, xN) + sum w_i F(z_i)``."""
        P = self.problem
        Z = self.nodes_of(z)
        Fv, FJ = P.running_cost.value_and_jacobian(Z.T)
        w = self.weights
        val = float(w @ Fv[0])
        grad = (w[:, None] * FJ[:, 0, :]).copy()
        fv, fJ = P.endpoint_cost.value_and_jacobian(self._ends(Z))
        ix = self.index["x"]
        nx = ix.size
        grad[0, ix] += fJ[0, :nx]
        grad[-1, ix] += fJ[0, nx:]
        return val + float(fv[0]), grad.ravel()

    def equalities(self, z):
        """Stacked equality residuals and dense Jacobian."""
        P = self.problem
        Z = self.nodes_of(z)
        n, nx, N1 = self.n, P.n_x, self.nodes
        ix = self.index["x"]
        dv, dJ = P.dyn.value_and_jacobian(Z.T)  # (nx, N1), (N1, nx, n)
        J = np.zeros((self.n_eq, self.nz))
        c = np.zeros(self.n_eq)
        dt = self.dt
        N = self.N
        ar = np.arange(N)
        X = Z[:, ix]
        D = J[: self.n_defect].reshape(N, nx, N1, n)
        if self.scheme == "trapezoidal":
            c[: self.n_defect] = ((X[1:] - X[:-1]) / dt[:, None] - 0.5 * (dv[:, :-1] + dv[:, 1:]).T).ravel()
            D[ar, :, ar, :] = -0.5 * dJ[:-1]
            D[ar, :, ar + 1, :] = -0.5 * dJ[1:]
        else:
            c[: self.n_defect] = ((X[1:] - X[:-1]) / dt[:, None] - dv[:, 1:].T).ravel()
            D[ar, :, ar + 1, :] = -dJ[1:]
        for k in range(nx):
            D[ar, k, ar, ix[k]] -= 1.0 / dt
            D[ar, k, ar + 1, ix[k]] += 1.0 / dt
        r0 = self.n_defect
        G, g = self.K_piece.G, self.K_piece.g
        k = G.shape[0]
        if k:
            Pv, PJ = P.constraint.value_and_jacobian(Z.T)
            c[r0 : r0 + self.n_path_eq] = (G @ Pv - g[:, None]).T.ravel()
            B = J[r0 : r0 + self.n_path_eq].reshape(N1, k, N1, n)
            a1 = np.arange(N1)
            B[a1, :, a1, :] = np.einsum("rk,ikn->irn", G, PJ)
        r0 += self.n_path_eq
        A, b_, _ = self.lin_eq
        if A.shape[0]:
            c[r0:] = A @ z - b_
            J[r0:] = A
        return c, J

    def inequalities(self, z):
        """Stacked ``g(z) <= 0`` residuals and dense Jacobian."""
        P = self.problem
        Z = self.nodes_of(z)
        n, N1 = self.n, self.nodes
        J = np.zeros((self.n_in, self.nz))
        gv = np.zeros(self.n_in)
        A, b = self.K_piece.A, self.K_piece.b
        k = A.shape[0]
        if k:
            Pv, PJ = P.constraint.value_and_jacobian(Z.T)
            gv[: self.n_path_in] = (A @ Pv - b[:, None]).T.ravel()
            B = J[: self.n_path_in].reshape(N1, k, N1, n)
            a1 = np.arange(N1)
            B[a1, :, a1, :] = np.einsum("rk,ikn->irn", A, PJ)
        Al, bl, _ = self.lin_in
        if Al.shape[0]:
            gv[self.n_path_in :] = Al @ z - bl
            J[self.n_path_in :] = Al
        return gv, J

    def path_multipliers(self, m_eq, m_in) -> np.ndarray:
        """Per-node multipliers mapped into constraint space, shape (N+1, m)."""
        Kp = self.K_piece
        out = np.zeros((self.nodes, self.problem.m))
        k = Kp.G.shape[0]
        if k:
            eta = m_eq[self.n_defect : self.n_defect + self.n_path_eq].reshape(self.nodes, k)
            out += eta @ Kp.G
        k = Kp.A.shape[0]
        if k:
            zeta = m_in[: self.n_path_in].reshape(self.nodes, k)
            out += zeta @ Kp.A
        return out

    def lagrangian_hessian(self, z, m_eq, m_in) -> np.ndarray:
        """Dense Hessian of ``f + m.c + nu.g`` in ``z``."""
        P = self.problem
        Z = self.nodes_of(z)
        n, nx, N1 = self.n, P.n_x, self.nodes
        blocks = np.zeros((N1, n, n))
        if not all(P.running_cost.is_affine()):
            blocks += self.weights[:, None, None] * P.running_cost.hessians(Z.T)[:, 0]
        if nx and not all(P.dyn.is_affine()):
            md = m_eq[: self.n_defect].reshape(self.N, nx)
            coef = np.zeros((N1, nx))
            if self.scheme == "trapezoidal":
                coef[:-1] -= 0.5 * md
                coef[1:] -= 0.5 * md
            else:
                coef[1:] -= md
            blocks += np.einsum("ik,ikab->iab", coef, P.dyn.hessians(Z.T))
        if P.m and not all(P.constraint.is_affine()):
            lam = self.path_multipliers(m_eq, m_in)
            blocks += np.einsum("ik,ikab->iab", lam, P.constraint.hessians(Z.T))
        H = scipy.linalg.block_diag(*blocks)
        if not all(P.endpoint_cost.is_affine()):
            Hf = P.endpoint_cost.hessians(self._ends(Z))[0]
            idx = np.concatenate([self.var(0, "x"), self.var(self.N, "x")])
            H[np.ix_(idx, idx)] += Hf
        return H

    def initial_point(self, init: dict | None = None) -> np.ndarray:
        """Default: linear interpolation of endpoint data for x, zeros elsewhere."""
        P = self.problem
        init = dict(P.init or {}) | dict(init or {})
        nx = P.n_x
        S = _select_piece(P.endpoint_set, "endpoint", P.pieces, "endpoint_set")
        bounds = S.coordinate_bounds()
        ends = np.zeros(2 * nx)
        if bounds is not None:
            lo, hi = bounds
            for j in range(2 * nx):
                if math.isfinite(lo[j]) and math.isfinite(hi[j]):
                    ends[j] = 0.5 * (lo[j] + hi[j])
                elif math.isfinite(lo[j]):
                    ends[j] = lo[j]
                elif math.isfinite(hi[j]):
                    ends[j] = hi[j]
        tau = (self.mesh - self.mesh[0]) / (self.mesh[-1] - self.mesh[0])
        X = (1 - tau)[:, None] * ends[:nx] + tau[:, None] * ends[nx:]
        W = np.zeros((self.nodes, P.n_w))
        U = np.zeros((self.nodes, P.n_u))
        if P.form == "implicit":
            W = np.gradient(X, self.mesh, axis=0, edge_order=2)

        def fill(key, cur):
            if key not in init:
                return cur
            v = np.asarray(init[key], dtype=float)
            if v.ndim <= 1 and v.size in (1, cur.shape[1]) and cur.shape[1]:
                return np.broadcast_to(v.ravel(), cur.shape).copy()
            v = v.reshape(cur.shape)
            return v.copy()

        X = fill("x", X)
        U = fill("u", U)
        W = fill(P.free_block, W)
        z = np.stack([P.join(X[i], W[i], U[i]) for i in range(self.nodes)]).ravel()
        return np.clip(z, self.lower, self.upper)


def discretize(problem: ControlProblem, N: int, scheme: str = "trapezoidal") -> Nlp:
    """Transcribe on a uniform mesh of ``N`` intervals."""
    if int(N) != N or N < 2:
        raise TranscriptionError("N must be an integer >= 2")
    N = int(N)
    if scheme not in ("trapezoidal", "implicit-euler"):
        raise TranscriptionError(f"unknown scheme {scheme!r}")
    P = problem
    U = _select_piece(P.control_set, "control", P.pieces, "control_set") if P.n_u else None
    S = _select_piece(P.endpoint_set, "endpoint", P.pieces, "endpoint_set")
    Kp = _select_piece(P.target_set, "target", P.pieces, "target_set") if P.m else Polyhedron.whole(0)
    mesh = np.linspace(P.horizon[0], P.horizon[1], N + 1)
    n, N1 = P.n, N + 1
    nz = n * N1
    lower = np.full(nz, -np.inf)
    upper = np.full(nz, np.inf)
    L = P.layout
    iu = np.arange(L.slice("u").start, L.slice("u").stop)
    ix = np.arange(L.slice("x").start, L.slice("x").stop)
    eq_rows, eq_rhs, eq_tags = [], [], []
    in_rows, in_rhs, in_tags = [], [], []

    def add_set(poly, cols_of, nodes, tag):
        # cols_of(node) -> decision indices of the set's coordinates
        for M, r, is_eq in ((poly.A, poly.b, False), (poly.G, poly.g, True)):
            single, general = _split_rows(M, r)
            for node in nodes:
                cols = cols_of(node)
                for i in single:
                    j = int(np.flatnonzero(M[i])[0])
                    a, val = M[i, j], r[i] / M[i, j]
                    k = cols[j]
                    if is_eq:
                        lower[k] = max(lower[k], val)
                        upper[k] = min(upper[k], val)
                    elif a > 0:
                        upper[k] = min(upper[k], val)
                    else:
                        lower[k] = max(lower[k], val)
                for i in general:
                    row = np.zeros(nz)
                    row[cols] = M[i]
                    (eq_rows if is_eq else in_rows).append(row)
                    (eq_rhs if is_eq else in_rhs).append(r[i])
                    (eq_tags if is_eq else in_tags).append((tag, node, i))

    if U is not None:
        add_set(U, lambda i: i * n + iu, range(N1), "control")
    add_set(S, lambda _: np.concatenate([ix, N * n + ix]), [0], "endpoint")
    if np.any(lower > upper + 1e-12):
        raise TranscriptionError("contradictory bounds from the control or endpoint set")

    def mat(rows, rhs):
        if rows:
            return np.array(rows), np.array(rhs, dtype=float)
        return np.zeros((0, nz)), np.zeros(0)

    A_eq, b_eq = mat(eq_rows, eq_rhs)
    A_in, b_in = mat(in_rows, in_rhs)
    return Nlp(P, N, scheme, mesh, lower, upper, Kp, (A_eq, b_eq, eq_tags), (A_in, b_in, in_tags))


# ---------------------------------------------------------------------------
# solver


@dataclass
class SolveOptions:
    max_outer: int = 50
    penalty_growth: float = 10.0
    inner_tol: float = 1e-8
    rho0: float = 10.0
    rho_max: float = 1e10
    max_inner: int = 5000
    feas_tol: float = 1e-8
    stat_tol: float = 1e-6
    polish: bool = True
    polish_iters: int = 10
    polish_feas: float = 1e-6  # hand over to the Newton polish below these levels
    polish_stat: float = 1e-4


@dataclass
class NlpSolution:
    z: np.ndarray
    m_eq: np.ndarray
    m_in: np.ndarray
    sigma: np.ndarray  # signed bound multipliers (+ upper, - lower)
    converged: bool
    stats: dict = field(default_factory=dict)


def _bound_multipliers(nlp: Nlp, z, r):
    """Signed bound multipliers ``-r`` on variables sitting at a bound."""
    at_lo = z <= nlp.lower + BOUND_TOL
    at_hi = z >= nlp.upper - BOUND_TOL
    sigma = np.zeros_like(z)
    fixed = at_lo & at_hi
    sigma[fixed] = -r[fixed]
    lo_only = at_lo & ~at_hi
    hi_only = at_hi & ~at_lo
    sigma[lo_only] = np.minimum(-r[lo_only], 0.0)
    sigma[hi_only] = np.maximum(-r[hi_only], 0.0)
    return sigma


def kkt_residuals(nlp: Nlp, z, m_eq, m_in) -> dict:
    """Independent KKT check: stationarity, feasibility, complementarity, sign."""
    _, gf = nlp.objective(z)
    c, Jc = nlp.equalities(z)
    g, Jg = nlp.inequalities(z)
    r = gf + Jc.T @ m_eq + Jg.T @ m_in
    sigma = _bound_multipliers(nlp, z, r)
    stat = float(np.abs(r + sigma).max(initial=0.0))
    bviol = float(max(np.max(nlp.lower - z, initial=0.0), np.max(z - nlp.upper, initial=0.0), 0.0))
    feas = max(float(np.abs(c).max(initial=0.0)), float(np.max(g, initial=0.0)), bviol, 0.0)
    comp = float(np.abs(m_in * g).max(initial=0.0))
    sign = float(max(-np.min(m_in, initial=0.0), 0.0))
    return {"stationarity": stat, "feasibility": feas, "complementarity": comp,
            "sign": sign, "sigma": sigma}


def _al_value(z, nlp, m_eq, m_in, rho):
    f, gf = nlp.objective(z)
    c, Jc = nlp.equalities(z)
    g, Jg = nlp.inequalities(z)
    sh = np.maximum(0.0, m_in + rho * g)
    val = f + m_eq @ c + 0.5 * rho * (c @ c) + (sh @ sh - m_in @ m_in) / (2 * rho)
    grad = gf + Jc.T @ (m_eq + rho * c) + Jg.T @ sh
    return val, grad


def _polish(nlp: Nlp, z, m_eq, m_in, opts: SolveOptions):
    """Newton iterations on the KKT system with the active set frozen."""
    g0, _ = nlp.inequalities(z)
    act = (m_in > 0) | (g0 > -1e-7)
    _, gf = nlp.objective(z)
    c, Jc = nlp.equalities(z)
    g, Jg = nlp.inequalities(z)
    r = gf + Jc.T @ m_eq + Jg.T @ m_in
    sigma = _bound_multipliers(nlp, z, r)
    fixed = (nlp.lower == nlp.upper) | (sigma != 0) | (z <= nlp.lower + BOUND_TOL) | (z >= nlp.upper - BOUND_TOL)
    free = np.flatnonzero(~fixed)
    zc = z.copy()
    me, mi = m_eq.copy(), m_in.copy()
    for _ in range(opts.polish_iters):
        _, gf = nlp.objective(zc)
        c, Jc = nlp.equalities(zc)
        g, Jg = nlp.inequalities(zc)
        A = np.vstack([Jc, Jg[act]])[:, free]
        H = nlp.lagrangian_hessian(zc, me, mi)[np.ix_(free, free)]
        k = A.shape[0]
        M = np.block([[H, A.T], [A, np.zeros((k, k))]])
        rhs = -np.concatenate([gf[free], c, g[act]])
        sol, *_ = scipy.linalg.lstsq(M, rhs, lapack_driver="gelsd")
        zc[free] += sol[: free.size]
        mult = sol[free.size :]
        me = mult[: c.size]
        mi = np.zeros_like(m_in)
        mi[act] = mult[c.size :]
        if np.abs(sol[: free.size]).max(initial=0.0) < 1e-14:
            break
    return zc, me, mi


def solve_nlp(nlp: Nlp, init=None, opts: SolveOptions | None = None) -> NlpSolution:
    """Augmented Lagrangian with bound-constrained L-BFGS-B inner solves."""
    opts = opts or SolveOptions()
    z = nlp.initial_point() if init is None else np.clip(np.asarray(init, float).ravel(), nlp.lower, nlp.upper)
    if z.size != nlp.nz:
        raise TranscriptionError(f"init has {z.size} entries, expected {nlp.nz}")
    m_eq = np.zeros(nlp.n_eq)
    m_in = np.zeros(nlp.n_in)
    rho = opts.rho0
    bounds = list(zip(np.where(np.isfinite(nlp.lower), nlp.lower, None), np.where(np.isfinite(nlp.upper), nlp.upper, None)))
    history = []
    inner_total = 0
    prev_feas = math.inf
    kkt = None
    outer = 0
    try:
        for outer in range(1, opts.max_outer + 1):
            res = minimize(_al_value, z, args=(nlp, m_eq, m_in, rho), jac=True,
                           method="L-BFGS-B", bounds=bounds,
                           options={"maxiter": opts.max_inner, "gtol": opts.inner_tol,
                                    "ftol": 0.0, "maxcor": 30})
            z = res.x
            inner_total += int(res.nit)
            c, _ = nlp.equalities(z)
            g, _ = nlp.inequalities(z)
            m_eq = m_eq + rho * c
            m_in = np.maximum(0.0, m_in + rho * g)
            f, _ = nlp.objective(z)
            kkt = kkt_residuals(nlp, z, m_eq, m_in)
            history.append({"outer": outer, "objective": f, "feasibility": kkt["feasibility"],
                            "stationarity": kkt["stationarity"], "rho": rho})
            if kkt["feasibility"] <= opts.feas_tol and kkt["stationarity"] <= opts.stat_tol:
                break
            if opts.polish and kkt["feasibility"] <= opts.polish_feas and kkt["stationarity"] <= opts.polish_stat:
                break
            if kkt["feasibility"] > max(0.25 * prev_feas, opts.feas_tol):
                rho = min(rho * opts.penalty_growth, opts.rho_max)
            prev_feas = kkt["feasibility"]
    except DomainError as exc:
        return NlpSolution(z, m_eq, m_in, np.zeros_like(z), False,
                           {"error": str(exc), "outer": outer, "history": history})
    polished = False
    if opts.polish and kkt is not None and kkt["feasibility"] <= 1e-4:
        try:
            zp, mep, mip = _polish(nlp, z, m_eq, m_in, opts)
            kp = kkt_residuals(nlp, zp, mep, mip)
            ok = (kp["sign"] <= 1e-10 and kp["feasibility"] <= kkt["feasibility"] + 1e-12
                  and kp["stationarity"] <= max(kkt["stationarity"], 1e-10))
            if ok:
                z, m_eq, m_in, kkt, polished = zp, mep, mip, kp, True
        except (DomainError, np.linalg.LinAlgError, ValueError):
            pass
    converged = kkt["feasibility"] <= opts.feas_tol and kkt["stationarity"] <= opts.stat_tol and kkt["sign"] <= 1e-10
    stats = {
        "outer": outer,
        "inner": inner_total,
        "stationarity": kkt["stationarity"],
        "feasibility": kkt["feasibility"],
        "complementarity": kkt["complementarity"],
        "polished": polished,
        "history": history,
        "objective": nlp.objective(z)[0],
    }
    return NlpSolution(z, m_eq, m_in, kkt["sigma"], converged, stats)


# ---------------------------------------------------------------------------
# certificate extraction


def extract_adjoint(nlp: Nlp, sol: NlpSolution) -> Certificate:
    """Certificate in normal form (``lambda0 = 1``) from a converged solution."""
    if not sol.converged:
        raise NotConvergedError("solution not converged; no certificate extracted", sol)
    P = nlp.problem
    nx = P.n_x
    Z = nlp.nodes_of(sol.z)
    dt = nlp.dt
    w = nlp.weights
    ix, iu = nlp.index["x"], nlp.index["u"]
    md = sol.m_eq[: nlp.n_defect].reshape(nlp.N, nx)
    Pm = md / dt[:, None]  # interval (midpoint) values
    p = np.zeros((nlp.nodes, nx))
    p[1:-1] = 0.5 * (Pm[:-1] + Pm[1:])
    # endpoint values from transversality: p0 = grad_a f + s_a, pN = -(grad_b f + s_b)
    s = sol.sigma.copy()
    A_eq, _, eq_tags = nlp.lin_eq
    A_in, _, in_tags = nlp.lin_in
    r0 = nlp.n_defect + nlp.n_path_eq
    mu = np.zeros((nlp.nodes, P.n_u))
    contrib = s.copy()
    if A_eq.shape[0]:
        contrib += A_eq.T @ sol.m_eq[r0:]
    if A_in.shape[0]:
        contrib += A_in.T @ sol.m_in[nlp.n_path_in :]
    C = contrib.reshape(nlp.nodes, P.n)
    fJ = P.endpoint_cost.jacobian(np.concatenate([Z[0, ix], Z[-1, ix]]))[0]
    p[0] = fJ[:nx] + C[0, ix]
    p[-1] = -(fJ[nx:] + C[-1, ix])
    mu = C[:, iu] / w[:, None]
    lam = nlp.path_multipliers(sol.m_eq, sol.m_in) / w[:, None]
    X = Z[:, ix]
    W = Z[:, nlp.index["w"]]
    return Certificate(nlp.mesh.copy(), X, Z[:, iu], p, 1.0, w=W, lam=lam, mu=mu)


def solve_and_verify(problem: ControlProblem, N: int = 50, scheme: str = "trapezoidal",
                     opts: SolveOptions | None = None, config: VerifyConfig | None = None,
                     init=None, check_cq: bool = True):
    """Discretize, solve, extract and verify; returns ``(certificate, report)``.

    Raises ``NotConvergedError`` if the NLP solver does not converge.
    """
    nlp = discretize(problem, N, scheme)
    z0 = nlp.initial_point(init) if isinstance(init, dict) or init is None else init
    sol = solve_nlp(nlp, z0, opts)
    if not sol.converged:
        raise NotConvergedError(
            f"NLP solver did not converge (feasibility {sol.stats.get('feasibility', math.nan):.3g}, "
            f"stationarity {sol.stats.get('stationarity', math.nan):.3g})", sol)
    cert = extract_adjoint(nlp, sol)
    report = verify_certificate(cert, problem, config)
    report.extra["solver"] = {k: v for k, v in sol.stats.items() if k != "history"}
    if check_cq and problem.m:
        from .cq import CqOptions, check_along_trajectory

        cfg = config or VerifyConfig()
        traj = [problem.join(cert.x[i], cert.w_for(problem)[i], cert.u[i]) for i in range(cert.mesh.size)]
        _, summary = check_along_trajectory(problem.constraint_system(), traj, "along", CqOptions(seed=cfg.seed))
        report.extra["cq"] = summary
        if summary["outcome"] != "established":
            report.warnings.append(NOT_GUARANTEED)
    return cert, report
