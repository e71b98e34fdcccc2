"""Dense linear algebra helpers and a small exact-pivot simplex solver.

Everything here works on tiny dense problems (tens of variables).  The LP
solver is a two-phase tableau simplex using Bland's rule, which is slow but
never cycles and always pivots the same way on the same data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "rank",
    "null_space",
    "least_squares",
    "LpProblem",
    "LpResult",
    "lp_solve",
    "cone_is_trivial",
]

DEFAULT_RANK_TOL = 1e-8
_ABS_RANK_FLOOR = 1e-13


def rank(M, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Numerical rank: singular values above ``rel_tol * sigma_max`` count."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] <= _ABS_RANK_FLOOR:
        return 0
    return int(np.sum(s > max(rel_tol * s[0], _ABS_RANK_FLOOR)))


def null_space(M, rel_tol: float = DEFAULT_RANK_TOL, n: int | None = None) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of ``M``."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        if n is None:
            n = M.shape[1] if M.ndim == 2 else 0
        return np.eye(n)
    M = np.atleast_2d(M)
    _, s, vt = np.linalg.svd(M)
    r = 0 if s.size == 0 or s[0] <= _ABS_RANK_FLOOR else int(np.sum(s > max(rel_tol * s[0], _ABS_RANK_FLOOR)))
    return vt[r:].T.copy()


def least_squares(A, b):
    """Minimum-norm minimizer of ``|Az - b|``; returns ``(z, residual_norm)``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.size == 0:
        raise ValueError("least_squares needs a nonempty matrix")
    z, *_ = np.linalg.lstsq(A, b, rcond=None)
    return z, float(np.linalg.norm(A @ z - b))


# ---------------------------------------------------------------------------
# linear programming


@dataclass
class LpProblem:
    """maximize ``c @ z`` s.t. ``A z <= b``, ``G z = g``, ``lower <= z <= upper``.

    ``lower``/``upper`` default to unbounded; use ``-inf``/``inf`` entries to
    leave single variables free.
    """

    c: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    G: np.ndarray | None = None
    g: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A, self.b = _block(self.A, self.b, n, "inequality")
        self.G, self.g = _block(self.G, self.g, n, "equality")
        self.lower = _bound(self.lower, n, -np.inf)
        self.upper = _bound(self.upper, n, np.inf)
        for arr in (self.c, self.A, self.b, self.G, self.g):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data must be finite")

    @property
    def n(self) -> int:
        return self.c.size


def _block(M, r, n, what):
    if M is None:
        return np.zeros((0, n)), np.zeros(0)
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        M = M.reshape(0, n)
    M = np.atleast_2d(M)
    r = np.asarray(r, dtype=float).ravel()
    if M.shape[1] != n or M.shape[0] != r.size:
        raise ValueError(f"{what} block has shape {M.shape} with {r.size} right-hand sides for {n} variables")
    return M, r


def _bound(v, n, default):
    if v is None:
        return np.full(n, default)
    v = np.asarray(v, dtype=float).ravel()
    if v.size != n:
        raise ValueError("bound vector length mismatch")
    return v


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0
    info: dict = field(default_factory=dict)


_EPS = 1e-10


def _pivot(T, r, c):
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _simplex(T, basis, n_cols, max_iter):
    """Maximize the objective in the last row of ``T`` (stored as -c).

    Returns ("optimal" | "unbounded", iterations).  Bland's rule throughout.
    """
    m = T.shape[0] - 1
    it = 0
    while it < max_iter:
        obj = T[-1, :n_cols]
        scale = max(1.0, np.abs(obj).max(initial=0.0))
        enter = -1
        for j in range(n_cols):
            if obj[j] < -_EPS * scale:
                enter = j
                break
        if enter < 0:
            return "optimal", it
        col = T[:m, enter]
        rhs = T[:m, -1]
        best_row, best_ratio, best_var = -1, np.inf, None
        for i in range(m):
            if col[i] > _EPS:
                ratio = rhs[i] / col[i]
                if ratio < best_ratio - 1e-12 or (
                    abs(ratio - best_ratio) <= 1e-12 and basis[i] < best_var
                ):
                    best_row, best_ratio, best_var = i, ratio, basis[i]
        if best_row < 0:
            return "unbounded", it
        _pivot(T, best_row, enter)
        basis[best_row] = enter
        it += 1
    raise RuntimeError("simplex iteration limit reached")


def lp_solve(p: LpProblem, max_iter: int = 10_000) -> LpResult:
    """Two-phase dense simplex with Bland's anti-cycling rule."""
    n = p.n
    lo, hi = p.lower, p.upper
    if np.any(lo > hi):
        return LpResult("infeasible")

    # substitute z = offset + S @ w with w >= 0
    cols = []  # (original index, sign, offset)
    for j in range(n):
        if np.isfinite(lo[j]):
            cols.append((j, 1.0, lo[j]))
        elif np.isfinite(hi[j]):
            cols.append((j, -1.0, hi[j]))
        else:
            cols.append((j, 1.0, 0.0))
            cols.append((j, -1.0, 0.0))
    S = np.zeros((n, len(cols)))
    offset = np.zeros(n)
    for k, (j, s, off) in enumerate(cols):
        S[j, k] = s
        if s > 0 or np.isfinite(hi[j]) and not np.isfinite(lo[j]):
            offset[j] = off
    # rows: inequalities, upper bounds for doubly bounded variables, equalities
    A_rows = [p.A @ S]
    b_rows = [p.b - p.A @ offset]
    box = [j for j in range(n) if np.isfinite(lo[j]) and np.isfinite(hi[j])]
    if box:
        E = np.zeros((len(box), n))
        for r, j in enumerate(box):
            E[r, j] = 1.0
        A_rows.append(E @ S)
        b_rows.append(hi[box] - lo[box])
    Aw = np.vstack(A_rows)
    bw = np.concatenate(b_rows)
    Gw = p.G @ S
    gw = p.g - p.G @ offset
    cw = S.T @ p.c

    mi, me, nw = Aw.shape[0], Gw.shape[0], S.shape[1]
    m = mi + me
    # columns: w (nw), slacks (mi), artificials (m)
    n_cols = nw + mi + m
    T = np.zeros((m + 1, n_cols + 1))
    T[:mi, :nw] = Aw
    T[:mi, nw : nw + mi] = np.eye(mi)
    T[:mi, -1] = bw
    T[mi:m, :nw] = Gw
    T[mi:m, -1] = gw
    neg = T[:m, -1] < 0
    T[:m][neg] *= -1.0
    basis = []
    art_cols = []
    for i in range(m):
        if i < mi and not neg[i]:
            basis.append(nw + i)
        else:
            c = nw + mi + i
            T[i, c] = 1.0
            basis.append(c)
            art_cols.append(c)
    iters = 0
    if art_cols:
        # phase one: maximize -(sum of artificials)
        T[-1, :] = 0.0
        for c in art_cols:
            T[-1, c] = 1.0
        for i, bcol in enumerate(basis):
            if bcol in art_cols:
                T[-1] -= T[i]
        status, it = _simplex(T, basis, n_cols, max_iter)
        iters += it
        if -T[-1, -1] > 1e-8 * max(1.0, np.abs(T[:m, -1]).max(initial=0.0)):
            return LpResult("infeasible", iterations=iters)
        # drive artificials out of the basis where possible
        for i in range(m):
            if basis[i] >= nw + mi:
                for j in range(nw + mi):
                    if abs(T[i, j]) > 1e-9:
                        _pivot(T, i, j)
                        basis[i] = j
                        break
        keep = [i for i in range(m) if basis[i] < nw + mi]
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[i] for i in keep]
        m = len(keep)
    # phase two on the structural + slack columns only
    n2 = nw + mi
    T2 = np.zeros((m + 1, n2 + 1))
    T2[:m, :n2] = T[:m, :n2]
    T2[:m, -1] = T[:m, -1]
    T2[-1, :nw] = -cw
    for i, bcol in enumerate(basis):
        if abs(T2[-1, bcol]) > 0:
            T2[-1] -= T2[-1, bcol] * T2[i]
    status, it = _simplex(T2, basis, n2, max_iter)
    iters += it
    if status == "unbounded":
        return LpResult("unbounded", iterations=iters)
    w = np.zeros(n2)
    for i, bcol in enumerate(basis):
        w[bcol] = T2[i, -1]
    z = offset + S @ w[:nw]
    return LpResult("optimal", z, float(p.c @ z), iters)


def cone_is_trivial(A=None, G=None, n: int | None = None, tol: float = 1e-9):
    """Decide whether ``{lam : A lam <= 0, G lam = 0}`` is ``{0}``.

    Maximizes and minimizes every coordinate over the cone intersected with
    the box ``|lam_i| <= 1``.  Returns ``(True, None)`` or ``(False, witness)``
    with the witness scaled to unit max-norm.
    """
    if n is None:
        for M in (A, G):
            if M is not None and np.asarray(M).ndim == 2:
                n = np.asarray(M).shape[1]
                break
    if n is None:
        raise ValueError("cannot infer the cone dimension")
    if n == 0:
        return True, None
    A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float).reshape(-1, n)
    G = np.zeros((0, n)) if G is None else np.asarray(G, dtype=float).reshape(-1, n)
    lo, hi = -np.ones(n), np.ones(n)
    for i in range(n):
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[i] = sign
            res = lp_solve(LpProblem(c, A, np.zeros(A.shape[0]), G, np.zeros(G.shape[0]), lo, hi))
            if res.status == "optimal" and res.objective > tol:
                w = res.x / np.abs(res.x).max()
                return False, w
    return True, None
