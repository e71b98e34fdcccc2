"""Polyhedra, finite unions of polyhedra, and the cones attached to them.

Cones are stored in H-representation ``{w : A w <= 0, G w = 0}`` and/or
V-representation ``cone(rays) + span(lineality)``.  Conversions between the
two use the double-description method and are memoized per cone.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.optimize import nnls

from .linalg_lp import LpProblem, lp_solve, null_space

__all__ = [
    "DimensionCapExceeded",
    "Polyhedron",
    "PolyUnion",
    "PolyCone",
    "ConeUnion",
    "contains",
    "tangent_cone",
    "normal_cone_convex",
    "frechet_normal_cone",
    "limiting_normal_cone_outer",
    "clarke_normal_cone",
    "directional_normal_cone",
    "directional_normal_cone_outer",
    "member_of_cone",
    "double_description",
]

ACTIVE_TOL = 1e-9
MEMBER_TOL = 1e-9
DD_DIM_CAP = 8


class DimensionCapExceeded(RuntimeError):
    """Raised when a generator computation exceeds the ambient-dimension cap."""


def _as_rows(M, n):
    if M is None:
        return np.zeros((0, n))
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((0, n))
    return np.atleast_2d(M).reshape(-1, n)


def _normalize_rows(M):
    if M.shape[0] == 0:
        return M
    nrm = np.linalg.norm(M, axis=1)
    keep = nrm > 1e-14
    return M[keep] / nrm[keep, None]


# ---------------------------------------------------------------------------
# sets


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """Convex polyhedron ``{x : A x <= b, G x = g}``."""

    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    g: np.ndarray

    def __init__(self, A=None, b=None, G=None, g=None, dim: int | None = None):
        if dim is None:
            for M in (A, G):
                if M is not None and np.asarray(M).size:
                    dim = np.atleast_2d(np.asarray(M)).shape[1]
                    break
        if dim is None:
            raise ValueError("cannot infer the ambient dimension of the polyhedron")
        A = _as_rows(A, dim)
        G = _as_rows(G, dim)
        b = np.zeros(0) if A.shape[0] == 0 else np.asarray(b, dtype=float).ravel()
        g = np.zeros(0) if G.shape[0] == 0 else np.asarray(g, dtype=float).ravel()
        if b.size != A.shape[0] or g.size != G.shape[0]:
            raise ValueError("right-hand side length does not match constraint rows")
        for arr in (A, b, G, g):
            if not np.all(np.isfinite(arr)):
                raise ValueError("polyhedron data must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "g", g)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    # constructors for the common shapes
    @classmethod
    def whole(cls, n):
        return cls(dim=n)

    @classmethod
    def zero(cls, n):
        return cls(G=np.eye(n), g=np.zeros(n), dim=n)

    @classmethod
    def point(cls, x):
        x = np.asarray(x, dtype=float).ravel()
        return cls(G=np.eye(x.size), g=x, dim=x.size)

    @classmethod
    def nonpositive(cls, n):
        return cls(A=np.eye(n), b=np.zeros(n), dim=n)

    @classmethod
    def box(cls, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        n = lo.size
        rows, rhs = [], []
        for i in range(n):
            if np.isfinite(hi[i]):
                r = np.zeros(n)
                r[i] = 1.0
                rows.append(r)
                rhs.append(hi[i])
            if np.isfinite(lo[i]):
                r = np.zeros(n)
                r[i] = -1.0
                rows.append(r)
                rhs.append(-lo[i])
        return cls(A=np.array(rows).reshape(-1, n), b=np.array(rhs), dim=n)

    def violation(self, x) -> float:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.dim:
            raise ValueError(f"point has length {x.size}, set lives in dimension {self.dim}")
        v = 0.0
        if self.A.shape[0]:
            v = max(v, float(np.max(self.A @ x - self.b)))
        if self.G.shape[0]:
            v = max(v, float(np.max(np.abs(self.G @ x - self.g))))
        return v

    def active_rows(self, x, tol: float = ACTIVE_TOL) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if self.A.shape[0] == 0:
            return np.zeros(0, dtype=int)
        return np.flatnonzero(self.A @ x - self.b >= -tol)

    def contains(self, x, tol: float = MEMBER_TOL):
        ok = self.violation(x) <= tol
        return ok, (self.active_rows(x, tol) if ok else None)

    def is_empty(self) -> bool:
        res = lp_solve(LpProblem(np.zeros(self.dim), self.A, self.b, self.G, self.g))
        return res.status == "infeasible"

    def coordinate_bounds(self):
        """Per-coordinate ``(lo, hi)`` if every row involves a single coordinate, else None."""
        n = self.dim
        lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
        for row, rhs in zip(self.A, self.b):
            nz = np.flatnonzero(row)
            if nz.size != 1:
                return None
            j = nz[0]
            if row[j] > 0:
                hi[j] = min(hi[j], rhs / row[j])
            else:
                lo[j] = max(lo[j], rhs / row[j])
        for row, rhs in zip(self.G, self.g):
            nz = np.flatnonzero(row)
            if nz.size != 1:
                return None
            j = nz[0]
            lo[j] = max(lo[j], rhs / row[j])
            hi[j] = min(hi[j], rhs / row[j])
        return lo, hi

    def product(self, other: "Polyhedron") -> "Polyhedron":
        n1, n2 = self.dim, other.dim
        A = np.block([[self.A, np.zeros((self.A.shape[0], n2))], [np.zeros((other.A.shape[0], n1)), other.A]])
        G = np.block([[self.G, np.zeros((self.G.shape[0], n2))], [np.zeros((other.G.shape[0], n1)), other.G]])
        return Polyhedron(A, np.concatenate([self.b, other.b]), G, np.concatenate([self.g, other.g]), dim=n1 + n2)

    def same_as(self, other: "Polyhedron") -> bool:
        return (
            self.dim == other.dim
            and self.A.shape == other.A.shape
            and self.G.shape == other.G.shape
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.G, other.G)
            and np.array_equal(self.g, other.g)
        )


TAGS = ("whole-space", "singleton-zero", "nonpositive-orthant", "box", "general")


@dataclass(eq=False)
class PolyUnion:
    """Finite union of convex polyhedra sharing one ambient dimension."""

    pieces: list
    tag: str = "general"
    source: str | None = None  # original set-syntax text, kept for round trips

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("a PolyUnion needs at least one piece")
        dims = {p.dim for p in self.pieces}
        if len(dims) != 1:
            raise ValueError("all pieces must share one ambient dimension")
        if self.tag not in TAGS:
            raise ValueError(f"unknown tag {self.tag!r}")
        if self.tag != "general" and len(self.pieces) != 1:
            raise ValueError("special tags apply to single-piece sets only")

    @property
    def dim(self) -> int:
        return self.pieces[0].dim

    @classmethod
    def single(cls, piece: Polyhedron, tag="general"):
        return cls([piece], tag)

    @classmethod
    def whole(cls, n):
        return cls([Polyhedron.whole(n)], "whole-space")

    @classmethod
    def zero(cls, n):
        return cls([Polyhedron.zero(n)], "singleton-zero")

    @classmethod
    def nonpositive(cls, n):
        return cls([Polyhedron.nonpositive(n)], "nonpositive-orthant")

    @classmethod
    def box(cls, lo, hi):
        return cls([Polyhedron.box(lo, hi)], "box")

    @property
    def is_whole_space(self) -> bool:
        p = self.pieces[0]
        return len(self.pieces) == 1 and p.A.shape[0] == 0 and p.G.shape[0] == 0

    def contains(self, x, tol: float = MEMBER_TOL):
        """Return ``(inside, [(piece index, active rows), ...])``."""
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.dim:
            raise ValueError(f"point has length {x.size}, set lives in dimension {self.dim}")
        active = []
        for i, p in enumerate(self.pieces):
            ok, rows = p.contains(x, tol)
            if ok:
                active.append((i, rows))
        return bool(active), active

    def violation(self, x) -> float:
        return min(p.violation(x) for p in self.pieces)

    def product(self, other: "PolyUnion") -> "PolyUnion":
        pieces = [a.product(b) for a, b in product(self.pieces, other.pieces)]
        return PolyUnion(pieces)


def contains(P, x, tol: float = MEMBER_TOL):
    """Membership for a Polyhedron or PolyUnion (see ``PolyUnion.contains``)."""
    if isinstance(P, Polyhedron):
        P = PolyUnion([P])
    return P.contains(x, tol)


# ---------------------------------------------------------------------------
# double description


def _simplicial_start(A):
    """Pick ``k`` independent rows of the full-column-rank ``A``."""
    k = A.shape[1]
    chosen = []
    basis = np.zeros((0, k))
    for i in range(A.shape[0]):
        trial = np.vstack([basis, A[i]])
        if np.linalg.matrix_rank(trial, tol=1e-10) > basis.shape[0]:
            chosen.append(i)
            basis = trial
            if len(chosen) == k:
                break
    return chosen


def _dd_pointed(A, tol=1e-10):
    """Extreme rays of the pointed cone ``{s : A s <= 0}`` (A has full column rank)."""
    m, k = A.shape
    if k == 0:
        return np.zeros((0, 0))
    start = _simplicial_start(A)
    M = A[start]
    R = -np.linalg.inv(M)  # columns are rays
    rays = [R[:, j] / np.linalg.norm(R[:, j]) for j in range(k)]
    processed = list(start)
    zsets = []
    for r in rays:
        zsets.append(frozenset(i for i in processed if abs(A[i] @ r) <= tol))
    for i in range(m):
        if i in start:
            continue
        a = A[i]
        vals = [a @ r for r in rays]
        pos = [j for j, v in enumerate(vals) if v > tol]
        neg = [j for j, v in enumerate(vals) if v < -tol]
        zer = [j for j, v in enumerate(vals) if abs(v) <= tol]
        new_rays = [rays[j] for j in neg] + [rays[j] for j in zer]
        new_z = [zsets[j] for j in neg] + [zsets[j] | {i} for j in zer]
        for jp in pos:
            for jn in neg:
                common = zsets[jp] & zsets[jn]
                if len(common) < k - 2:
                    continue
                adjacent = True
                for jo in range(len(rays)):
                    if jo != jp and jo != jn and common <= zsets[jo]:
                        adjacent = False
                        break
                if not adjacent:
                    continue
                r = vals[jp] * rays[jn] - vals[jn] * rays[jp]
                nr = np.linalg.norm(r)
                if nr <= 1e-14:
                    continue
                r = r / nr
                new_rays.append(r)
                new_z.append(common | {i})
        rays, zsets = new_rays, new_z
        processed.append(i)
    # de-duplicate
    out = []
    for r in rays:
        if not any(np.linalg.norm(r - q) <= 1e-9 for q in out):
            out.append(r)
    return np.array(out).T if out else np.zeros((k, 0))


def double_description(A, G=None, n: int | None = None, cap: int = DD_DIM_CAP):
    """Generators of ``{w : A w <= 0, G w = 0}``.

    Returns ``(rays, lineality)`` as column matrices; rays are unit vectors of
    the pointed part, lineality is an orthonormal basis.
    """
    if n is None:
        n = np.atleast_2d(np.asarray(A if A is not None and np.asarray(A).size else G)).shape[1]
    if n > cap:
        raise DimensionCapExceeded(f"dimension cap exceeded: ambient dimension {n} > {cap}")
    A = _normalize_rows(_as_rows(A, n))
    G = _as_rows(G, n)
    N0 = null_space(G, n=n) if G.shape[0] else np.eye(n)
    if N0.shape[1] == 0:
        return np.zeros((n, 0)), np.zeros((n, 0))
    A1 = A @ N0
    if A1.shape[0]:
        Lz = null_space(A1, n=N0.shape[1])
    else:
        Lz = np.eye(N0.shape[1])
    lineality = N0 @ Lz
    Q = null_space(Lz.T, n=N0.shape[1]) if Lz.shape[1] else np.eye(N0.shape[1])
    if Q.shape[1] == 0:
        return np.zeros((n, 0)), lineality
    A2 = _normalize_rows(A1 @ Q)
    S = _dd_pointed(A2)
    rays = N0 @ Q @ S if S.size else np.zeros((n, 0))
    if rays.shape[1]:
        rays = rays / np.linalg.norm(rays, axis=0)
    return rays, lineality


# ---------------------------------------------------------------------------
# cones


class PolyCone:
    """Polyhedral cone with lazily synchronised H- and V-representations."""

    def __init__(self, n, A=None, G=None, rays=None, lineality=None, empty=False):
        self.n = int(n)
        self.empty = bool(empty)
        self._lock = threading.Lock()
        self._A = self._G = None
        self._rays = self._lin = None
        if A is not None or G is not None:
            self._A = _normalize_rows(_as_rows(A, self.n))
            self._G = _as_rows(G, self.n)
        if rays is not None or lineality is not None:
            self._rays = _as_rows(None if rays is None else np.asarray(rays, dtype=float).T, self.n).T
            lin = _as_rows(None if lineality is None else np.asarray(lineality, dtype=float).T, self.n).T
            self._lin = lin
        if self._A is None and self._rays is None:
            # no data at all: the whole space
            self._A = np.zeros((0, self.n))
            self._G = np.zeros((0, self.n))

    # constructors
    @classmethod
    def from_h(cls, A, G, n):
        return cls(n, A=A, G=G)

    @classmethod
    def from_v(cls, rays, lineality, n):
        """``rays`` and ``lineality`` are given row-wise (one generator per row)."""
        rays = _as_rows(rays, n)
        lineality = _as_rows(lineality, n)
        return cls(n, rays=rays.T, lineality=lineality.T)

    @classmethod
    def zero(cls, n):
        return cls(n, G=np.eye(n))

    @classmethod
    def whole(cls, n):
        return cls(n, A=np.zeros((0, n)), G=np.zeros((0, n)))

    @classmethod
    def empty_cone(cls, n):
        return cls(n, A=np.zeros((0, n)), G=np.zeros((0, n)), empty=True)

    # representations
    def h_rep(self):
        """``(A, G)`` with unit-norm inequality rows."""
        with self._lock:
            if self._A is None:
                R, L = self._rays, self._lin
                pr, pl = double_description(R.T, L.T, n=self.n)
                self._A = _normalize_rows(pr.T)
                self._G = pl.T
            return self._A, self._G

    def v_rep(self):
        """``(rays, lineality)`` as column matrices."""
        with self._lock:
            if self._rays is None:
                self._rays, self._lin = double_description(self._A, self._G, n=self.n)
            return self._rays, self._lin

    @property
    def has_h(self) -> bool:
        return self._A is not None

    def generators(self):
        """All generators as rows: rays, then +/- lineality vectors."""
        R, L = self.v_rep()
        return np.vstack([R.T, L.T, -L.T]) if (R.size or L.size) else np.zeros((0, self.n))

    def intersect(self, other: "PolyCone") -> "PolyCone":
        if self.empty or other.empty:
            return PolyCone.empty_cone(self.n)
        A1, G1 = self.h_rep()
        A2, G2 = other.h_rep()
        return PolyCone(self.n, A=np.vstack([A1, A2]), G=np.vstack([G1, G2]))

    def is_trivial(self) -> bool:
        if self.empty:
            return True
        R, L = self.v_rep()
        return R.shape[1] == 0 and L.shape[1] == 0

    def contains(self, v, tol: float = MEMBER_TOL):
        return member_of_cone(self, v, tol)

    def __repr__(self):
        if self.empty:
            return f"PolyCone(n={self.n}, empty)"
        parts = []
        if self._A is not None:
            parts.append(f"H: {self._A.shape[0]} ineq, {self._G.shape[0]} eq")
        if self._rays is not None:
            parts.append(f"V: {self._rays.shape[1]} rays, {self._lin.shape[1]} lin")
        return f"PolyCone(n={self.n}, {'; '.join(parts)})"


@dataclass
class ConeUnion:
    """Finite union of polyhedral cones; ``outer`` marks an over-approximation."""

    cones: list
    outer: bool = False
    notes: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.cones[0].n

    def contains(self, v, tol: float = MEMBER_TOL):
        return member_of_cone(self, v, tol)


def member_of_cone(C, v, tol: float = MEMBER_TOL):
    """``(is_member, distance_estimate)`` for a PolyCone or ConeUnion.

    The distance estimate is the largest violation of the unit-normalised
    H-representation rows; for unions the smallest over the pieces.
    """
    v = np.asarray(v, dtype=float).ravel()
    if isinstance(C, ConeUnion):
        best = np.inf
        for c in C.cones:
            ok, d = member_of_cone(c, v, tol)
            best = min(best, d)
        return bool(best <= tol), float(best)
    if v.size != C.n:
        raise ValueError("vector length does not match the cone dimension")
    if C.empty:
        return False, float("inf")
    try:
        A, G = C.h_rep()
    except DimensionCapExceeded:
        R, L = C.v_rep()
        M = np.hstack([R, L, -L])
        if M.shape[1] == 0:
            d = float(np.abs(v).max(initial=0.0))
        else:
            _, d = nnls(M, v)
        return bool(d <= tol), float(d)
    d = 0.0
    if A.shape[0]:
        d = max(d, float(np.max(A @ v)))
    if G.shape[0]:
        d = max(d, float(np.max(np.abs(G @ v))))
    return bool(d <= tol), d


# ---------------------------------------------------------------------------
# cone calculus


def _check_in(P: Polyhedron, x, tol):
    ok, rows = P.contains(x, tol)
    if not ok:
        raise ValueError(f"point is not in the polyhedron (violation {P.violation(x):.3g})")
    return rows


def tangent_cone(P: Polyhedron, x, tol: float = ACTIVE_TOL) -> PolyCone:
    """``{w : A_active w <= 0, G w = 0}``."""
    rows = _check_in(P, x, tol)
    return PolyCone(P.dim, A=P.A[rows], G=P.G)


def normal_cone_convex(P: Polyhedron, x, tol: float = ACTIVE_TOL) -> PolyCone:
    """Conic hull of the active inequality rows plus the span of the equality rows."""
    rows = _check_in(P, x, tol)
    return PolyCone.from_v(_normalize_rows(P.A[rows]), P.G, P.dim)


def _pieces_at(U, x, tol):
    if isinstance(U, Polyhedron):
        U = PolyUnion([U])
    ok, active = U.contains(x, tol)
    if not ok:
        raise ValueError(f"point is not in the set (violation {U.violation(x):.3g})")
    return U, active


def frechet_normal_cone(U, x, tol: float = ACTIVE_TOL) -> PolyCone:
    """Intersection of the active pieces' convex normal cones."""
    U, active = _pieces_at(U, x, tol)
    cone = None
    for i, _ in active:
        c = normal_cone_convex(U.pieces[i], x, tol)
        cone = c if cone is None else cone.intersect(c)
    return cone


def limiting_normal_cone_outer(U, x, tol: float = ACTIVE_TOL) -> ConeUnion:
    """Union of the active pieces' normal cones, flagged outer for genuine unions."""
    U, active = _pieces_at(U, x, tol)
    cones = [normal_cone_convex(U.pieces[i], x, tol) for i, _ in active]
    outer = len(cones) > 1
    notes = ["outer approximation of the limiting normal cone"] if outer else []
    return ConeUnion(cones, outer, notes)


def clarke_normal_cone(U, x, tol: float = ACTIVE_TOL) -> PolyCone:
    """Conic convex hull of every generator of the limiting (outer) cone."""
    lim = limiting_normal_cone_outer(U, x, tol)
    if len(lim.cones) == 1:
        return lim.cones[0]
    rays, lins = [], []
    for c in lim.cones:
        R, L = c.v_rep()
        rays.extend(R.T)
        lins.extend(L.T)
    n = lim.n
    return PolyCone.from_v(np.array(rays).reshape(-1, n), np.array(lins).reshape(-1, n), n)


def directional_normal_cone(P: Polyhedron, x, d, tol: float = ACTIVE_TOL) -> PolyCone:
    """``N_P(x) ∩ d^⊥`` when ``d`` is tangent, the empty cone otherwise."""
    rows = _check_in(P, x, tol)
    d = np.asarray(d, dtype=float).ravel()
    if d.size != P.dim:
        raise ValueError("direction length does not match the set dimension")
    scale = max(1.0, float(np.abs(d).max(initial=0.0)))
    Aa = _normalize_rows(P.A[rows])
    if (Aa.shape[0] and np.max(Aa @ d) > tol * scale) or (
        P.G.shape[0] and np.max(np.abs(P.G @ d)) > tol * scale
    ):
        return PolyCone.empty_cone(P.dim)
    # tangency forces the multipliers of rows with <a, d> < 0 to vanish
    keep = np.abs(Aa @ d) <= tol * scale if Aa.shape[0] else np.zeros(0, dtype=bool)
    return PolyCone.from_v(Aa[keep], P.G, P.dim)


def directional_normal_cone_outer(U, x, d, tol: float = ACTIVE_TOL) -> ConeUnion:
    """Union over active pieces of their directional normal cones (empty ones dropped)."""
    U, active = _pieces_at(U, x, tol)
    cones = []
    for i, _ in active:
        c = directional_normal_cone(U.pieces[i], x, d, tol)
        if not c.empty:
            cones.append(c)
    if not cones:
        return ConeUnion([PolyCone.empty_cone(U.dim)], False)
    outer = len(active) > 1
    return ConeUnion(cones, outer, ["outer approximation of the directional normal cone"] if outer else [])
