"""Brute-force oracles for cone membership on small polyhedra and unions."""

import numpy as np
from scipy.optimize import linprog

from daecert.polyhedra import (
    ConeUnion,
    Polyhedron,
    PolyUnion,
    directional_normal_cone_outer,
    frechet_normal_cone,
    normal_cone_convex,
    tangent_cone,
)

TOL = 1e-7
N_DIRECTIONS = 10_000


def corpus():
    """Fixed list of ``(label, set, point)`` cases in dimensions 2 and 3."""
    box2 = Polyhedron.box([-1, -1], [1, 1])
    wedge = Polyhedron(np.array([[-1.0, 2.0], [-1.0, -0.5]]), np.zeros(2), None, None, 2)
    line = Polyhedron(np.array([[1.0, 0.0]]), np.array([1.0]), np.array([[1.0, -1.0]]), np.zeros(1), 2)
    tri = Polyhedron(np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]]), np.array([0.0, 0.0, 1.0]), None, None, 2)
    cube = Polyhedron.box([0, 0, 0], [1, 1, 1])
    pyramid = Polyhedron(
        np.array([[1.0, 0, -1], [-1.0, 0, -1], [0, 1.0, -1], [0, -1.0, -1]]), np.zeros(4), None, None, 3
    )
    plane_half = Polyhedron(np.array([[0.0, 0.0, 1.0]]), np.zeros(1), np.array([[1.0, 1.0, 1.0]]), np.zeros(1), 3)
    comp = PolyUnion(
        (Polyhedron(np.array([[-1.0, 0.0]]), np.zeros(1), np.array([[0.0, 1.0]]), np.zeros(1), 2),
         Polyhedron(np.array([[0.0, -1.0]]), np.zeros(1), np.array([[1.0, 0.0]]), np.zeros(1), 2)),
        "general",
    )
    ell = PolyUnion((Polyhedron.box([-1, -1], [0, 1]), Polyhedron.box([-1, -1], [1, 0])), "general")
    orth3 = PolyUnion((Polyhedron.nonpositive(3), Polyhedron(-np.eye(3), np.zeros(3), None, None, 3)), "general")
    single = PolyUnion.single
    return [
        ("box2 corner", single(box2), np.array([1.0, 1.0])),
        ("box2 edge", single(box2), np.array([1.0, 0.3])),
        ("box2 interior", single(box2), np.array([0.2, -0.4])),
        ("wedge apex", single(wedge), np.zeros(2)),
        ("line endpoint", single(line), np.array([1.0, 1.0])),
        ("triangle vertex", single(tri), np.array([1.0, 0.0])),
        ("cube vertex", single(cube), np.zeros(3)),
        ("cube edge", single(cube), np.array([0.0, 0.0, 0.5])),
        ("pyramid apex", single(pyramid), np.zeros(3)),
        ("plane and halfspace", single(plane_half), np.zeros(3)),
        ("complementarity corner", comp, np.zeros(2)),
        ("complementarity branch", comp, np.array([0.7, 0.0])),
        ("L-shape reentrant corner", ell, np.zeros(2)),
        ("two orthants", orth3, np.zeros(3)),
    ]


def directions(rng, n, k=N_DIRECTIONS, G=None):
    """Unit directions; half projected onto the kernel of ``G`` when given."""
    D = rng.normal(size=(k, n))
    if G is not None and G.shape[0]:
        _, s, vt = np.linalg.svd(G)
        Z = vt[int(np.sum(s > 1e-12)) :].T
        D[: k // 2] = D[: k // 2] @ Z @ Z.T
    nrm = np.linalg.norm(D, axis=1, keepdims=True)
    return D / np.where(nrm > 0, nrm, 1.0)


def feasible_margin(U: PolyUnion, x, D, t=1e-6):
    """Constraint violation of ``x + t d`` over ``t``; 0 on feasible directions."""
    Y = x + t * D
    best = np.full(D.shape[0], np.inf)
    for p in U.pieces:
        v = np.zeros(D.shape[0])
        if p.A.shape[0]:
            v = np.maximum(v, np.max(Y @ p.A.T - p.b, axis=1))
        if p.G.shape[0]:
            v = np.maximum(v, np.max(np.abs(Y @ p.G.T - p.g), axis=1))
        best = np.minimum(best, v)
    return best / t


def all_equalities(U: PolyUnion, n):
    rows = [p.G for p in U.pieces if p.G.shape[0]]
    return np.vstack(rows) if rows else np.zeros((0, n))


def in_cone_batch(C, V):
    """Distances of the rows of ``V`` to a PolyCone or ConeUnion (H-rep based)."""
    if isinstance(C, ConeUnion):
        return np.min(np.stack([in_cone_batch(c, V) for c in C.cones]), axis=0)
    if C.empty:
        return np.full(V.shape[0], np.inf)
    A, G = C.h_rep()
    d = np.zeros(V.shape[0])
    if A.shape[0]:
        d = np.maximum(d, np.max(V @ A.T, axis=1))
    if G.shape[0]:
        d = np.maximum(d, np.max(np.abs(V @ G.T), axis=1))
    return d


def lp_normal_margin(P: Polyhedron, x, v):
    """``max <v, y - x>`` over ``y in P`` with ``|y - x|_inf <= 1`` (exact normal test)."""
    n = P.dim
    res = linprog(
        -np.asarray(v, float),
        A_ub=P.A if P.A.shape[0] else None,
        b_ub=P.b if P.A.shape[0] else None,
        A_eq=P.G if P.G.shape[0] else None,
        b_eq=P.g if P.G.shape[0] else None,
        bounds=list(zip(x - 1, x + 1)),
        method="highs",
    )
    assert res.status == 0
    return float(-res.fun - v @ x) if n else 0.0


def tangent_disagreements(U, x, rng):
    D = directions(rng, U.dim, G=all_equalities(U, U.dim))
    oracle = feasible_margin(U, x, D)
    pieces = [p for p in U.pieces if p.contains(x)[0]]
    tool = np.min(np.stack([in_cone_batch(tangent_cone(p, x), D) for p in pieces]), axis=0)
    ambiguous = (np.minimum(oracle, tool) > 1e-9) & (np.maximum(oracle, tool) < 1e-5)
    bad = ((oracle <= TOL) != (tool <= TOL)) & ~ambiguous
    return int(bad.sum()), D, oracle


def normal_disagreements(U, x, rng, n_lp=200):
    """Frechet normal cone (the convex normal cone for one piece) vs oracles.

    One-sided on all sampled vectors: a toolkit member must make a
    non-positive product with every sampled feasible direction.  Two-sided on
    ``n_lp`` vectors with the exact LP test applied to every active piece.
    """
    n = U.dim
    _, D, margin = tangent_disagreements(U, x, rng)
    feas = D[margin <= 1e-12]
    pieces = [p for p in U.pieces if p.contains(x)[0]]
    C = frechet_normal_cone(U, x) if len(U.pieces) > 1 else normal_cone_convex(U.pieces[0], x)
    # vectors: random, and nonnegative combinations of active rows (some perturbed)
    V = rng.normal(size=(N_DIRECTIONS, n))
    rows = np.vstack([np.vstack([p.A[p.active_rows(x)], p.G, -p.G]) for p in pieces] + [np.zeros((0, n))])
    if rows.shape[0]:
        W = rng.uniform(0, 1, size=(N_DIRECTIONS // 2, rows.shape[0])) @ rows
        W[::2] += 1e-3 * rng.normal(size=W[::2].shape)
        V[: N_DIRECTIONS // 2] = W
    V /= np.maximum(np.linalg.norm(V, axis=1, keepdims=True), 1e-300)
    tool = in_cone_batch(C, V)
    bad = 0
    inside = tool <= TOL
    if feas.shape[0] and inside.any():
        worst = np.max(V[inside] @ feas.T, axis=1)
        bad += int(np.sum(worst > 1e-6))
    for v, dist in zip(V[:n_lp], tool[:n_lp]):
        lp = max(lp_normal_margin(p, x, v) for p in pieces)
        if min(lp, dist) > 1e-9 and max(lp, dist) < 1e-5:
            continue
        bad += int((lp <= TOL) != (dist <= TOL))
    return bad


def directional_disagreements(U, x, rng, n_dirs=10, n_vecs=30, s=1e-4):
    """Directional cone against exact normal cones at ``x + s d``.

    For a polyhedron ``N_P(x; d) = N_P(x + s d)`` for small ``s``; for a union
    the toolkit's outer cone is the union of these over the pieces that
    contain ``x + s d``.
    """
    if isinstance(U, Polyhedron):
        U = PolyUnion.single(U)
    n = U.dim
    D = directions(rng, n, k=400, G=all_equalities(U, n))
    margin = feasible_margin(U, x, D)
    feas = D[margin <= 1e-12][:n_dirs]
    bad = 0
    for d in feas:
        C = directional_normal_cone_outer(U, x, d)
        y = x + s * d
        pieces = [P for P in U.pieces if P.contains(y)[0]]
        rows = np.vstack([np.vstack([P.A[P.active_rows(y)], P.G, -P.G]) for P in pieces] + [np.zeros((0, n))])
        V = rng.normal(size=(n_vecs, n))
        if rows.shape[0]:
            V[: n_vecs // 2] = rng.uniform(0, 1, size=(n_vecs // 2, rows.shape[0])) @ rows
        for v in V:
            if np.linalg.norm(v) < 1e-12:
                continue
            v = v / np.linalg.norm(v)
            lp = min(lp_normal_margin(P, y, v) for P in pieces)
            dist = in_cone_batch(C, v[None, :])[0]
            if min(lp, dist) > 1e-9 and max(lp, dist) < 1e-5:
                continue
            bad += int((lp <= TOL) != (dist <= TOL))
    # directions outside the tangent cone give the empty cone
    for d in D[margin > 1e-3][:5]:
        C = directional_normal_cone_outer(U, x, d)
        bad += int(not all(c.empty for c in C.cones))
    return bad
