"""Pointwise constraint-qualification checkers for perturbed constraint maps.

A ``ConstraintSystem`` is a smooth map ``Phi`` over a layout split into a
state block (the alpha slot), a control block restricted to ``U``, and
blocks whose multiplier component must vanish.  Every checker works on the
abnormal-multiplier system at a feasible point::

    lam in N_K(Phi(pt)),  -J_u^T lam in N_U(u),  J_z^T lam = 0,

plus a checker-specific condition on the state block ``J_x^T lam``.  Cones
of unions are handled piecewise: the Frechet cone (intersection of the
active pieces) yields definite refutations, the union of active pieces
yields sound certifications, and witnesses found only in the latter are
reported as candidate refutations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .expr import VectorFunction
from .linalg_lp import LpProblem, cone_is_trivial, lp_solve, null_space, rank
from .polyhedra import (
    ConeUnion,
    DimensionCapExceeded,
    PolyCone,
    PolyUnion,
    double_description,
    member_of_cone,
    normal_cone_convex,
)

__all__ = [
    "ConstraintSystem",
    "CqVerdict",
    "CqLadderReport",
    "CqOptions",
    "InfeasiblePointError",
    "check_linear_cq",
    "check_nnamcq",
    "check_mfc",
    "check_wbcq",
    "check_ccq",
    "check_foscms",
    "check_soscms",
    "check_rcpld",
    "check_crcq",
    "falsify_quasinormality",
    "check_calmness_sufficient",
    "check_index_one",
    "check_along_trajectory",
    "witness_residual",
]

CERTIFIED = "certified"
REFUTED = "refuted"
CANDIDATE = "candidate-refuted"
INCONCLUSIVE = "inconclusive"

FOSCMS_DIM_CAP = 6
FOSCMS_SUBSET_CAP = 2**12
MAX_PIECES = 8


class InfeasiblePointError(ValueError):
    """The point does not satisfy the constraint system."""


class ConstraintSystem:
    """Map ``Phi`` with ``Phi(pt) in target`` and control block in ``control``."""

    def __init__(self, map: VectorFunction, target: PolyUnion, control: PolyUnion,
                 state: str = "x", control_block: str = "u", zero=("y",)):
        self.map = map
        self.target = target
        self.control = control
        self.state = state
        self.control_block = control_block
        self.zero = tuple(zero)
        if target.dim != map.dim:
            raise ValueError(f"target set has dimension {target.dim}, map has {map.dim} components")
        L = map.layout
        nu = L.block_size(control_block) if L.has(control_block) else 0
        if control.dim != nu:
            raise ValueError(f"control set has dimension {control.dim}, control block has {nu}")
        known = {state, control_block, *self.zero}
        extra = [b for b, _ in L.blocks if b not in known]
        if extra:
            raise ValueError(f"layout blocks {extra} have no role")

    def _idx(self, blocks):
        L = self.map.layout
        out = []
        for b in blocks:
            if L.has(b):
                s = L.slice(b)
                out.extend(range(s.start, s.stop))
        return np.array(out, dtype=int)

    @property
    def ix(self):
        return self._idx([self.state])

    @property
    def iu(self):
        return self._idx([self.control_block])

    @property
    def iz(self):
        return self._idx(self.zero)

    @property
    def n(self) -> int:
        return self.map.layout.size

    @property
    def m(self) -> int:
        return self.map.dim

    @property
    def is_polyhedral_orthant(self) -> bool:
        return len(self.target.pieces) == 1


@dataclass
class CqOptions:
    seed: int = 0
    samples: int = 200
    delta: float = 1e-3
    feas_tol: float = 1e-8
    tol: float = 1e-9


@dataclass
class CqVerdict:
    name: str
    status: str
    witness: dict | None = None
    modulus: float | None = None
    notes: list = field(default_factory=list)
    applicable: bool = True

    def to_dict(self) -> dict:
        d = {"name": self.name, "status": self.status, "applicable": self.applicable, "notes": list(self.notes)}
        if self.witness is not None:
            d["witness"] = {k: _jsonable(v) for k, v in self.witness.items()}
        if self.modulus is not None:
            d["modulus"] = _jsonable(self.modulus)
        return d


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(e) for e in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(e) for e in v]
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


@dataclass
class CqLadderReport:
    point: np.ndarray
    verdicts: list
    sufficient: bool
    via: str | None
    notes: list = field(default_factory=list)

    def verdict(self, name) -> CqVerdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def outcome(self) -> str:
        """``established``, ``refuted`` or ``inconclusive``."""
        if self.sufficient:
            return "established"
        if self.verdict("WBCQ").status == REFUTED:
            return "refuted"
        blocking = [
            v for v in self.verdicts
            if v.name in SUFFICIENT_NAMES and v.applicable and v.status != REFUTED
        ]
        return "refuted" if not blocking else "inconclusive"

    def to_dict(self) -> dict:
        return {
            "point": _jsonable(np.asarray(self.point)),
            "verdicts": [v.to_dict() for v in self.verdicts],
            "witnesses": [
                {"name": v.name, **{k: _jsonable(w) for k, w in v.witness.items()}}
                for v in self.verdicts
                if v.witness is not None
            ],
            "sufficient": self.sufficient,
            "via": self.via,
            "outcome": self.outcome,
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# context at a point


@dataclass
class _Ctx:
    sys: ConstraintSystem
    pt: np.ndarray
    z: np.ndarray
    J: np.ndarray
    u: np.ndarray
    t_active: list
    u_active: list

    @property
    def Jx(self):
        return self.J[:, self.sys.ix]

    @property
    def Ju(self):
        return self.J[:, self.sys.iu]

    @property
    def Jz(self):
        return self.J[:, self.sys.iz]

    def target_cone(self, i):
        return normal_cone_convex(self.sys.target.pieces[i], self.z)

    def control_cone(self, j):
        return normal_cone_convex(self.sys.control.pieces[j], self.u)

    def combos(self):
        """Yield ``(target cones, control cones, exact)``; cones in a list intersect.

        The first entry is the Frechet combination, the rest the piecewise
        limiting ones.
        """
        ti = [i for i, _ in self.t_active]
        uj = [j for j, _ in self.u_active]
        yield [self.target_cone(i) for i in ti], [self.control_cone(j) for j in uj], True
        exact = len(ti) == 1 and len(uj) == 1
        if exact:
            return
        for i, j in itertools.product(ti, uj):
            yield [self.target_cone(i)], [self.control_cone(j)], False


def _prepare(sys: ConstraintSystem, point, opts: CqOptions) -> _Ctx:
    pt = np.asarray(point, dtype=float).ravel()
    if pt.size != sys.n:
        raise ValueError(f"point has {pt.size} entries, layout expects {sys.n}")
    if len(sys.target.pieces) > MAX_PIECES or len(sys.control.pieces) > MAX_PIECES:
        raise ValueError(f"at most {MAX_PIECES} pieces per union are supported")
    z, J = sys.map.value_and_jacobian(pt)
    u = pt[sys.iu]
    ok_t, t_act = sys.target.contains(z, opts.feas_tol)
    ok_u, u_act = sys.control.contains(u, opts.feas_tol)
    if not ok_t:
        raise InfeasiblePointError(f"map value violates the target set by {sys.target.violation(z):.3g}")
    if not ok_u:
        raise InfeasiblePointError(f"control violates the control set by {sys.control.violation(u):.3g}")
    return _Ctx(sys, pt, z, J, u, t_act, u_act)


# ---------------------------------------------------------------------------
# LP over multipliers with auxiliary cone coefficients


class _ConeLp:
    """Linear system in ``lam`` plus auxiliary variables, for maximizing over cones."""

    def __init__(self, nlam, box=1.0):
        self.nv = nlam
        self.lo = [-box] * nlam if box is not None else [-np.inf] * nlam
        self.hi = [box] * nlam if box is not None else [np.inf] * nlam
        self.eq = []  # (terms, rhs)
        self.le = []
        self.infeasible = False

    def new_vars(self, k, lo=-np.inf, hi=np.inf):
        off = self.nv
        self.nv += k
        self.lo += [lo] * k
        self.hi += [hi] * k
        return off

    def add_eq(self, terms, rhs=None):
        if terms and terms[0][1].shape[0]:
            self.eq.append((terms, rhs))

    def add_le(self, terms, rhs=None):
        if terms and terms[0][1].shape[0]:
            self.le.append((terms, rhs))

    def add_member(self, terms, cone):
        """Constrain ``sum(M @ var)`` to lie in ``cone`` (a PolyCone or list meaning intersection)."""
        if isinstance(cone, list):
            for c in cone:
                self.add_member(terms, c)
            return
        if cone.empty:
            self.infeasible = True
            return
        if cone._rays is not None:
            R, L = cone.v_rep()
            more = []
            if R.shape[1]:
                off = self.new_vars(R.shape[1], 0.0, np.inf)
                more.append((off, -R))
            if L.shape[1]:
                off = self.new_vars(L.shape[1])
                more.append((off, -L))
            self.add_eq(list(terms) + more)
        else:
            A, G = cone.h_rep()
            if A.shape[0]:
                self.add_le([(o, A @ M) for o, M in terms])
            if G.shape[0]:
                self.add_eq([(o, G @ M) for o, M in terms])

    def _dense(self, blocks):
        rows, rhs = [], []
        for terms, r in blocks:
            k = terms[0][1].shape[0]
            M = np.zeros((k, self.nv))
            for off, B in terms:
                M[:, off : off + B.shape[1]] += B
            rows.append(M)
            rhs.append(np.zeros(k) if r is None else np.asarray(r, dtype=float))
        if not rows:
            return np.zeros((0, self.nv)), np.zeros(0)
        return np.vstack(rows), np.concatenate(rhs)

    def maximize(self, c_terms):
        c = np.zeros(self.nv)
        for off, v in c_terms:
            c[off : off + v.size] += v
        A, b = self._dense(self.le)
        G, g = self._dense(self.eq)
        return lp_solve(LpProblem(c, A, b, G, g, np.array(self.lo), np.array(self.hi)))


def _premise_lp(ctx: _Ctx, tcones, ucones, box=1.0, fix_x=False):
    """Multiplier system of the abnormal premise, returns the LP with lam at offset 0."""
    m = ctx.sys.m
    lp = _ConeLp(m, box)
    I = np.eye(m)
    lp.add_member([(0, I)], tcones)
    nu = ctx.Ju.shape[1]
    if nu:
        lp.add_member([(0, -ctx.Ju.T)], ucones)
    if ctx.Jz.shape[1]:
        lp.add_eq([(0, ctx.Jz.T)])
    if fix_x and ctx.Jx.shape[1]:
        lp.add_eq([(0, ctx.Jx.T)])
    return lp


def _find_nonzero(lp: _ConeLp, m, tol):
    if lp.infeasible:
        return None
    for i in range(m):
        for s in (1.0, -1.0):
            e = np.zeros(m)
            e[i] = s
            res = lp.maximize([(0, e)])
            if res.status == "optimal" and res.objective > tol:
                lam = res.x[:m]
                return lam / np.abs(lam).max()
    return None


def _triviality(ctx: _Ctx, name, fix_x, opts):
    m = ctx.sys.m
    if m == 0:
        return CqVerdict(name, CERTIFIED, notes=["no constraints"])
    candidate = None
    for tcones, ucones, exact in ctx.combos():
        lam = _find_nonzero(_premise_lp(ctx, tcones, ucones, fix_x=fix_x), m, opts.tol)
        if lam is not None:
            w = {"lambda": lam, "alpha": ctx.Jx.T @ lam}
            if exact:
                return CqVerdict(name, REFUTED, w)
            candidate = candidate or w
    if candidate is not None:
        return CqVerdict(name, CANDIDATE, candidate, notes=["witness found only in the outer approximation of a union's normal cone"])
    return CqVerdict(name, CERTIFIED)


# ---------------------------------------------------------------------------
# public checkers


def check_linear_cq(sys: ConstraintSystem, point=None, opts: CqOptions | None = None) -> CqVerdict:
    """Affinity of every component (the sets are polyhedral unions by construction)."""
    flags = sys.map.is_affine()
    if all(flags):
        return CqVerdict("Linear CQ", CERTIFIED)
    bad = [i for i, f in enumerate(flags) if not f]
    return CqVerdict("Linear CQ", REFUTED, {"components": bad}, notes=[f"non-affine components {bad}"])


def check_nnamcq(sys, point, opts: CqOptions | None = None) -> CqVerdict:
    opts = opts or CqOptions()
    return _triviality(_prepare(sys, point, opts), "NNAMCQ", True, opts)


def check_mfc(sys, point, opts: CqOptions | None = None) -> CqVerdict:
    opts = opts or CqOptions()
    return _triviality(_prepare(sys, point, opts), "MFC", False, opts)


def check_wbcq(sys, point, opts: CqOptions | None = None) -> CqVerdict:
    opts = opts or CqOptions()
    ctx = _prepare(sys, point, opts)
    m, nx = sys.m, ctx.Jx.shape[1]
    if m == 0 or nx == 0:
        return CqVerdict("WBCQ", CERTIFIED)
    tol = opts.tol * max(1.0, float(np.abs(ctx.Jx).max(initial=0.0)))
    candidate = None
    for tcones, ucones, exact in ctx.combos():
        lp = _premise_lp(ctx, tcones, ucones)
        if lp.infeasible:
            continue
        for j in range(nx):
            for s in (1.0, -1.0):
                res = lp.maximize([(0, s * ctx.Jx[:, j])])
                if res.status == "optimal" and res.objective > tol:
                    lam = res.x[:m] / np.abs(res.x[:m]).max()
                    w = {"lambda": lam, "alpha": ctx.Jx.T @ lam}
                    if exact:
                        return CqVerdict("WBCQ", REFUTED, w)
                    candidate = candidate or w
    if candidate is not None:
        return CqVerdict("WBCQ", CANDIDATE, candidate, notes=["witness found only in the outer approximation of a union's normal cone"])
    return CqVerdict("WBCQ", CERTIFIED)


def check_ccq(sys, point, opts: CqOptions | None = None) -> CqVerdict:
    """MFC plus the modulus ``max |lam|_1`` over ``|(beta, gamma)|_1 <= 1``."""
    opts = opts or CqOptions()
    mfc = check_mfc(sys, point, opts)
    if mfc.status != CERTIFIED:
        st = REFUTED if mfc.status == REFUTED else mfc.status
        return CqVerdict("CCQ", st, mfc.witness, notes=["MFC not certified"] + mfc.notes)
    ctx = _prepare(sys, point, opts)
    m = sys.m
    if m == 0:
        return CqVerdict("CCQ", CERTIFIED, modulus=0.0)
    notes = []
    if m <= 10:
        patterns = [np.array(s) for s in itertools.product((1.0, -1.0), repeat=m)]
        factor = 1.0
    else:
        patterns = [s * np.eye(m)[i] for i in range(m) for s in (1.0, -1.0)]
        factor = float(m)
        notes.append("modulus bounded by m * max |lam_i| (too many sign patterns)")
    mu = 0.0
    nu_n, nz = ctx.Ju.shape[1], ctx.Jz.shape[1]
    for tcones, ucones, exact in ctx.combos():
        lp = _ConeLp(m, box=None)
        lp.add_member([(0, np.eye(m))], tcones)
        terms_beta = [(0, ctx.Ju.T)]
        if nu_n:
            off_nu = lp.new_vars(nu_n)
            lp.add_member([(off_nu, np.eye(nu_n))], ucones)
            terms_beta.append((off_nu, np.eye(nu_n)))
        k = nu_n + nz
        if k:
            off_t = lp.new_vars(k, 0.0, np.inf)
            Tu = -np.eye(k)[:nu_n]
            Tz = -np.eye(k)[nu_n:]
            if nu_n:
                lp.add_le(terms_beta + [(off_t, Tu)])
                lp.add_le([(o, -M) for o, M in terms_beta] + [(off_t, Tu)])
            if nz:
                lp.add_le([(0, ctx.Jz.T), (off_t, Tz)])
                lp.add_le([(0, -ctx.Jz.T), (off_t, Tz)])
            lp.add_le([(off_t, np.ones((1, k)))], np.ones(1))
        if lp.infeasible:
            continue
        for s in patterns:
            res = lp.maximize([(0, s)])
            if res.status == "unbounded":
                return CqVerdict("CCQ", INCONCLUSIVE, modulus=math.inf, notes=["modulus LP unbounded"])
            if res.status == "optimal":
                mu = max(mu, res.objective * factor)
    return CqVerdict("CCQ", CERTIFIED, modulus=mu, notes=notes)


# ---------------------------------------------------------------------------
# first- and second-order conditions


@dataclass
class _Face:
    d: np.ndarray
    basis: np.ndarray  # columns span the face
    strict_rows: np.ndarray  # rows that are negative on the relative interior
    combo: tuple


def _critical_faces(ctx: _Ctx):
    """Relative-interior representatives of every nonzero face of the critical cone.

    Raises DimensionCapExceeded past the caps.
    """
    sys = ctx.sys
    n = sys.n
    if n > FOSCMS_DIM_CAP:
        raise DimensionCapExceeded(f"dimension cap exceeded: critical cone lives in dimension {n} > {FOSCMS_DIM_CAP}")
    Eu = np.zeros((len(sys.iu), n))
    Eu[np.arange(len(sys.iu)), sys.iu] = 1.0
    faces = []
    for (ti, trows), (uj, urows) in itertools.product(ctx.t_active, ctx.u_active):
        P, Q = sys.target.pieces[ti], sys.control.pieces[uj]
        ineq = np.vstack([P.A[trows] @ ctx.J, Q.A[urows] @ Eu]) if (len(trows) + len(urows)) else np.zeros((0, n))
        eq = np.vstack([P.G @ ctx.J, Q.G @ Eu])
        r = ineq.shape[0]
        if 2**r > FOSCMS_SUBSET_CAP:
            raise DimensionCapExceeded(f"dimension cap exceeded: {r} active rows give more than {FOSCMS_SUBSET_CAP} faces")
        for mask in range(2**r):
            tight = np.array([(mask >> k) & 1 for k in range(r)], dtype=bool)
            E = np.vstack([eq, ineq[tight]])
            strict = ineq[~tight]
            B = null_space(E, n=n) if E.shape[0] else np.eye(n)
            if B.shape[1] == 0:
                continue
            if strict.shape[0] == 0:
                d = B[:, 0].copy()
            else:
                # maximize t with strict rows <= -t inside the box
                c = np.zeros(n + 1)
                c[-1] = 1.0
                A = np.hstack([strict, np.ones((strict.shape[0], 1))])
                G = np.hstack([E, np.zeros((E.shape[0], 1))]) if E.shape[0] else None
                res = lp_solve(LpProblem(c, A, np.zeros(A.shape[0]), G, None if G is None else np.zeros(G.shape[0]),
                                         np.r_[-np.ones(n), -np.inf], np.r_[np.ones(n), 1.0]))
                if res.status != "optimal" or res.objective <= 1e-9:
                    continue
                d = res.x[:n]
            faces.append(_Face(d / np.abs(d).max(), B, strict, (ti, uj)))
    return faces


def _directional_systems(ctx: _Ctx, face: _Face):
    """``(target cone, control cone, exact)`` triples for the lam-system at ``face.d``."""
    sys = ctx.sys
    ti0, uj0 = face.combo
    w = ctx.J @ face.d
    du = face.d[sys.iu]
    single = len(ctx.t_active) == 1 and len(ctx.u_active) == 1

    def tcone(i):
        P = sys.target.pieces[i]
        if i == ti0:
            from .polyhedra import directional_normal_cone

            return directional_normal_cone(P, ctx.z, w, tol=1e-9), True
        return normal_cone_convex(P, ctx.z), False

    def ucone(j):
        Q = sys.control.pieces[j]
        if j == uj0:
            from .polyhedra import directional_normal_cone

            return directional_normal_cone(Q, ctx.u, du, tol=1e-9), True
        return normal_cone_convex(Q, ctx.u), False

    for (i, _), (j, _) in itertools.product(ctx.t_active, ctx.u_active):
        tc, e1 = tcone(i)
        uc, e2 = ucone(j)
        yield tc, uc, (e1 and e2 and single)


def _first_order(ctx: _Ctx, opts, name="FOSCMS"):
    """Returns (status, witness, notes, faces, per-face nontrivial systems)."""
    m = ctx.sys.m
    faces = _critical_faces(ctx)
    nontrivial = []
    refuted = candidate = None
    for face in faces:
        for tc, uc, exact in _directional_systems(ctx, face):
            lam = _find_nonzero(_premise_lp(ctx, [tc], [uc], fix_x=True), m, opts.tol) if m else None
            if lam is not None:
                nontrivial.append((face, tc, uc, exact))
                w = {"d": face.d, "lambda": lam}
                if exact and refuted is None:
                    refuted = w
                elif not exact and candidate is None:
                    candidate = w
    return faces, nontrivial, refuted, candidate


def check_foscms(sys, point, opts: CqOptions | None = None) -> CqVerdict:
    opts = opts or CqOptions()
    ctx = _prepare(sys, point, opts)
    if sys.m == 0:
        return CqVerdict("FOSCMS", CERTIFIED, notes=["no constraints"])
    try:
        faces, _, refuted, candidate = _first_order(ctx, opts)
    except DimensionCapExceeded as exc:
        return CqVerdict("FOSCMS", INCONCLUSIVE, notes=[str(exc)])
    if refuted is not None:
        return CqVerdict("FOSCMS", REFUTED, refuted)
    if candidate is not None:
        return CqVerdict("FOSCMS", CANDIDATE, candidate, notes=["witness uses an outer normal-cone approximation"])
    notes = [] if faces else ["critical cone is {0}"]
    return CqVerdict("FOSCMS", CERTIFIED, notes=notes)


def _lambda_cone(ctx: _Ctx, tc: PolyCone, uc: PolyCone):
    """Generators of the lam-cone of the first-order system (DD in lam space)."""
    m = ctx.sys.m
    At, Gt = tc.h_rep()
    rows_le = [At]
    rows_eq = [Gt, ctx.Jz.T, ctx.Jx.T]
    if ctx.Ju.shape[1]:
        Au, Gu = uc.h_rep()
        rows_le.append(Au @ (-ctx.Ju.T))
        rows_eq.append(Gu @ (-ctx.Ju.T))
    A = np.vstack([r.reshape(-1, m) for r in rows_le])
    G = np.vstack([r.reshape(-1, m) for r in rows_eq])
    return double_description(A, G, n=m)


def check_soscms(sys, point, opts: CqOptions | None = None) -> CqVerdict:
    """First-order system plus ``d^T Hess<lam, Phi> d >= 0`` on every critical face."""
    opts = opts or CqOptions()
    ctx = _prepare(sys, point, opts)
    if sys.m == 0:
        return CqVerdict("SOSCMS", CERTIFIED, notes=["no constraints"])
    try:
        faces, nontrivial, _, _ = _first_order(ctx, opts)
    except DimensionCapExceeded as exc:
        return CqVerdict("SOSCMS", INCONCLUSIVE, notes=[str(exc)])
    if not nontrivial:
        return CqVerdict("SOSCMS", CERTIFIED, notes=[] if faces else ["critical cone is {0}"])
    H = sys.map.hessians(ctx.pt)  # (m, n, n)
    rng = np.random.default_rng(opts.seed)
    candidate = None
    open_faces = 0
    for face, tc, uc, exact in nontrivial:
        try:
            R, L = _lambda_cone(ctx, tc, uc)
        except DimensionCapExceeded as exc:
            return CqVerdict("SOSCMS", INCONCLUSIVE, notes=[str(exc)])
        found = None
        d = face.d
        for l in L.T:
            q = sys.map.hessian_quadratic_form(ctx.pt, d)
            lam = l if l @ q >= 0 else -l
            found = {"d": d, "lambda": lam / np.abs(lam).max()}
            break
        undecided = False
        if found is None:
            for g in R.T:
                Hg = np.tensordot(g, H, axes=1)
                scale = max(1.0, float(np.abs(Hg).max(initial=0.0)))
                if d @ Hg @ d >= -1e-12 * scale:
                    found = {"d": d, "lambda": g / np.abs(g).max()}
                    break
                B = face.basis
                M = B.T @ Hg @ B
                evals, evecs = np.linalg.eigh(0.5 * (M + M.T))
                if evals[-1] < -1e-10 * scale:
                    continue  # negative definite on the face span
                # look for a relative-interior direction with nonnegative curvature
                trials = [B @ evecs[:, -1], -(B @ evecs[:, -1])]
                trials += [B @ rng.normal(size=B.shape[1]) for _ in range(50)]
                for v in trials:
                    for s in (1e-3, 1e-2, 1e-1, 1.0, 10.0):
                        cand = d + s * v if face.strict_rows.shape[0] else v
                        if face.strict_rows.shape[0] and np.max(face.strict_rows @ cand) >= -1e-12:
                            continue
                        if cand @ Hg @ cand >= 0 and np.abs(cand).max() > 0:
                            cand = cand / np.abs(cand).max()
                            found = {"d": cand, "lambda": g / np.abs(g).max()}
                            break
                    if found:
                        break
                if found:
                    break
                undecided = True
        if found is not None:
            if exact:
                return CqVerdict("SOSCMS", REFUTED, found)
            candidate = candidate or found
        elif undecided:
            open_faces += 1
    if candidate is not None:
        return CqVerdict("SOSCMS", CANDIDATE, candidate, notes=["witness uses an outer normal-cone approximation"])
    if open_faces:
        return CqVerdict("SOSCMS", INCONCLUSIVE, notes=[f"{open_faces} face(s) with indefinite curvature and no witness found"])
    return CqVerdict("SOSCMS", CERTIFIED)


# ---------------------------------------------------------------------------
# sampled rank conditions


def _ball_samples(pt, delta, k, rng):
    n = pt.size
    dirs = rng.normal(size=(k, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = delta * rng.uniform(size=k) ** (1.0 / n)
    return pt + dirs * radii[:, None]


def _nlp_rows(sys):
    """Equality and inequality constraint rows on Phi for a single-piece target."""
    P = sys.target.pieces[0]
    return P.G, P.g, P.A, P.b


def check_rcpld(sys, point, opts: CqOptions | None = None) -> CqVerdict:
    opts = opts or CqOptions()
    name = "RCPLD"
    if not sys.control.is_whole_space or len(sys.target.pieces) != 1:
        return CqVerdict(name, INCONCLUSIVE, notes=["not applicable: needs U = whole space and a single-piece target"], applicable=False)
    ctx = _prepare(sys, point, opts)
    G, g, A, b = _nlp_rows(sys)
    act = np.flatnonzero(A @ ctx.z - b >= -opts.feas_tol) if A.shape[0] else np.zeros(0, int)
    rng = np.random.default_rng(opts.seed)
    pts = _ball_samples(ctx.pt, opts.delta, opts.samples, rng)
    Js = sys.map.jacobian(pts.T)  # (K, m, n)
    grad_eq0 = G @ ctx.J
    r0 = rank(grad_eq0) if grad_eq0.shape[0] else 0
    for k in range(pts.shape[0]):
        rk = rank(G @ Js[k]) if G.shape[0] else 0
        if rk != r0:
            return CqVerdict(name, REFUTED, {"sample": pts[k], "rank_at_point": r0, "rank_at_sample": rk}, notes=[f"sampled: {opts.samples} points, delta={opts.delta}"])
    # basis of equality gradients
    basis = []
    for i in range(grad_eq0.shape[0]):
        if rank(grad_eq0[basis + [i]]) > len(basis):
            basis.append(i)
    if 2 ** len(act) > FOSCMS_SUBSET_CAP:
        return CqVerdict(name, INCONCLUSIVE, notes=["too many active inequalities to enumerate"])
    for size in range(1, len(act) + 1):
        for I in itertools.combinations(act.tolist(), size):
            M = np.vstack([grad_eq0[basis], (A @ ctx.J)[list(I)]]) if basis else (A @ ctx.J)[list(I)]
            k = M.shape[0]
            # nonzero coefficients, nonnegative on I, with M^T c = 0
            sign_rows = np.zeros((len(I), k))
            sign_rows[:, len(basis):] = -np.eye(len(I))
            trivial, _ = cone_is_trivial(sign_rows, M.T, n=k)
            if trivial:
                continue
            for s in range(pts.shape[0]):
                Ms = np.vstack([(G @ Js[s])[basis], (A @ Js[s])[list(I)]])
                if rank(Ms) == Ms.shape[0]:
                    return CqVerdict(name, REFUTED, {"sample": pts[s], "subset": list(I)}, notes=[f"sampled: {opts.samples} points, delta={opts.delta}"])
    return CqVerdict(name, CERTIFIED, notes=[f"sampled: {opts.samples} points, delta={opts.delta}"])


def check_crcq(sys, point, opts: CqOptions | None = None) -> CqVerdict:
    opts = opts or CqOptions()
    name = "CRCQ"
    P = sys.target.pieces[0]
    if not sys.control.is_whole_space or len(sys.target.pieces) != 1 or P.A.shape[0] or rank(P.G) < sys.m:
        return CqVerdict(name, INCONCLUSIVE, notes=["not applicable: needs U = whole space and target {0}"], applicable=False)
    ctx = _prepare(sys, point, opts)
    r0 = rank(ctx.J) if sys.m else 0
    rng = np.random.default_rng(opts.seed)
    pts = _ball_samples(ctx.pt, opts.delta, opts.samples, rng)
    if sys.m:
        Js = sys.map.jacobian(pts.T)
        for k in range(pts.shape[0]):
            rk = rank(Js[k])
            if rk != r0:
                return CqVerdict(name, REFUTED, {"sample": pts[k], "rank_at_point": r0, "rank_at_sample": rk}, notes=[f"sampled: {opts.samples} points, delta={opts.delta}"])
    return CqVerdict(name, CERTIFIED, notes=[f"sampled: {opts.samples} points, delta={opts.delta}"])


def falsify_quasinormality(sys, point, opts: CqOptions | None = None) -> CqVerdict:
    """Refutation-only search for a sequence violating quasinormality."""
    opts = opts or CqOptions()
    name = "quasinormality"
    ctx = _prepare(sys, point, opts)
    m = sys.m
    if m == 0:
        return CqVerdict(name, INCONCLUSIVE, notes=["no constraints; holds trivially (refuter only)"])
    # candidate abnormal multipliers from the limiting combinations
    cands = []
    for tcones, ucones, _ in ctx.combos():
        lp = _premise_lp(ctx, tcones, ucones, fix_x=True)
        if lp.infeasible:
            continue
        for i in range(m):
            for s in (1.0, -1.0):
                e = np.zeros(m)
                e[i] = s
                res = lp.maximize([(0, e)])
                if res.status == "optimal" and res.objective > opts.tol:
                    lam = res.x[:m] / np.abs(res.x[:m]).max()
                    lam[np.abs(lam) < 1e-12] = 0.0
                    if not any(np.allclose(lam, c) for c in cands):
                        cands.append(lam)
    if not cands:
        return CqVerdict(name, INCONCLUSIVE, notes=["no nonzero abnormal multiplier; holds by NNAMCQ (refuter only)"])
    rng = np.random.default_rng(opts.seed)
    ybar = ctx.z  # y^k is held at Phi(point), which lies in K
    levels = 8
    per = max(1, opts.samples // levels)
    for lam in cands:
        nz = np.abs(lam) > 0
        seq = []
        for k in range(levels):
            r = opts.delta * 2.0**-k
            trial = _ball_samples(ctx.pt, r, per, rng)
            g = lam @ ctx.J
            if np.linalg.norm(g) > 0:
                trial = np.vstack([ctx.pt + r * g / np.linalg.norm(g), trial])
            ok_pt = None
            vals = sys.map.eval(trial.T).T
            for t, v in zip(trial, vals):
                if not sys.control.contains(t[sys.iu], opts.feas_tol)[0]:
                    continue
                if np.all(lam[nz] * (v[nz] - ybar[nz]) > 0):
                    ok_pt = t
                    break
            if ok_pt is None:
                break
            seq.append(ok_pt)
        if len(seq) == levels:
            return CqVerdict(name, REFUTED, {"lambda": lam, "sequence": np.array(seq)},
                             notes=[f"sampled: radii delta*2^-k, k<{levels}; y^k held at Phi(point)"])
    return CqVerdict(name, INCONCLUSIVE, notes=["no violating sequence found (refuter only)"])


# ---------------------------------------------------------------------------
# ladder and trajectory


SUFFICIENT_NAMES = ("Linear CQ", "CCQ", "MFC", "NNAMCQ", "quasinormality", "FOSCMS", "SOSCMS", "RCPLD", "CRCQ")
_VIA_ORDER = ("Linear CQ", "NNAMCQ", "FOSCMS", "SOSCMS", "RCPLD", "CRCQ", "MFC", "CCQ")


def check_calmness_sufficient(sys, point, opts: CqOptions | None = None) -> CqLadderReport:
    """Full battery; flags whether WBCQ plus a calmness-sufficient condition holds."""
    opts = opts or CqOptions()
    _prepare(sys, point, opts)  # feasibility first
    v = {}
    v["Linear CQ"] = check_linear_cq(sys)
    v["CCQ"] = check_ccq(sys, point, opts)
    v["MFC"] = check_mfc(sys, point, opts)
    v["NNAMCQ"] = check_nnamcq(sys, point, opts)
    v["WBCQ"] = check_wbcq(sys, point, opts)
    v["quasinormality"] = falsify_quasinormality(sys, point, opts)
    v["FOSCMS"] = check_foscms(sys, point, opts)
    v["SOSCMS"] = check_soscms(sys, point, opts)
    v["RCPLD"] = check_rcpld(sys, point, opts)
    v["CRCQ"] = check_crcq(sys, point, opts)
    via = None
    if v["WBCQ"].status == CERTIFIED:
        for name in _VIA_ORDER:
            if v[name].status == CERTIFIED:
                via = name
                break
    order = ["Linear CQ", "CCQ", "MFC", "NNAMCQ", "WBCQ", "quasinormality", "FOSCMS", "SOSCMS", "RCPLD", "CRCQ"]
    return CqLadderReport(np.asarray(point, dtype=float), [v[k] for k in order], via is not None, via)


def check_index_one(sys: ConstraintSystem, point, block: str = "y") -> dict:
    """Rank of the Jacobian of ``Phi`` with respect to the algebraic block."""
    L = sys.map.layout
    if not L.has(block):
        raise ValueError(f"layout has no {block!r} block")
    J = sys.map.jacobian(np.asarray(point, dtype=float))
    Jy = J[:, L.slice(block)]
    ny = Jy.shape[1]
    r = rank(Jy) if Jy.size else 0
    sv = np.linalg.svd(Jy, compute_uv=False) if Jy.size else np.zeros(0)
    return {
        "rank": r,
        "n_y": ny,
        "m": sys.m,
        "index_one": bool(r == ny == sys.m),
        "rank_deficient": bool(r < ny),
        "singular_values": sv.tolist(),
    }


_SEVERITY = {"established": 0, "inconclusive": 1, "refuted": 2}


def check_along_trajectory(sys, trajectory, mode: str = "along", opts: CqOptions | None = None,
                           tube_samples: int = 0, eps: float = 1e-3):
    """Ladder at every mesh point; ``tube`` mode adds sampled feasible points nearby.

    Returns ``(reports, summary)`` where ``reports`` is in mesh order.
    """
    opts = opts or CqOptions()
    if mode not in ("along", "tube"):
        raise ValueError("mode must be 'along' or 'tube'")
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
    reports = []
    for i, pt in enumerate(traj):
        try:
            rep = check_calmness_sufficient(sys, pt, opts)
        except InfeasiblePointError as exc:
            raise InfeasiblePointError(f"mesh point {i}: {exc}") from None
        reports.append(rep)
    tube_reports = []
    notes = []
    if mode == "tube" and tube_samples > 0:
        rng = np.random.default_rng([opts.seed, 1])
        norms = []
        for i, pt in enumerate(traj):
            for _ in range(tube_samples):
                cand = _project_feasible(sys, pt + eps * rng.uniform(-1, 1, size=pt.size), opts)
                if cand is None:
                    continue
                norms.append(float(np.linalg.norm(cand)))
                tube_reports.append((i, check_calmness_sufficient(sys, cand, opts)))
        notes.append("tube compactness is assumed; sampled tube points have max norm "
                     f"{max(norms) if norms else 0.0:.3g}")
    worst = max([r.outcome for r in reports] + [r.outcome for _, r in tube_reports], key=_SEVERITY.get)
    return reports, {"outcome": worst, "tube": tube_reports, "notes": notes}


def _project_feasible(sys, pt, opts, iters=30):
    """Gauss-Newton on the zero blocks so that Phi hits the target's nearest piece point."""
    iz = sys.iz
    pt = pt.copy()
    u = pt[sys.iu]
    if not sys.control.contains(u, opts.feas_tol)[0]:
        return None
    if sys.m == 0:
        return pt
    P = sys.target.pieces[0]
    for _ in range(iters):
        z, J = sys.map.value_and_jacobian(pt)
        if sys.target.contains(z, opts.feas_tol)[0]:
            return pt
        if P.A.shape[0] or not iz.size:
            return None
        res = P.G @ z - P.g
        step, *_ = np.linalg.lstsq((P.G @ J)[:, iz], -res, rcond=None)
        pt[iz] += step
    return pt if sys.target.contains(sys.map.eval(pt), opts.feas_tol)[0] else None


# ---------------------------------------------------------------------------
# witness validation


def witness_residual(sys, point, verdict: CqVerdict, tol: float = 1e-8) -> float:
    """Largest violation of the defining system by a refutation witness.

    Covers NNAMCQ, MFC, WBCQ, FOSCMS and SOSCMS; cone memberships use the
    union of active pieces (the limiting cone or its outer approximation).
    """
    from .polyhedra import directional_normal_cone_outer, limiting_normal_cone_outer

    ctx = _prepare(sys, point, CqOptions())
    lam = np.asarray(verdict.witness["lambda"], dtype=float)
    if np.abs(lam).max() < 1e-6:
        return math.inf
    res = 0.0
    if verdict.name in ("FOSCMS", "SOSCMS"):
        d = np.asarray(verdict.witness["d"], dtype=float)
        w = ctx.J @ d
        tcone = directional_normal_cone_outer(sys.target, ctx.z, w)
        ucone = directional_normal_cone_outer(sys.control, ctx.u, d[sys.iu]) if len(sys.iu) else None
        res = max(res, float(np.linalg.norm(ctx.Jx.T @ lam, np.inf)) if ctx.Jx.size else 0.0)
        if verdict.name == "SOSCMS":
            q = sys.map.hessian_quadratic_form(ctx.pt, d)
            res = max(res, -float(lam @ q))
        # d must be critical and nonzero
        if np.abs(d).max() < 1e-9:
            return math.inf
    else:
        tcone = limiting_normal_cone_outer(sys.target, ctx.z)
        ucone = limiting_normal_cone_outer(sys.control, ctx.u) if len(sys.iu) else None
        if verdict.name == "NNAMCQ" and ctx.Jx.size:
            res = max(res, float(np.linalg.norm(ctx.Jx.T @ lam, np.inf)))
        if verdict.name == "WBCQ":
            alpha = ctx.Jx.T @ lam
            if np.abs(alpha).max(initial=0.0) < 1e-9:
                return math.inf
    res = max(res, member_of_cone(tcone, lam)[1])
    if ucone is not None:
        res = max(res, member_of_cone(ucone, -ctx.Ju.T @ lam)[1])
    if ctx.Jz.size:
        res = max(res, float(np.linalg.norm(ctx.Jz.T @ lam, np.inf)))
    return res
