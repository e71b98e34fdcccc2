"""Control problem data, the problem-file format and the set syntax.

Two forms are supported.

``explicit``
    ``x' = phi(x, y, u)``, ``h(x, y, u) in K`` (K defaults to zero), with
    algebraic variable ``y`` and control ``u in U``.
``implicit``
    ``phi(x, u, v) in K`` where ``v`` stands for the velocity ``x'``.  A
    ``structured_E`` declaration ``E v - g(x, u)`` generates ``phi``.

Both reduce to one internal shape: a dynamics map ``dyn`` giving ``x'`` and a
constraint map ``Phi`` with ``Phi in K``, over the layout ``(x, w, u)`` where
``w`` is the free block (``y`` or ``v``).
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .expr import ExpressionError, Layout, VectorFunction
from .polyhedra import Polyhedron, PolyUnion

__all__ = [
    "ProblemError",
    "ControlProblem",
    "parse_set",
    "set_to_text",
    "load_problem",
    "problem_from_dict",
]


class ProblemError(ValueError):
    """Malformed problem file or inconsistent dimensions."""


# ---------------------------------------------------------------------------
# set syntax


def _literal(node, text):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id == "inf":
        return math.inf
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _literal(node.operand, text)
        if isinstance(v, list):
            raise ProblemError(f"cannot negate a list in set expression {text!r}")
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, (ast.List, ast.Tuple)):
        return [_literal(e, text) for e in node.elts]
    raise ProblemError(f"unsupported literal at column {getattr(node, 'col_offset', '?')} in set expression {text!r}")


def _int_arg(v, what):
    if isinstance(v, list) or v != int(v) or v < 0:
        raise ProblemError(f"{what} expects a non-negative integer dimension")
    return int(v)


def _build_set(node, text) -> PolyUnion:
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name):
        raise ProblemError(f"expected a set constructor call in {text!r}")
    name = node.func.id
    if node.keywords:
        raise ProblemError(f"keyword arguments are not supported in {text!r}")
    if name in ("union", "product"):
        parts = [_build_set(a, text) for a in node.args]
        if not parts:
            raise ProblemError(f"{name}() needs at least one argument")
        if name == "union":
            if len({p.dim for p in parts}) != 1:
                raise ProblemError("union pieces must share one dimension")
            pieces = [q for p in parts for q in p.pieces]
            return parts[0] if len(pieces) == 1 and len(parts) == 1 else PolyUnion(pieces)
        out = parts[0]
        for p in parts[1:]:
            out = out.product(p)
        return out if len(parts) > 1 else parts[0]
    args = [_literal(a, text) for a in node.args]
    try:
        if name == "box":
            if len(args) != 2:
                raise ProblemError("box(lo, hi) takes two arguments")
            lo, hi = (np.atleast_1d(np.asarray(a, dtype=float)) for a in args)
            if lo.shape != hi.shape or np.any(lo > hi):
                raise ProblemError("box bounds must have equal length and lo <= hi")
            return PolyUnion.box(lo, hi)
        if name == "polyhedron":
            if len(args) not in (2, 4):
                raise ProblemError("polyhedron(A, b[, G, g]) takes two or four arguments")
            A = np.asarray(args[0], dtype=float)
            G = np.asarray(args[2], dtype=float) if len(args) == 4 else None
            dim = None
            for M in (A, G):
                if M is not None and M.ndim == 2 and M.shape[1] > 0:
                    dim = M.shape[1]
            if dim is None:
                raise ProblemError("polyhedron needs at least one nonempty matrix row")
            return PolyUnion.single(Polyhedron(A if A.size else None, args[1], G if G is not None and G.size else None, args[3] if len(args) == 4 else None, dim=dim))
        if name == "zero":
            return PolyUnion.zero(_int_arg(args[0], "zero"))
        if name == "nonpositive":
            return PolyUnion.nonpositive(_int_arg(args[0], "nonpositive"))
        if name == "free":
            return PolyUnion.whole(_int_arg(args[0], "free"))
        if name == "point":
            return PolyUnion.single(Polyhedron.point(np.atleast_1d(np.asarray(args[0], dtype=float))))
    except (IndexError, TypeError) as exc:
        raise ProblemError(f"bad arguments to {name}(): {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ProblemError):
            raise
        raise ProblemError(f"bad arguments to {name}(): {exc}") from None
    raise ProblemError(f"unknown set constructor {name!r}")


def parse_set(text: str) -> PolyUnion:
    """Parse ``box``, ``polyhedron``, ``union``, ``product``, ``zero``,
    ``nonpositive``, ``free`` and ``point`` expressions."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ProblemError(f"set syntax error at column {exc.offset}: {text!r}") from None
    U = _build_set(tree.body, text)
    U.source = text.strip()
    return U


def _fmt(v) -> str:
    if isinstance(v, np.ndarray):
        return "[" + ", ".join(_fmt(e) for e in v) + "]"
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def set_to_text(U: PolyUnion) -> str:
    """Set-syntax text for ``U``; the parsed source text is reused when present."""
    if U.source is not None:
        return U.source
    pieces = []
    for p in U.pieces:
        if not p.A.shape[0] and not p.G.shape[0]:
            pieces.append(f"free({p.dim})")
            continue
        args = [_fmt(p.A) if p.A.shape[0] else "[[" + ", ".join(["0.0"] * p.dim) + "]]",
                _fmt(p.b) if p.A.shape[0] else "[0.0]"]
        if p.G.shape[0]:
            args += [_fmt(p.G), _fmt(p.g)]
        pieces.append(f"polyhedron({', '.join(args)})")
    return pieces[0] if len(pieces) == 1 else f"union({', '.join(pieces)})"


# ---------------------------------------------------------------------------
# problem


@dataclass
class StructuredE:
    """``E v - g(x, u)`` declaration."""

    E: np.ndarray
    g: VectorFunction  # over layout (x, u)


@dataclass(eq=False)
class ControlProblem:
    """Problem data for the explicit and implicit forms (see module docstring)."""

    name: str
    form: str
    n_x: int
    n_w: int
    n_u: int
    dynamics: VectorFunction | None  # explicit: phi(x, y, u); implicit: phi(x, u, v)
    algebraic: VectorFunction | None  # explicit only
    running_cost: VectorFunction
    endpoint_cost: VectorFunction
    control_set: PolyUnion
    endpoint_set: PolyUnion
    target_set: PolyUnion
    horizon: tuple = (0.0, 1.0)
    radius: object = math.inf  # inf, positive scalar, or {"t": [...], "r": [...]}
    structured_E: StructuredE | None = None
    init: dict | None = None
    pieces: dict = field(default_factory=dict)

    # -- layouts ---------------------------------------------------------
    @property
    def free_block(self) -> str:
        return "y" if self.form == "explicit" else "v"

    @property
    def layout(self) -> Layout:
        if self.form == "explicit":
            return Layout((("x", self.n_x), ("y", self.n_w), ("u", self.n_u)))
        return Layout((("x", self.n_x), ("u", self.n_u), ("v", self.n_x)))

    @property
    def endpoint_layout(self) -> Layout:
        return Layout((("xa", self.n_x), ("xb", self.n_x)))

    @property
    def n(self) -> int:
        return self.n_x + self.n_w + self.n_u

    def split(self, z):
        """``(x, w, u)`` blocks of a flat layout vector (or of a (n, K) batch)."""
        L = self.layout
        z = np.asarray(z, dtype=float)
        return z[L.slice("x")], z[L.slice(self.free_block)], z[L.slice("u")]

    def join(self, x, w, u):
        """Inverse of ``split``."""
        L = self.layout
        x, w, u = (np.asarray(a, dtype=float) for a in (x, w, u))
        shape = (L.size,) + x.shape[1:]
        z = np.empty(shape)
        z[L.slice("x")] = x
        z[L.slice(self.free_block)] = w
        z[L.slice("u")] = u
        return z

    # -- unified view ----------------------------------------------------
    @property
    def dyn(self) -> VectorFunction:
        """Map giving ``x'``: ``phi`` for the explicit form, ``v`` for the implicit one."""
        if self.form == "explicit":
            return self.dynamics
        L = self.layout
        comps = VectorFunction.identity(L).components
        return VectorFunction(tuple(comps[L.slice("v")]), L)

    @property
    def constraint(self) -> VectorFunction:
        """``Phi`` with ``Phi in K``: ``h`` (explicit) or ``phi`` (implicit)."""
        if self.form == "explicit":
            return self.algebraic if self.algebraic is not None else VectorFunction((), self.layout)
        return self.dynamics

    @property
    def m(self) -> int:
        return self.constraint.dim

    def constraint_system(self):
        from .cq import ConstraintSystem

        return ConstraintSystem(
            self.constraint, self.target_set, self.control_set,
            state="x", control_block="u", zero=(self.free_block,),
        )

    def radius_at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        R = self.radius
        if isinstance(R, dict):
            return np.interp(t, np.asarray(R["t"], float), np.asarray(R["r"], float))
        return np.full(t.shape, float(R))

    @property
    def right_endpoint_free(self) -> bool:
        """True if ``S = S0 x R^n`` (no constraint on the right endpoint)."""
        for p in self.endpoint_set.pieces:
            for M in (p.A, p.G):
                if M.shape[0] and np.any(M[:, self.n_x:] != 0):
                    return False
        return True

    # -- serialisation -----------------------------------------------------
    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "form": self.form,
            "variables": {"x": self.n_x, self.free_block: self.n_w, "u": self.n_u}
            if self.form == "explicit"
            else {"x": self.n_x, "u": self.n_u},
            "running_cost": self.running_cost.texts()[0],
            "endpoint_cost": self.endpoint_cost.texts()[0],
            "control_set": set_to_text(self.control_set),
            "endpoint_set": set_to_text(self.endpoint_set),
            "target_set": set_to_text(self.target_set),
            "horizon": [float(self.horizon[0]), float(self.horizon[1])],
            "radius": _radius_to_json(self.radius),
        }
        if self.structured_E is not None:
            d["structured_E"] = {"E": self.structured_E.E.tolist(), "g": self.structured_E.g.texts()}
        else:
            d["dynamics"] = self.dynamics.texts()
        if self.form == "explicit" and self.algebraic is not None:
            d["algebraic"] = self.algebraic.texts()
        if self.init is not None:
            d["init"] = self.init
        if self.pieces:
            d["pieces"] = dict(self.pieces)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def __eq__(self, other):
        if not isinstance(other, ControlProblem):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _radius_to_json(R):
    if isinstance(R, dict):
        return {"t": [float(v) for v in R["t"]], "r": [float(v) for v in R["r"]]}
    R = float(R)
    return "inf" if math.isinf(R) else R


def _parse_radius(R):
    if R is None or R == "inf":
        return math.inf
    if isinstance(R, dict):
        t = np.asarray(R.get("t"), dtype=float)
        r = np.asarray(R.get("r"), dtype=float)
        if t.ndim != 1 or t.shape != r.shape or t.size < 1 or np.any(np.diff(t) <= 0):
            raise ProblemError("radius table needs increasing t and matching r")
        if np.any(r <= 0):
            raise ProblemError("radius must be bounded below by a positive constant")
        return {"t": t.tolist(), "r": r.tolist()}
    try:
        R = float(R)
    except (TypeError, ValueError):
        raise ProblemError(f"radius must be 'inf', a number or a table, got {R!r}") from None
    if not R > 0:
        raise ProblemError("radius must be positive")
    return R


def _vf(texts, layout, what):
    if isinstance(texts, str):
        texts = [texts]
    if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
        raise ProblemError(f"{what} must be a string or a list of strings")
    try:
        return VectorFunction.parse(texts, layout)
    except ExpressionError as exc:
        raise ProblemError(f"{what}: {exc}") from None


def _set(text, dim, what, default):
    if text is None:
        return default
    if not isinstance(text, str):
        raise ProblemError(f"{what} must be a set expression string")
    U = parse_set(text)
    if U.dim != dim:
        raise ProblemError(f"{what} has dimension {U.dim}, expected {dim}")
    return U


def problem_from_dict(d: dict) -> ControlProblem:
    """Build and validate a ControlProblem from a decoded problem file."""
    if not isinstance(d, dict):
        raise ProblemError("problem file must be a JSON object")
    form = d.get("form", "explicit")
    if form not in ("explicit", "implicit"):
        raise ProblemError(f"form must be 'explicit' or 'implicit', got {form!r}")
    var = d.get("variables")
    if not isinstance(var, dict) or "x" not in var:
        raise ProblemError("variables must declare at least the x block")
    try:
        n_x = int(var["x"])
        n_u = int(var.get("u", 0))
        n_w = int(var.get("y", 0)) if form == "explicit" else n_x
    except (TypeError, ValueError):
        raise ProblemError("variable block sizes must be integers") from None
    if n_x < 1 or n_u < 0 or n_w < 0:
        raise ProblemError("block sizes must be non-negative and x nonempty")
    unknown = set(var) - ({"x", "y", "u"} if form == "explicit" else {"x", "u"})
    if unknown:
        raise ProblemError(f"unknown variable blocks {sorted(unknown)}")
    proto = ControlProblem(
        d.get("name", "problem"), form, n_x, n_w, n_u, None, None,
        None, None, None, None, None,  # type: ignore[arg-type]
    )
    L = proto.layout
    sE = None
    if d.get("structured_E") is not None:
        if form != "implicit":
            raise ProblemError("structured_E requires the implicit form")
        se = d["structured_E"]
        try:
            E = np.atleast_2d(np.asarray(se["E"], dtype=float))
        except (KeyError, TypeError, ValueError):
            raise ProblemError("structured_E.E must be a numeric matrix") from None
        if E.shape[1] != n_x:
            raise ProblemError(f"E has {E.shape[1]} columns, expected n_x = {n_x}")
        g = _vf(se.get("g"), Layout((("x", n_x), ("u", n_u))), "structured_E.g")
        if g.dim != E.shape[0]:
            raise ProblemError("structured_E.g must have one component per row of E")
        sE = StructuredE(E, g)
        dyn_texts = []
        for i in range(E.shape[0]):
            terms = [f"{float(E[i, j])!r} * v{j + 1}" if n_x > 1 else f"{float(E[i, j])!r} * v" for j in range(n_x) if E[i, j] != 0]
            lhs = " + ".join(terms) if terms else "0"
            dyn_texts.append(f"{lhs} - ({g.texts()[i]})")
        dynamics = _vf(dyn_texts, L, "structured_E")
        if "dynamics" in d:
            raise ProblemError("give either dynamics or structured_E, not both")
    else:
        if "dynamics" not in d:
            raise ProblemError("missing dynamics")
        dynamics = _vf(d["dynamics"], L, "dynamics")
    if form == "explicit" and dynamics.dim != n_x:
        raise ProblemError(f"explicit dynamics need {n_x} components, got {dynamics.dim}")
    algebraic = None
    if d.get("algebraic") is not None:
        if form != "explicit":
            raise ProblemError("algebraic equations belong to the explicit form")
        algebraic = _vf(d["algebraic"], L, "algebraic")
    running = _vf(d.get("running_cost", "0"), L, "running_cost")
    endpoint = _vf(d.get("endpoint_cost", "0"), proto.endpoint_layout, "endpoint_cost")
    if running.dim != 1 or endpoint.dim != 1:
        raise ProblemError("costs must be scalar expressions")
    m = dynamics.dim if form == "implicit" else (algebraic.dim if algebraic is not None else 0)
    U = _set(d.get("control_set"), n_u, "control_set", PolyUnion.whole(n_u))
    S = _set(d.get("endpoint_set"), 2 * n_x, "endpoint_set", PolyUnion.whole(2 * n_x))
    K = _set(d.get("target_set"), m, "target_set", PolyUnion.zero(m))
    hz = d.get("horizon", [0.0, 1.0])
    try:
        t0, t1 = float(hz[0]), float(hz[1])
    except (TypeError, ValueError, IndexError):
        raise ProblemError("horizon must be [t0, t1]") from None
    if not t1 > t0:
        raise ProblemError("horizon must satisfy t0 < t1")
    pieces = d.get("pieces") or {}
    for key, U_ in (("control", U), ("endpoint", S)):
        if key in pieces and not 0 <= int(pieces[key]) < len(U_.pieces):
            raise ProblemError(f"piece selection {key}={pieces[key]} out of range")
    return ControlProblem(
        name=str(d.get("name", "problem")),
        form=form,
        n_x=n_x,
        n_w=n_w,
        n_u=n_u,
        dynamics=dynamics,
        algebraic=algebraic,
        running_cost=running,
        endpoint_cost=endpoint,
        control_set=U,
        endpoint_set=S,
        target_set=K,
        horizon=(t0, t1),
        radius=_parse_radius(d.get("radius", "inf")),
        structured_E=sE,
        init=d.get("init"),
        pieces={k: int(v) for k, v in pieces.items()},
    )


def load_problem(path) -> ControlProblem:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ProblemError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ProblemError(f"{path}: invalid JSON ({exc})") from None
    return problem_from_dict(d)
