"""Differentiable expression trees.

Expressions are parsed from infix text over a block-structured variable
layout and evaluated with numpy, so a single tree walk can evaluate a batch
of points (columns of an ``(n, K)`` array).  First derivatives use forward
mode with a dense tangent per variable; second derivatives are only needed
as directional quadratic forms and use a second-order Taylor jet along the
direction.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Layout",
    "Expression",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Power",
    "VectorFunction",
    "ExpressionError",
    "DomainError",
    "parse_expression",
    "to_text",
    "degree",
]

UNARY_OPS = ("neg", "sin", "cos", "exp", "log", "sqrt")
BINARY_OPS = ("add", "sub", "mul", "div")
NAMED_CONSTANTS = {"pi": math.pi}


class ExpressionError(ValueError):
    """Malformed expression text or an unknown variable name."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at column {position})"
        super().__init__(message)
        self.position = position


class DomainError(ArithmeticError):
    """Evaluation left the domain of log/sqrt/division."""

    def __init__(self, message: str, component: int | None = None):
        if component is not None:
            message = f"component {component}: {message}"
        super().__init__(message)
        self.component = component


# ---------------------------------------------------------------------------
# variable layout


_NAME_RE = re.compile(r"^([A-Za-z_]+?)(\d+)$")


@dataclass(frozen=True)
class Layout:
    """Ordered named blocks of real variables, e.g. ``(("x", 2), ("u", 1))``.

    Variables are referred to as ``x1, x2`` (1-based) or ``x[1]``; a block of
    size one may also be referred to by its bare name.
    """

    blocks: tuple[tuple[str, int], ...]

    def __post_init__(self):
        seen = set()
        for name, size in self.blocks:
            if not re.fullmatch(r"[A-Za-z_]+", name):
                raise ValueError(f"invalid block name {name!r}")
            if name in seen:
                raise ValueError(f"duplicate block {name!r}")
            if size < 0:
                raise ValueError(f"negative block size for {name!r}")
            seen.add(name)

    @classmethod
    def of(cls, **sizes: int) -> "Layout":
        return cls(tuple(sizes.items()))

    @property
    def size(self) -> int:
        return sum(s for _, s in self.blocks)

    def offset(self, block: str) -> int:
        off = 0
        for name, size in self.blocks:
            if name == block:
                return off
            off += size
        raise KeyError(block)

    def block_size(self, block: str) -> int:
        for name, size in self.blocks:
            if name == block:
                return size
        raise KeyError(block)

    def slice(self, block: str) -> slice:
        off = self.offset(block)
        return slice(off, off + self.block_size(block))

    def has(self, block: str) -> bool:
        return any(name == block for name, _ in self.blocks)

    @property
    def names(self) -> list[str]:
        out = []
        for name, size in self.blocks:
            if size == 1:
                out.append(name)
            else:
                out.extend(f"{name}{i + 1}" for i in range(size))
        return out

    def resolve(self, name: str, index: int | None = None) -> int:
        """Flat index of a variable reference; raises KeyError if unknown."""
        if index is None:
            for block, size in self.blocks:
                if block == name and size == 1:
                    return self.offset(block)
            m = _NAME_RE.match(name)
            if m is None:
                raise KeyError(name)
            name, index = m.group(1), int(m.group(2))
            # block names may themselves end in letters only, so a greedy
            # split like "xa1" -> ("xa", 1) is the only candidate
        for block, size in self.blocks:
            if block == name:
                if 1 <= index <= size:
                    return self.offset(block) + index - 1
                break
        raise KeyError(f"{name}{index}")


# ---------------------------------------------------------------------------
# nodes


class Expression:
    """Base class of immutable expression nodes."""

    __slots__ = ()

    # value on a batch: vals has shape (n, K); returns shape (K,)
    def _ev(self, vals):  # pragma: no cover - abstract
        raise NotImplementedError

    # value and gradient: returns ((K,), (n, K))
    def _fw(self, vals):  # pragma: no cover - abstract
        raise NotImplementedError

    # second-order jet along direction d: returns three (K,) arrays
    def _jet(self, vals, d):  # pragma: no cover - abstract
        raise NotImplementedError

    def evaluate(self, point) -> float:
        x = np.asarray(point, dtype=float).reshape(-1, 1)
        with np.errstate(all="ignore"):
            return float(self._ev(x)[0])


@dataclass(frozen=True, eq=True)
class Const(Expression):
    value: float

    def _ev(self, vals):
        return np.full(vals.shape[1], self.value)

    def _fw(self, vals):
        return self._ev(vals), np.zeros(vals.shape)

    def _jet(self, vals, d):
        z = np.zeros(vals.shape[1])
        return self._ev(vals), z, z


@dataclass(frozen=True, eq=True)
class Var(Expression):
    index: int
    name: str

    def _ev(self, vals):
        return vals[self.index].copy()

    def _fw(self, vals):
        g = np.zeros(vals.shape)
        g[self.index] = 1.0
        return vals[self.index].copy(), g

    def _jet(self, vals, d):
        k = vals.shape[1]
        return vals[self.index].copy(), np.full(k, d[self.index]), np.zeros(k)


def _check_positive(a, what):
    if np.any(~(a > 0)):
        raise DomainError(f"{what} of non-positive argument")


def _check_nonneg(a, what):
    if np.any(~(a >= 0)):
        raise DomainError(f"{what} of negative argument")


def _check_nonzero(a):
    if np.any(a == 0) or np.any(~np.isfinite(a)):
        raise DomainError("division by zero")


@dataclass(frozen=True, eq=True)
class Unary(Expression):
    op: str
    arg: Expression

    def _ev(self, vals):
        a = self.arg._ev(vals)
        op = self.op
        if op == "neg":
            return -a
        if op == "sin":
            return np.sin(a)
        if op == "cos":
            return np.cos(a)
        if op == "exp":
            return np.exp(a)
        if op == "log":
            _check_positive(a, "log")
            return np.log(a)
        if op == "sqrt":
            _check_nonneg(a, "sqrt")
            return np.sqrt(a)
        raise AssertionError(op)

    def _fw(self, vals):
        a, g = self.arg._fw(vals)
        op = self.op
        if op == "neg":
            return -a, -g
        if op == "sin":
            return np.sin(a), np.cos(a) * g
        if op == "cos":
            return np.cos(a), -np.sin(a) * g
        if op == "exp":
            e = np.exp(a)
            return e, e * g
        if op == "log":
            _check_positive(a, "log")
            return np.log(a), g / a
        if op == "sqrt":
            # derivative is unbounded at 0
            _check_positive(a, "sqrt derivative")
            s = np.sqrt(a)
            return s, g / (2.0 * s)
        raise AssertionError(op)

    def _jet(self, vals, d):
        a, a1, a2 = self.arg._jet(vals, d)
        op = self.op
        if op == "neg":
            return -a, -a1, -a2
        # chain rule for y = f(a):  y' = f'(a) a',  y'' = f''(a) a'^2 + f'(a) a''
        if op == "sin":
            s, c = np.sin(a), np.cos(a)
            return s, c * a1, -s * a1 * a1 + c * a2
        if op == "cos":
            s, c = np.sin(a), np.cos(a)
            return c, -s * a1, -c * a1 * a1 - s * a2
        if op == "exp":
            e = np.exp(a)
            return e, e * a1, e * (a1 * a1 + a2)
        if op == "log":
            _check_positive(a, "log")
            return np.log(a), a1 / a, -a1 * a1 / (a * a) + a2 / a
        if op == "sqrt":
            _check_positive(a, "sqrt derivative")
            s = np.sqrt(a)
            return s, a1 / (2 * s), -a1 * a1 / (4 * a * s) + a2 / (2 * s)
        raise AssertionError(op)


@dataclass(frozen=True, eq=True)
class Binary(Expression):
    op: str
    left: Expression
    right: Expression

    def _ev(self, vals):
        a = self.left._ev(vals)
        b = self.right._ev(vals)
        op = self.op
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        if op == "div":
            _check_nonzero(b)
            return a / b
        raise AssertionError(op)

    def _fw(self, vals):
        a, ga = self.left._fw(vals)
        b, gb = self.right._fw(vals)
        op = self.op
        if op == "add":
            return a + b, ga + gb
        if op == "sub":
            return a - b, ga - gb
        if op == "mul":
            return a * b, ga * b + a * gb
        if op == "div":
            _check_nonzero(b)
            q = a / b
            return q, (ga - q * gb) / b
        raise AssertionError(op)

    def _jet(self, vals, d):
        a, a1, a2 = self.left._jet(vals, d)
        b, b1, b2 = self.right._jet(vals, d)
        op = self.op
        if op == "add":
            return a + b, a1 + b1, a2 + b2
        if op == "sub":
            return a - b, a1 - b1, a2 - b2
        if op == "mul":
            return a * b, a1 * b + a * b1, a2 * b + 2 * a1 * b1 + a * b2
        if op == "div":
            _check_nonzero(b)
            q = a / b
            q1 = (a1 - q * b1) / b
            q2 = (a2 - 2 * q1 * b1 - q * b2) / b
            return q, q1, q2
        raise AssertionError(op)


@dataclass(frozen=True, eq=True)
class Power(Expression):
    base: Expression
    exponent: int

    def _ev(self, vals):
        return self.base._ev(vals) ** self.exponent

    def _fw(self, vals):
        a, g = self.base._fw(vals)
        n = self.exponent
        if n == 0:
            return np.ones_like(a), np.zeros_like(g)
        return a**n, n * a ** (n - 1) * g

    def _jet(self, vals, d):
        a, a1, a2 = self.base._jet(vals, d)
        n = self.exponent
        if n == 0:
            z = np.zeros_like(a)
            return np.ones_like(a), z, z
        if n == 1:
            return a, a1, a2
        d1 = n * a ** (n - 1)
        dd = n * (n - 1) * a ** (n - 2)
        return a**n, d1 * a1, dd * a1 * a1 + d1 * a2


# ---------------------------------------------------------------------------
# construction with constant folding


def _fold(node: Expression) -> Expression:
    """Replace a node whose children are all constants by a constant."""
    if isinstance(node, Unary) and isinstance(node.arg, Const):
        try:
            return Const(float(node._ev(np.zeros((0, 1)))[0]))
        except DomainError:
            return node
    if isinstance(node, Binary) and isinstance(node.left, Const) and isinstance(node.right, Const):
        try:
            return Const(float(node._ev(np.zeros((0, 1)))[0]))
        except DomainError:
            return node
    if isinstance(node, Power) and isinstance(node.base, Const):
        return Const(float(node.base.value**node.exponent))
    return node


def unary(op: str, arg: Expression) -> Expression:
    return _fold(Unary(op, arg))


def binary(op: str, left: Expression, right: Expression) -> Expression:
    return _fold(Binary(op, left, right))


def power(base: Expression, exponent: int) -> Expression:
    if exponent < 0:
        raise ExpressionError("negative exponents are not supported; use division")
    return _fold(Power(base, int(exponent)))


# ---------------------------------------------------------------------------
# parsing (Python's own tokenizer/parser does the heavy lifting)

_BINOPS = {ast.Add: "add", ast.Sub: "sub", ast.Mult: "mul", ast.Div: "div"}


def parse_expression(text: str, layout: Layout) -> Expression:
    """Parse infix text (``+ - * / ^``, calls like ``sin(x1)``) over ``layout``."""
    if not isinstance(text, str):
        if isinstance(text, (int, float)):
            return Const(float(text))
        raise ExpressionError(f"expected expression text, got {type(text).__name__}")
    src = text.replace("^", "**")
    try:
        tree = ast.parse(src.strip() or "(", mode="eval")
    except SyntaxError as exc:
        pos = exc.offset
        if pos is not None:
            # map back through the ^ -> ** substitution
            pos = pos - src[: pos - 1].count("**") + text[: pos - 1].count("^")
        raise ExpressionError(f"syntax error in {text!r}: {exc.msg}", pos) from None
    return _convert(tree.body, layout, text)


def _convert(node, layout: Layout, text: str) -> Expression:
    pos = getattr(node, "col_offset", None)
    pos = None if pos is None else pos + 1
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}", pos)
        return Const(float(node.value))
    if isinstance(node, ast.Name):
        if node.id in NAMED_CONSTANTS:
            return Const(NAMED_CONSTANTS[node.id])
        try:
            return Var(layout.resolve(node.id), layout.names[layout.resolve(node.id)])
        except KeyError:
            raise ExpressionError(f"unknown variable {node.id!r}", pos) from None
    if isinstance(node, ast.Subscript):
        if not isinstance(node.value, ast.Name):
            raise ExpressionError("only variable[index] subscripts are supported", pos)
        idx = node.slice
        if isinstance(idx, ast.Index):  # pragma: no cover - python < 3.9
            idx = idx.value
        if not (isinstance(idx, ast.Constant) and isinstance(idx.value, int)):
            raise ExpressionError("subscript must be an integer literal", pos)
        try:
            k = layout.resolve(node.value.id, idx.value)
        except KeyError:
            raise ExpressionError(f"unknown variable {node.value.id}[{idx.value}]", pos) from None
        return Var(k, layout.names[k])
    if isinstance(node, ast.UnaryOp):
        arg = _convert(node.operand, layout, text)
        if isinstance(node.op, ast.USub):
            return unary("neg", arg)
        if isinstance(node.op, ast.UAdd):
            return arg
        raise ExpressionError("unsupported unary operator", pos)
    if isinstance(node, ast.BinOp):
        left = _convert(node.left, layout, text)
        right = _convert(node.right, layout, text)
        if isinstance(node.op, ast.Pow):
            if not isinstance(right, Const) or right.value != int(right.value) or right.value < 0:
                raise ExpressionError("exponent must be a constant non-negative integer", pos)
            return power(left, int(right.value))
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise ExpressionError("unsupported binary operator", pos)
        return binary(op, left, right)
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in UNARY_OPS[1:]:
            name = getattr(node.func, "id", "?")
            raise ExpressionError(f"unknown function {name!r}", pos)
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument", pos)
        return unary(node.func.id, _convert(node.args[0], layout, text))
    raise ExpressionError(f"unsupported syntax {type(node).__name__}", pos)


# ---------------------------------------------------------------------------
# printing and structure

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2}
_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def to_text(e: Expression) -> str:
    """Infix text that parses back to an equal tree."""
    return _print(e, 0)


def _print(e: Expression, parent: int) -> str:
    if isinstance(e, Const):
        s = repr(float(e.value))
        if s in ("inf", "-inf", "nan"):
            raise ExpressionError(f"non-finite constant {s}")
        return f"({s})" if e.value < 0 else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            s = "-" + _print(e.arg, 3)
            return f"({s})" if parent > 0 else s
        return f"{e.op}({_print(e.arg, 0)})"
    if isinstance(e, Power):
        base = _print(e.base, 4)
        if isinstance(e.base, Power):  # ^ is right-associative
            base = f"({base})"
        return f"{base}^{e.exponent}"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        # right operand of - and / needs strictly higher precedence
        s = f"{_print(e.left, p)} {_SYM[e.op]} {_print(e.right, p + 1)}"
        return f"({s})" if p < parent else s
    raise TypeError(type(e))


def degree(e: Expression) -> float:
    """Syntactic polynomial degree; ``inf`` for transcendental dependence."""
    if isinstance(e, Const):
        return 0
    if isinstance(e, Var):
        return 1
    if isinstance(e, Unary):
        d = degree(e.arg)
        if e.op == "neg":
            return d
        return 0 if d == 0 else math.inf
    if isinstance(e, Power):
        d = degree(e.base)
        return 0 if e.exponent == 0 else d * e.exponent
    if isinstance(e, Binary):
        a, b = degree(e.left), degree(e.right)
        if e.op in ("add", "sub"):
            return max(a, b)
        if e.op == "mul":
            return a + b
        return a if b == 0 else math.inf
    raise TypeError(type(e))


# ---------------------------------------------------------------------------
# vector maps


@dataclass(frozen=True)
class VectorFunction:
    """Ordered expression components over one shared layout."""

    components: tuple[Expression, ...]
    layout: Layout

    @classmethod
    def parse(cls, texts: Sequence[str] | str, layout: Layout) -> "VectorFunction":
        if isinstance(texts, str):
            texts = [texts]
        return cls(tuple(parse_expression(t, layout) for t in texts), layout)

    @classmethod
    def identity(cls, layout: Layout) -> "VectorFunction":
        return cls(tuple(Var(i, n) for i, n in enumerate(layout.names)), layout)

    @property
    def dim(self) -> int:
        return len(self.components)

    def texts(self) -> list[str]:
        return [to_text(c) for c in self.components]

    def _points(self, point):
        x = np.asarray(point, dtype=float)
        batch = x.ndim == 2
        if not batch:
            x = x.reshape(-1, 1)
        if x.shape[0] != self.layout.size:
            raise ValueError(
                f"point has {x.shape[0]} entries, layout expects {self.layout.size}"
            )
        return x, batch

    def eval(self, point) -> np.ndarray:
        """Componentwise values; ``point`` of shape (n,) or a batch (n, K)."""
        x, batch = self._points(point)
        out = np.empty((self.dim, x.shape[1]))
        with np.errstate(all="ignore"):
            for i, c in enumerate(self.components):
                try:
                    out[i] = c._ev(x)
                except DomainError as exc:
                    raise DomainError(str(exc), i) from None
        return out if batch else out[:, 0]

    def jacobian(self, point) -> np.ndarray:
        """Exact forward-mode Jacobian, shape (m, n) or (K, m, n) for a batch."""
        x, batch = self._points(point)
        n, k = x.shape
        out = np.empty((k, self.dim, n))
        with np.errstate(all="ignore"):
            for i, c in enumerate(self.components):
                try:
                    _, g = c._fw(x)
                except DomainError as exc:
                    raise DomainError(str(exc), i) from None
                out[:, i, :] = g.T
        return out if batch else out[0]

    def value_and_jacobian(self, point):
        x, batch = self._points(point)
        n, k = x.shape
        vals = np.empty((self.dim, k))
        jac = np.empty((k, self.dim, n))
        with np.errstate(all="ignore"):
            for i, c in enumerate(self.components):
                try:
                    v, g = c._fw(x)
                except DomainError as exc:
                    raise DomainError(str(exc), i) from None
                vals[i] = v
                jac[:, i, :] = g.T
        if batch:
            return vals, jac
        return vals[:, 0], jac[0]

    def hessian_quadratic_form(self, point, d) -> np.ndarray:
        """Per-component ``d^T (Hessian of f_i) d`` at ``point``."""
        x, batch = self._points(point)
        d = np.asarray(d, dtype=float).ravel()
        if d.size != self.layout.size:
            raise ValueError("direction length does not match layout")
        out = np.empty((self.dim, x.shape[1]))
        with np.errstate(all="ignore"):
            for i, c in enumerate(self.components):
                try:
                    _, _, q = c._jet(x, d)
                except DomainError as exc:
                    raise DomainError(str(exc), i) from None
                out[i] = q
        return out if batch else out[:, 0]

    def hessians(self, point) -> np.ndarray:
        """Full Hessians (m, n, n) or (K, m, n, n), recovered by polarization."""
        x, batch = self._points(point)
        n = self.layout.size
        eye = np.eye(n)
        diag = [self.hessian_quadratic_form(x, eye[a]) for a in range(n)]
        H = np.zeros((x.shape[1], self.dim, n, n))
        for a in range(n):
            H[:, :, a, a] = diag[a].T
            for b in range(a + 1, n):
                qab = self.hessian_quadratic_form(x, eye[a] + eye[b])
                H[:, :, a, b] = H[:, :, b, a] = 0.5 * (qab - diag[a] - diag[b]).T
        return H if batch else H[0]

    def is_affine(self) -> list[bool]:
        return [degree(c) <= 1 for c in self.components]

    def restrict(self, rows: Sequence[int]) -> "VectorFunction":
        return VectorFunction(tuple(self.components[i] for i in rows), self.layout)


def eval(f: VectorFunction, point) -> np.ndarray:  # noqa: A001 - mirrors the operation name
    return f.eval(point)


def jacobian(f: VectorFunction, point) -> np.ndarray:
    return f.jacobian(point)


def hessian_quadratic_form(f: VectorFunction, point, d) -> np.ndarray:
    return f.hessian_quadratic_form(point, d)


def is_affine(f: VectorFunction) -> list[bool]:
    return f.is_affine()
