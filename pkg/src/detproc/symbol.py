"""Symbols f: T^d -> [0, 1].

A symbol is an immutable expression tree (``SymbolSpec``) over the torus
coordinates x1..xd.  Leaves are numbers, coordinates, ``pi`` and builtin
symbols; interior nodes are arithmetic, the usual elementary functions and
two structural operators, ``dilate(n, e)`` (x -> e(n x)) and
``subsample(r, e)`` (the symbol of the process restricted to r Z^d).

Evaluation is vectorised over numpy arrays, clamps to [0, 1] and rejects
values that are clearly out of range.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

RANGE_SLACK = 1e-9
MAX_VARS = 8
VAR_ALIASES = {"x": 1, "y": 2, "z": 3, "w": 4}


class SymbolError(ValueError):
    """Base class for problems with symbol text or evaluation."""


class SymbolSyntaxError(SymbolError):
    def __init__(self, msg, pos):
        super().__init__(f"{msg} at offset {pos}")
        self.pos = pos


class UnknownIdentifierError(SymbolError):
    pass


class ArityError(SymbolError):
    pass


class DimensionError(SymbolError):
    pass


class SingularityError(SymbolError):
    """Raised when an expression is evaluated at a point where it is singular."""


class SymbolRangeError(SymbolError):
    """Raw expression value outside [0, 1] by more than the slack."""


class ParameterError(SymbolError):
    pass


# --------------------------------------------------------------------------
# AST nodes

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


@dataclass(frozen=True)
class Builtin:
    name: str
    params: tuple = ()


@dataclass(frozen=True)
class Dilate:
    n: int
    arg: object


@dataclass(frozen=True)
class Subsample:
    r: int
    arg: object


FUNCTIONS = {
    "sin": (1, 1),
    "cos": (1, 1),
    "abs": (1, 1),
    "sqrt": (1, 1),
    "exp": (1, 1),
    "min": (2, None),
    "max": (2, None),
}


# --------------------------------------------------------------------------
# zero profiles

ZERO_KINDS = ("point", "algebraic-curve", "non-algebraic-curve", "positive-measure")


@dataclass(frozen=True)
class ZeroEntry:
    """Declared zero set of f (side 'f') or of 1-f (side '1-f').

    order is a positive int for finite vanishing order or None when not
    declared; flat marks a zero faster than any polynomial.  Both are
    ignored for positive-measure sets.
    """
    side: str
    kind: str
    order: Optional[int] = None
    flat: bool = False

    def __post_init__(self):
        if self.side not in ("f", "1-f"):
            raise ParameterError(f"zero side must be 'f' or '1-f', got {self.side!r}")
        if self.kind not in ZERO_KINDS:
            raise ParameterError(f"unknown zero kind {self.kind!r}")
        if self.order is not None and self.order < 1:
            raise ParameterError("vanishing order must be positive")

    def flipped(self):
        return replace(self, side="1-f" if self.side == "f" else "f")

    def to_text(self):
        parts = [self.side, self.kind]
        if self.kind != "positive-measure":
            if self.flat:
                parts.append("flat")
            elif self.order is not None:
                parts.append(str(self.order))
        return ":".join(parts)


def parse_zero_profile(text):
    """Parse 'f:point:2; 1-f:positive-measure' style declarations.

    An empty string means "declared: no zeros".
    """
    entries = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk or chunk == "none":
            continue
        bits = [b.strip() for b in chunk.split(":")]
        if len(bits) not in (2, 3):
            raise ParameterError(f"bad zero profile entry {chunk!r}")
        order, flat = None, False
        if len(bits) == 3 and bits[2] == "flat":
            flat = True
        elif len(bits) == 3:
            try:
                order = int(bits[2])
            except ValueError:
                raise ParameterError(f"bad vanishing order {bits[2]!r}") from None
        entries.append(ZeroEntry(bits[0], bits[1], order, flat))
    return tuple(entries)


# --------------------------------------------------------------------------
# builtins

def _sin2pi(x):
    return np.sin(np.pi * x) ** 2


def _eval_const(params, xs):
    return np.full(np.broadcast(*xs).shape, params[0], dtype=float)


def _eval_arc(params, xs):
    a, b = params
    t = np.mod(xs[0], 1.0)
    return ((t >= a) & (t < b)).astype(float)


def _eval_sin2(params, xs):
    return _sin2pi(xs[0])


def _eval_sin2half(params, xs):
    t = np.mod(xs[0], 1.0)
    return np.sin(np.pi * t / 2) ** 2


def _eval_ust(params, xs):
    terms = [_sin2pi(x) for x in xs]
    den = sum(terms)
    bad = den == 0
    if np.any(bad):
        raise SingularityError("spanning-tree symbol is singular at the origin")
    return terms[0] / den


def _eval_axis_g(params, xs):
    s = np.abs(np.sin(np.pi * xs[0]))
    return s / np.sqrt(1 + s * s)


def _eval_zigzag(params, xs):
    # 1/2 + (|sin| - 1)/(2 cos) rewritten without the removable singularity
    u = 2 * np.pi * xs[0]
    return 0.5 - np.cos(u) / (2 * (1 + np.abs(np.sin(u))))


def _eval_renewal(params, xs):
    a = params[0]
    return (1 - a) ** 2 / (1 - 2 * a * np.cos(2 * np.pi * xs[0]) + a * a)


def _eval_recip_trig(params, xs):
    return 1.0 / trig_poly_values(params, xs[0])


def _eval_poly3(params, xs):
    u = 2 * np.pi * xs[0]
    return (3 + 4 * np.cos(u) + 2 * np.cos(2 * u)) / 9


def trig_poly_values(c, x):
    """c0 + 2 sum_k c_k cos(2 pi k x) for real coefficients c."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, float(c[0]))
    for k, ck in enumerate(c[1:], start=1):
        out = out + 2 * ck * np.cos(2 * np.pi * k * x)
    return out


def _check_prob(name):
    def check(params):
        p = params[0]
        if not 0 <= p <= 1:
            raise ParameterError(f"{name}: parameter must lie in [0, 1], got {p}")
    return check


def _check_arc(params):
    a, b = params
    if not (0 <= a <= b <= 1):
        raise ParameterError(f"arc: need 0 <= a <= b <= 1, got ({a}, {b})")


def _check_renewal(params):
    if not 0 < params[0] < 1:
        raise ParameterError(f"renewal: a must lie in (0, 1), got {params[0]}")


def _check_ustd(params):
    d = params[0]
    if d != int(d) or d < 2 or d > MAX_VARS:
        raise ParameterError(f"ustd: dimension must be an integer in [2, {MAX_VARS}]")


def _check_recip_trig(params):
    if len(params) < 1:
        raise ArityError("recip_trig needs at least one coefficient")
    x = (np.arange(1 << 14) + 0.5) / (1 << 14)
    lo = trig_poly_values(params, x).min()
    # endpoints of the grid are the likeliest minima for symmetric polynomials
    lo = min(lo, float(trig_poly_values(params, np.array([0.0, 0.5])).min()))
    if lo < 1 - RANGE_SLACK:
        raise ParameterError(
            f"recip_trig: the trigonometric polynomial must be >= 1 (min {lo:.6g})")


@dataclass(frozen=True)
class BuiltinInfo:
    name: str
    nparams: tuple  # (min, max), max None for variadic
    evaluate: Callable
    check: Optional[Callable] = None
    dim: Callable = lambda params: 1
    zero_profile: Callable = lambda params: None
    expression: Optional[Callable] = None  # equivalent grammar text
    doc: str = ""


def _const_zeros(params):
    p = params[0]
    if p == 0:
        return (ZeroEntry("f", "positive-measure"),)
    if p == 1:
        return (ZeroEntry("1-f", "positive-measure"),)
    return ()


def _arc_zeros(params):
    a, b = params
    out = []
    if b - a < 1:
        out.append(ZeroEntry("f", "positive-measure"))
    if b > a:
        out.append(ZeroEntry("1-f", "positive-measure"))
    return tuple(out)


_ARC_ZEROS = lambda params: _arc_zeros((0.0, 0.5))

BUILTINS = {
    "const": BuiltinInfo(
        "const", (1, 1), _eval_const, _check_prob("const"),
        zero_profile=_const_zeros,
        expression=lambda p: repr(float(p[0])),
        doc="constant p"),
    "arc": BuiltinInfo(
        "arc", (2, 2), _eval_arc, _check_arc, zero_profile=_arc_zeros,
        doc="indicator of x1 mod 1 in [a, b)"),
    "half_ind": BuiltinInfo(
        "half_ind", (0, 0), lambda p, xs: _eval_arc((0.0, 0.5), xs),
        zero_profile=_ARC_ZEROS, expression=lambda p: "arc(0, 0.5)",
        doc="indicator of [0, 1/2)"),
    "lozenge": BuiltinInfo(
        "lozenge", (0, 0), lambda p, xs: _eval_arc((1 / 3, 2 / 3), xs),
        zero_profile=_ARC_ZEROS, expression=lambda p: "arc(1/3, 2/3)",
        doc="indicator of [1/3, 2/3)"),
    "sin2": BuiltinInfo(
        "sin2", (0, 0), _eval_sin2,
        zero_profile=lambda p: (ZeroEntry("f", "point", 2), ZeroEntry("1-f", "point", 2)),
        expression=lambda p: "sin(pi*x1)^2",
        doc="sin^2(pi x)"),
    "sin2half": BuiltinInfo(
        "sin2half", (0, 0), _eval_sin2half,
        zero_profile=lambda p: (ZeroEntry("f", "point", 2), ZeroEntry("1-f", "point", 2)),
        doc="sin^2(pi t / 2) for t = x mod 1 in [0, 1)"),
    "ust2d": BuiltinInfo(
        "ust2d", (0, 0), _eval_ust, dim=lambda p: 2,
        zero_profile=lambda p: (ZeroEntry("f", "algebraic-curve", 2),
                                ZeroEntry("1-f", "algebraic-curve", 2)),
        expression=lambda p: "sin(pi*x1)^2/(sin(pi*x1)^2+sin(pi*x2)^2)",
        doc="horizontal edges of the planar uniform spanning tree"),
    "ustd": BuiltinInfo(
        "ustd", (1, 1), _eval_ust, _check_ustd, dim=lambda p: int(p[0]),
        expression=lambda p: "sin(pi*x1)^2/(" + "+".join(
            f"sin(pi*x{j})^2" for j in range(1, int(p[0]) + 1)) + ")",
        doc="edges parallel to the first axis of the spanning forest in Z^d"),
    "ust_axis_g": BuiltinInfo(
        "ust_axis_g", (0, 0), _eval_axis_g,
        zero_profile=lambda p: (ZeroEntry("f", "point", 1),),
        expression=lambda p: "abs(sin(pi*x1))/sqrt(1+sin(pi*x1)^2)",
        doc="spanning-tree edges along a single horizontal line"),
    "zigzag": BuiltinInfo(
        "zigzag", (0, 0), _eval_zigzag,
        zero_profile=lambda p: (ZeroEntry("f", "point", 1), ZeroEntry("1-f", "point", 1)),
        expression=lambda p: "1/2 + (abs(sin(2*pi*x1)) - 1)/(2*cos(2*pi*x1))",
        doc="spanning-tree edges along a zig-zag path"),
    "renewal": BuiltinInfo(
        "renewal", (1, 1), _eval_renewal, _check_renewal,
        zero_profile=lambda p: (ZeroEntry("1-f", "point", 2),),
        expression=lambda p: f"(1-{p[0]!r})^2/(1 - 2*{p[0]!r}*cos(2*pi*x1) + {p[0]!r}^2)",
        doc="(1-a)^2 / |e(x) - a|^2"),
    "recip_trig": BuiltinInfo(
        "recip_trig", (1, None), _eval_recip_trig, _check_recip_trig,
        expression=lambda p: "1/(" + " + ".join(
            [repr(float(p[0]))] + [f"2*{c!r}*cos(2*pi*{k}*x1)" for k, c in
                                   enumerate(p[1:], start=1)]) + ")",
        doc="1/T for T = c0 + 2 sum c_k cos(2 pi k x) >= 1"),
    "poly3": BuiltinInfo(
        "poly3", (0, 0), _eval_poly3,
        zero_profile=lambda p: (ZeroEntry("f", "point", 2), ZeroEntry("1-f", "point", 2)),
        expression=lambda p: "(3 + 4*cos(2*pi*x1) + 2*cos(4*pi*x1))/9",
        doc="|1 + e(x) + e(2x)|^2 / 9"),
}

STRUCTURAL = ("dilate", "subsample")


def builtin_dim(node: Builtin):
    return BUILTINS[node.name].dim(node.params)


def make_builtin(name, params=()):
    info = BUILTINS.get(name)
    if info is None:
        raise UnknownIdentifierError(f"unknown builtin {name!r}")
    lo, hi = info.nparams
    if len(params) < lo or (hi is not None and len(params) > hi):
        want = str(lo) if lo == hi else f"{lo}..{hi if hi is not None else ''}"
        raise ArityError(f"{name} takes {want} arguments, got {len(params)}")
    params = tuple(float(p) for p in params)
    if name == "ustd":
        params = (int(params[0]),) if params[0] == int(params[0]) else params
    if info.check:
        info.check(params)
    return Builtin(name, params)


# --------------------------------------------------------------------------
# SymbolSpec

@dataclass(frozen=True)
class SymbolSpec:
    dim: int
    body: object
    zero_profile: Optional[tuple] = None
    name: Optional[str] = None

    def __post_init__(self):
        if self.dim < 1 or self.dim > MAX_VARS:
            raise DimensionError(f"dimension must be in [1, {MAX_VARS}]")
        need = _min_dim(self.body)
        if need > self.dim:
            raise DimensionError(f"expression needs dimension {need} > {self.dim}")

    @property
    def text(self):
        return to_text(self)

    @property
    def label(self):
        return self.name or to_text(self)

    @property
    def builtin(self):
        """The Builtin node when the body is a bare builtin, else None."""
        return self.body if isinstance(self.body, Builtin) else None

    def __call__(self, *coords):
        return evaluate(self, coords)


def builtin_symbol(name, *params):
    node = make_builtin(name, params)
    info = BUILTINS[name]
    return SymbolSpec(builtin_dim(node), node, info.zero_profile(node.params),
                      name=to_text(SymbolSpec(builtin_dim(node), node)))


def _min_dim(node):
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Builtin):
        return builtin_dim(node)
    if isinstance(node, (Neg, Dilate, Subsample)):
        return _min_dim(node.arg)
    if isinstance(node, BinOp):
        return max(_min_dim(node.left), _min_dim(node.right))
    if isinstance(node, Call):
        return max((_min_dim(a) for a in node.args), default=0)
    return 0


# --------------------------------------------------------------------------
# tokenizer / parser

class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = self._tokenize(text)
        self.i = 0

    @staticmethod
    def _tokenize(s):
        toks = []
        i, n = 0, len(s)
        while i < n:
            c = s[i]
            if c.isspace():
                i += 1
            elif c.isdigit() or (c == "." and i + 1 < n and s[i + 1].isdigit()):
                j = i
                while j < n and (s[j].isdigit() or s[j] == "."):
                    j += 1
                if j < n and s[j] in "eE":
                    k = j + 1
                    if k < n and s[k] in "+-":
                        k += 1
                    if k < n and s[k].isdigit():
                        j = k
                        while j < n and s[j].isdigit():
                            j += 1
                try:
                    val = float(s[i:j])
                except ValueError:
                    raise SymbolSyntaxError(f"bad number {s[i:j]!r}", i) from None
                toks.append(("num", val, i))
                i = j
            elif c.isalpha() or c == "_":
                j = i
                while j < n and (s[j].isalnum() or s[j] == "_"):
                    j += 1
                toks.append(("id", s[i:j], i))
                i = j
            elif c in "+-*/^(),":
                toks.append((c, c, i))
                i += 1
            else:
                raise SymbolSyntaxError(f"unexpected character {c!r}", i)
        toks.append(("end", None, n))
        return toks

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None):
        tok = self.toks[self.i]
        if kind is not None and tok[0] != kind:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise SymbolSyntaxError(f"expected {kind!r} but found {what}", tok[2])
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise SymbolSyntaxError(f"unexpected {tok[1]!r}", tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in "+-":
            op = self.take()[0]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] in "*/":
            op = self.take()[0]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "-":
            self.take()
            return Neg(self.unary())
        if self.peek()[0] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def args(self):
        self.take("(")
        out = []
        if self.peek()[0] == ")":
            self.take()
            return out
        while True:
            out.append(self.expr())
            if self.peek()[0] == ",":
                self.take()
                continue
            self.take(")")
            return out

    def atom(self):
        tok = self.peek()
        kind, val, pos = tok
        if kind == "num":
            self.take()
            return Num(val)
        if kind == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if kind != "id":
            what = "end of input" if kind == "end" else repr(val)
            raise SymbolSyntaxError(f"unexpected {what}", pos)
        self.take()
        name = val
        has_args = self.peek()[0] == "("
        if name == "pi" and not has_args:
            return Pi()
        var = _var_index(name)
        if var is not None and not has_args:
            return Var(var)
        if name in FUNCTIONS:
            if not has_args:
                raise SymbolSyntaxError(f"function {name} needs arguments", pos + len(name))
            args = self.args()
            lo, hi = FUNCTIONS[name]
            if len(args) < lo or (hi is not None and len(args) > hi):
                raise ArityError(f"{name} takes {lo if lo == hi else f'at least {lo}'}"
                                 f" argument(s), got {len(args)} (offset {pos})")
            return Call(name, tuple(args))
        if name in STRUCTURAL:
            args = self.args() if has_args else []
            if len(args) != 2:
                raise ArityError(f"{name} takes 2 arguments, got {len(args)} (offset {pos})")
            n = _const_value(args[0])
            if n is None or n != int(n) or n < 1:
                raise ParameterError(f"{name}: first argument must be a positive integer")
            cls = Dilate if name == "dilate" else Subsample
            return cls(int(n), args[1])
        if name in BUILTINS:
            args = self.args() if has_args else []
            vals = []
            for a in args:
                v = _const_value(a)
                if v is None:
                    raise ParameterError(f"{name}: arguments must be numeric constants")
                vals.append(v)
            return make_builtin(name, vals)
        raise UnknownIdentifierError(f"unknown identifier {name!r} at offset {pos}")


def _var_index(name):
    if name in VAR_ALIASES:
        return VAR_ALIASES[name]
    if name.startswith("x") and name[1:].isdigit():
        k = int(name[1:])
        if 1 <= k <= MAX_VARS:
            return k
    return None


def _const_value(node):
    """Value of a coordinate-free, builtin-free subtree, else None."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Pi):
        return math.pi
    if isinstance(node, Neg):
        v = _const_value(node.arg)
        return None if v is None else -v
    if isinstance(node, BinOp):
        a, b = _const_value(node.left), _const_value(node.right)
        if a is None or b is None:
            return None
        try:
            return {"+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
                    "/": lambda: a / b, "^": lambda: a ** b}[node.op]()
        except (ZeroDivisionError, OverflowError, ValueError):
            return None
    if isinstance(node, Call):
        vals = [_const_value(a) for a in node.args]
        if any(v is None for v in vals):
            return None
        try:
            return float(_FN_IMPL[node.fn](*[np.float64(v) for v in vals]))
        except (ValueError, FloatingPointError):
            return None
    return None


def parse_symbol(text: str, dim: Optional[int] = None, zero_profile=None, name=None) -> SymbolSpec:
    """Parse symbol text.  dim defaults to the smallest dimension that fits.

    A bare builtin keeps its declared zero profile unless one is given.
    """
    if not isinstance(text, str):
        raise SymbolError("symbol text must be a string")
    body = _Parser(text).parse()
    need = _min_dim(body)
    if dim is None:
        dim = max(need, 1)
    if need > dim:
        raise DimensionError(f"expression uses dimension {need} but dim={dim}")
    if isinstance(zero_profile, str):
        zero_profile = parse_zero_profile(zero_profile)
    if zero_profile is None and isinstance(body, Builtin):
        zero_profile = BUILTINS[body.name].zero_profile(body.params)
    return SymbolSpec(dim, body, zero_profile, name)


# --------------------------------------------------------------------------
# printing

def _fmt_num(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def node_text(node):
    if isinstance(node, Num):
        return _fmt_num(node.value) if node.value >= 0 else f"({_fmt_num(node.value)})"
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Pi):
        return "pi"
    if isinstance(node, Neg):
        return f"(-{node_text(node.arg)})"
    if isinstance(node, BinOp):
        return f"({node_text(node.left)} {node.op} {node_text(node.right)})"
    if isinstance(node, Call):
        return f"{node.fn}({', '.join(node_text(a) for a in node.args)})"
    if isinstance(node, Builtin):
        if not node.params:
            return node.name
        return f"{node.name}({', '.join(_fmt_num(p) for p in node.params)})"
    if isinstance(node, Dilate):
        return f"dilate({node.n}, {node_text(node.arg)})"
    if isinstance(node, Subsample):
        return f"subsample({node.r}, {node_text(node.arg)})"
    raise TypeError(f"not a symbol node: {node!r}")


def to_text(spec: SymbolSpec) -> str:
    return node_text(spec.body)


# --------------------------------------------------------------------------
# evaluation

def _safe_sqrt(v):
    if np.any(v < 0):
        raise SingularityError("square root of a negative number")
    return np.sqrt(v)


_FN_IMPL = {
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "sqrt": _safe_sqrt,
    "exp": np.exp,
    "min": lambda *a: np.minimum.reduce(np.broadcast_arrays(*a)),
    "max": lambda *a: np.maximum.reduce(np.broadcast_arrays(*a)),
}


def _eval_node(node, xs):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        return xs[node.index - 1]
    if isinstance(node, Pi):
        return np.float64(np.pi)
    if isinstance(node, Neg):
        return -_eval_node(node.arg, xs)
    if isinstance(node, BinOp):
        a = _eval_node(node.left, xs)
        b = _eval_node(node.right, xs)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if np.any(b == 0):
                raise SingularityError("division by zero")
            return a / b
        with np.errstate(all="ignore"):
            r = np.power(a, b)
        if not np.all(np.isfinite(r)):
            raise SingularityError("power is undefined or infinite")
        return r
    if isinstance(node, Call):
        return _FN_IMPL[node.fn](*[_eval_node(a, xs) for a in node.args])
    if isinstance(node, Builtin):
        k = builtin_dim(node)
        return BUILTINS[node.name].evaluate(node.params, xs[:k])
    if isinstance(node, Dilate):
        return _eval_node(node.arg, [node.n * x for x in xs])
    if isinstance(node, Subsample):
        return _eval_subsample(node, xs)
    raise TypeError(f"not a symbol node: {node!r}")


def _eval_subsample(node, xs):
    # f_r(x) = r^{-d} sum over j in {0..r-1}^d of f((x + j)/r)
    r = node.r
    d = len(xs)
    total = 0.0
    for j in np.ndindex(*([r] * d)):
        total = total + _eval_node(node.arg, [(x + jj) / r for x, jj in zip(xs, j)])
    return total / r ** d


def evaluate(spec: SymbolSpec, coords, clamp=True):
    """Vectorised evaluation.

    coords: sequence of d broadcastable arrays, or an array whose last axis has
    length d (a 1-d symbol also accepts a plain array of points).
    """
    xs = _coords(coords, spec.dim)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.asarray(_eval_node(spec.body, xs), dtype=float)
    shape = np.broadcast(*xs).shape if len(xs) > 1 else np.shape(xs[0])
    raw = np.broadcast_to(raw, shape)
    if not np.all(np.isfinite(raw)):
        raise SingularityError("symbol is not finite at some evaluation point")
    if np.any(raw < -RANGE_SLACK) or np.any(raw > 1 + RANGE_SLACK):
        lo, hi = float(raw.min()), float(raw.max())
        raise SymbolRangeError(f"symbol leaves [0, 1]: range [{lo:.6g}, {hi:.6g}]")
    return np.clip(raw, 0.0, 1.0) if clamp else raw.copy()


def _log_node(node, xs):
    # log of a node, peeling exp / products / quotients / powers so tiny
    # values like exp(-1000) do not underflow to a fake zero
    if isinstance(node, Call) and node.fn == "exp":
        return _eval_node(node.args[0], xs)
    if isinstance(node, BinOp) and node.op == "*":
        return _log_node(node.left, xs) + _log_node(node.right, xs)
    if isinstance(node, BinOp) and node.op == "/":
        return _log_node(node.left, xs) - _log_node(node.right, xs)
    if isinstance(node, BinOp) and node.op == "^":
        e = _eval_node(node.right, xs)
        if isinstance(node.right, Num) and float(node.right.value) % 2 == 0:
            return e * np.log(np.abs(_eval_node(node.left, xs)))
        return e * _log_node(node.left, xs)
    return np.log(np.asarray(_eval_node(node, xs), dtype=float))


def log_evaluate(spec: SymbolSpec, coords):
    """log f without forming f first where the expression allows it.

    Gives -inf where f vanishes.  No range check beyond the log being real.
    """
    xs = _coords(coords, spec.dim)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.asarray(_log_node(spec.body, xs), dtype=float)
        shape = np.broadcast(*xs).shape if len(xs) > 1 else np.shape(xs[0])
        raw = np.broadcast_to(raw, shape)
        if np.any(np.isnan(raw)):
            # negative factors somewhere: fall back to the plain log
            plain = np.log(evaluate(spec, xs))
            raw = np.where(np.isnan(raw), plain, raw)
    if np.any(np.isnan(raw)) or np.any(raw > RANGE_SLACK):
        raise SymbolRangeError("log of the symbol is not a log-probability")
    return np.minimum(raw, 0.0)


def _coords(coords, dim):
    if isinstance(coords, np.ndarray) or np.isscalar(coords):
        arr = np.asarray(coords, dtype=float)
        if dim == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
            xs = [arr]
        else:
            if arr.shape[-1] != dim:
                raise DimensionError(f"points must have {dim} coordinates")
            xs = [arr[..., j] for j in range(dim)]
    else:
        xs = [np.asarray(c, dtype=float) for c in coords]
        if len(xs) != dim:
            raise DimensionError(f"expected {dim} coordinate arrays, got {len(xs)}")
    return [np.mod(x, 1.0) for x in xs]


def eval_symbol(spec: SymbolSpec, x) -> float:
    """Value of the symbol at one point of the torus."""
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.shape != (spec.dim,):
        raise DimensionError(f"point must have {spec.dim} coordinates")
    return float(evaluate(spec, [pt[j] for j in range(spec.dim)]))


# --------------------------------------------------------------------------
# transformations

def complement(spec: SymbolSpec) -> SymbolSpec:
    """The symbol 1 - f."""
    body = spec.body
    if isinstance(body, Builtin) and body.name == "const":
        new = make_builtin("const", (1 - body.params[0],))
    elif (isinstance(body, BinOp) and body.op == "-" and isinstance(body.left, Num)
          and body.left.value == 1):
        new = body.right
    else:
        new = BinOp("-", Num(1.0), body)
    zp = None if spec.zero_profile is None else tuple(z.flipped() for z in spec.zero_profile)
    name = None
    if spec.name:
        name = spec.name[2:] if spec.name.startswith("1-") else "1-" + spec.name
    return SymbolSpec(spec.dim, new, zp, name)


def mult_arg(spec: SymbolSpec, n: int) -> SymbolSpec:
    """x -> f(n x) on the circle."""
    if spec.dim != 1:
        raise DimensionError("mult_arg is defined for d = 1")
    if n != int(n) or n < 1:
        raise ParameterError("n must be a positive integer")
    n = int(n)
    if n == 1:
        return spec
    body = spec.body
    if isinstance(body, Builtin) and body.name == "const":
        return spec
    if isinstance(body, Dilate):
        new = Dilate(body.n * n, body.arg)
    else:
        new = Dilate(n, body)
    name = f"{spec.name}@{n}" if spec.name else None
    return SymbolSpec(1, new, spec.zero_profile, name)


def subsample_symbol(spec: SymbolSpec, r: int) -> SymbolSpec:
    """Symbol of the process restricted to r Z^d (same r on every axis)."""
    if r != int(r) or r < 1:
        raise ParameterError("r must be a positive integer")
    if r == 1:
        return spec
    return SymbolSpec(spec.dim, Subsample(int(r), spec.body), None,
                      f"{spec.name}/{r}" if spec.name else None)


def subsample(table, r):
    """Coefficient table of the restriction to r Z^d: entry k is table(r k).

    r is an int or one int per axis.  The output radius is the largest that
    the source table supports.
    """
    d = table.dim
    rr = (int(r),) * d if np.isscalar(r) else tuple(int(v) for v in r)
    if len(rr) != d or any(v < 1 for v in rr):
        raise ParameterError("r must be positive, one value per axis")
    kmax = tuple(K // v for K, v in zip(table.kmax, rr))
    sl = tuple(slice(K - v * km, K + v * km + 1, v) for K, v, km in zip(table.kmax, rr, kmax))
    data = table.data[sl].copy()
    return replace(table, kmax=kmax, data=data,
                   provenance=f"subsample{rr} of {table.provenance}")


# --------------------------------------------------------------------------
# config files

def load_symbols(path) -> dict:
    """Read symbol definitions from an INI file.

    Each section is one symbol::

        [ftilde]
        dim = 1
        expression = 0.99*arc(0, 0.5) + 0.01*arc(0.5, 1)
        zero_profile = f:positive-measure; 1-f:positive-measure

    ``builtin = renewal(0.5)`` may be used instead of ``expression``.
    """
    cp = configparser.ConfigParser(interpolation=None)
    with open(path) as fh:
        cp.read_file(fh)
    out = {}
    for sect in cp.sections():
        sec = cp[sect]
        text = sec.get("expression") or sec.get("builtin")
        if text is None:
            raise SymbolError(f"[{sect}]: need 'expression' or 'builtin'")
        dim = sec.getint("dim", fallback=None)
        zp = sec.get("zero_profile", fallback=None)
        out[sect] = parse_symbol(text, dim, zp, name=sect)
    return out


def resolve_symbol(text_or_name, dim=None, config=None):
    """Look a name up in a loaded config dict, else parse it as symbol text."""
    if config and text_or_name in config:
        return config[text_or_name]
    spec = parse_symbol(text_or_name, dim)
    if spec.name is None and isinstance(spec.body, Builtin):
        spec = replace(spec, name=to_text(spec))
    return spec
