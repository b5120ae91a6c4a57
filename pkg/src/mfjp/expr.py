"""Rate-expression language.

Rates are written as small arithmetic expressions over the simplex
coordinates ``xi[label]``.  The grammar (whitespace is insignificant)::

    expr    := product (("+" | "-") product)*
    product := unary (("*" | "/") unary)*
    unary   := ("+" | "-") unary | atom
    atom    := NUMBER
             | "xi" "[" LABEL "]"
             | ("exp" | "log") "(" expr ")"
             | ("min" | "max") "(" expr "," expr ")"
             | "(" expr ")"
    NUMBER  := DIGITS ["." DIGITS] [("e" | "E") ["+" | "-"] DIGITS]
             | "." DIGITS [...exponent]
    LABEL   := [A-Za-z0-9_]+

Model parameters are substituted textually before parsing: every bare
identifier that names a parameter is replaced by the parenthesised
numeric value (identifiers inside ``xi[...]`` are never touched).

Evaluation is vectorised: an expression applied to an array of shape
``(..., d)`` returns an array of shape ``(...)``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ExprSyntaxError, UnknownLabel

__all__ = ["RateExpr", "parse_rate_expr", "substitute_params"]

_FUNCS1 = {"exp": np.exp, "log": np.log}
_FUNCS2 = {"min": np.minimum, "max": np.maximum}
_BINOPS = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide}

_NUMBER_RE = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_LABEL_RE = re.compile(r"[A-Za-z0-9_]+")
_SUBST_RE = re.compile(r"xi\s*\[[^\]]*\]|[A-Za-z_][A-Za-z0-9_]*")


# ---------------------------------------------------------------- nodes
class _Node:
    __slots__ = ()


class _Num(_Node):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = float(value)

    def eval(self, xi):
        return self.value

    def pretty(self):
        text = repr(self.value)
        return text if self.value >= 0 else f"({text})"

    def code(self):
        return f"({self.value!r})"


class _Var(_Node):
    __slots__ = ("label", "index")

    def __init__(self, label, index):
        self.label = label
        self.index = index

    def eval(self, xi):
        return xi[..., self.index]

    def pretty(self):
        return f"xi[{self.label}]"

    def code(self):
        return f"X[..., {self.index}]"


class _Neg(_Node):
    __slots__ = ("arg",)

    def __init__(self, arg):
        self.arg = arg

    def eval(self, xi):
        return np.negative(self.arg.eval(xi))

    def pretty(self):
        return f"(-{self.arg.pretty()})"

    def code(self):
        return f"(-{self.arg.code()})"


class _Call(_Node):
    __slots__ = ("name", "args")

    def __init__(self, name, args):
        self.name = name
        self.args = tuple(args)

    def eval(self, xi):
        vals = [a.eval(xi) for a in self.args]
        if len(vals) == 1:
            return _FUNCS1[self.name](vals[0])
        return _FUNCS2[self.name](vals[0], vals[1])

    def pretty(self):
        return f"{self.name}(" + ", ".join(a.pretty() for a in self.args) + ")"

    def code(self):
        return f"_{self.name}(" + ", ".join(a.code() for a in self.args) + ")"


class _BinOp(_Node):
    __slots__ = ("op", "left", "right")

    def __init__(self, op, left, right):
        self.op = op
        self.left = left
        self.right = right

    def eval(self, xi):
        return _BINOPS[self.op](self.left.eval(xi), self.right.eval(xi))

    def pretty(self):
        return f"({self.left.pretty()} {self.op} {self.right.pretty()})"

    def code(self):
        return f"({self.left.code()} {self.op} {self.right.code()})"


# --------------------------------------------------------------- parser
class _Parser:
    def __init__(self, text, labels):
        self.text = text
        self.pos = 0
        self.labels = {lab: i for i, lab in enumerate(labels)}

    # -- lexical helpers
    def _skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self):
        self._skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _expect(self, ch):
        if self._peek() != ch:
            got = self._peek() or "end of input"
            raise ExprSyntaxError(f"expected {ch!r}, found {got!r}", self.text, self.pos)
        self.pos += 1

    def _error(self, msg):
        raise ExprSyntaxError(msg, self.text, self.pos)

    # -- grammar
    def parse(self):
        node = self._expr()
        self._skip()
        if self.pos != len(self.text):
            self._error(f"unexpected character {self.text[self.pos]!r}")
        return node

    def _expr(self):
        node = self._product()
        while self._peek() in ("+", "-"):
            op = self.text[self.pos]
            self.pos += 1
            node = _BinOp(op, node, self._product())
        return node

    def _product(self):
        node = self._unary()
        while self._peek() in ("*", "/"):
            op = self.text[self.pos]
            self.pos += 1
            node = _BinOp(op, node, self._unary())
        return node

    def _unary(self):
        ch = self._peek()
        if ch == "-":
            self.pos += 1
            return _Neg(self._unary())
        if ch == "+":
            self.pos += 1
            return self._unary()
        return self._atom()

    def _atom(self):
        ch = self._peek()
        if ch == "":
            self._error("unexpected end of input")
        if ch == "(":
            self.pos += 1
            node = self._expr()
            self._expect(")")
            return node
        m = _NUMBER_RE.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return _Num(float(m.group(0)))
        m = _IDENT_RE.match(self.text, self.pos)
        if not m:
            self._error(f"unexpected character {ch!r}")
        name = m.group(0)
        start = self.pos
        self.pos = m.end()
        if name == "xi":
            self._expect("[")
            self._skip()
            lm = _LABEL_RE.match(self.text, self.pos)
            if not lm:
                self._error("expected state label")
            label = lm.group(0)
            if label not in self.labels:
                raise UnknownLabel(
                    f"unknown state label {label!r} at position {self.pos} in {self.text!r}"
                )
            self.pos = lm.end()
            self._expect("]")
            return _Var(label, self.labels[label])
        if name in _FUNCS1:
            self._expect("(")
            arg = self._expr()
            self._expect(")")
            return _Call(name, [arg])
        if name in _FUNCS2:
            self._expect("(")
            a = self._expr()
            self._expect(",")
            b = self._expr()
            self._expect(")")
            return _Call(name, [a, b])
        self.pos = start
        self._error(f"unknown identifier {name!r}")


# ------------------------------------------------------------ public API
@dataclass(frozen=True)
class RateExpr:
    """A compiled rate expression.

    Attributes
    ----------
    source : str
        Expression text after parameter substitution.
    labels : tuple of str
        State labels the ``xi[...]`` references resolve against.
    """

    source: str
    labels: tuple
    _tree: _Node = field(repr=False, compare=False)
    _fn: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._fn is None:
            object.__setattr__(self, "_fn", compile_nodes([self._tree]))

    def __call__(self, xi):
        """Evaluate at simplex point(s) ``xi`` of shape ``(..., d)``."""
        xi = np.asarray(xi, dtype=float)
        with np.errstate(all="ignore"):
            val = self._fn(xi)[0]
        return np.broadcast_to(np.asarray(val, dtype=float), xi.shape[:-1]).copy()

    def evaluate_tree(self, xi):
        """Reference evaluation by walking the syntax tree (no code generation)."""
        xi = np.asarray(xi, dtype=float)
        with np.errstate(all="ignore"):
            val = self._tree.eval(xi)
        return np.broadcast_to(np.asarray(val, dtype=float), xi.shape[:-1]).copy()

    def pretty(self):
        """Fully parenthesised canonical text; parses back to the same tree."""
        return self._tree.pretty()

    @property
    def is_constant(self):
        return "X[" not in self._tree.code()


_NAMESPACE = {"_exp": np.exp, "_log": np.log, "_min": np.minimum, "_max": np.maximum}


def compile_nodes(trees):
    """Compile syntax trees into one function ``X -> tuple of values``.

    The generated source only references the four numpy ufuncs above and
    the argument ``X``; it is built from parsed trees, never from raw text.
    """
    body = ", ".join(t.code() for t in trees)
    return eval(f"lambda X: ({body},)", dict(_NAMESPACE))  # noqa: S307


def substitute_params(text, params):
    """Replace parameter names by their numeric values (textually).

    Parameters
    ----------
    text : str
        Expression text.
    params : mapping of str to float
        Parameter values.

    Returns
    -------
    str
    """
    if not params:
        return text

    def repl(m):
        tok = m.group(0)
        if tok.startswith("xi") and "[" in tok:
            return tok
        if tok in params:
            return "(" + repr(float(params[tok])) + ")"
        return tok

    return _SUBST_RE.sub(repl, text)


def parse_rate_expr(text, labels, params=None):
    """Parse a rate expression.

    Parameters
    ----------
    text : str
        Expression conforming to the module grammar.
    labels : sequence of str
        State labels available to ``xi[...]``.
    params : mapping, optional
        Parameters substituted textually before parsing.

    Returns
    -------
    RateExpr

    Raises
    ------
    ExprSyntaxError
        With the character position of the offending token.
    UnknownLabel
        If ``xi[label]`` names a state not in ``labels``.

    Examples
    --------
    >>> e = parse_rate_expr("exp(1.5*(2*xi[up]-1))", ["down", "up"])
    >>> float(e([0.5, 0.5]))
    1.0
    """
    if not isinstance(text, str):
        raise ExprSyntaxError("expression must be a string", repr(text), 0)
    src = substitute_params(text, params or {})
    tree = _Parser(src, labels).parse()
    return RateExpr(src, tuple(labels), tree)
