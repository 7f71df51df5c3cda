"""
Expression grammar for user-defined C, K and g.

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Names are the variable `t`, the constants `pi` and `e`, and any parameter
passed to `parse`. Functions: ln, exp, pow, sqrt, loglog (ln of ln).
Parsed trees evaluate on floats, numpy arrays and edge numbers alike.
"""

import math
import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

import extended as xm
from errors import InputError

_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)

_FUNCTIONS: Dict[str, Tuple[int, Callable]] = {
    "ln": (1, xm.ln),
    "log": (1, xm.ln),
    "exp": (1, xm.exp),
    "sqrt": (1, xm.sqrt),
    "loglog": (1, xm.loglog),
    "pow": (2, xm.power),
}

_CONSTANTS = {"pi": math.pi, "e": math.e}


class Node:
    def evaluate(self, t):
        raise NotImplementedError


@dataclass
class Number(Node):
    value: float

    def evaluate(self, t):
        return self.value


@dataclass
class Variable(Node):
    def evaluate(self, t):
        return t


@dataclass
class Negate(Node):
    operand: Node

    def evaluate(self, t):
        return -self.operand.evaluate(t)


@dataclass
class Binary(Node):
    op: str
    left: Node
    right: Node

    def evaluate(self, t):
        x = self.left.evaluate(t)
        y = self.right.evaluate(t)
        if self.op == "+":
            return x + y
        if self.op == "-":
            return x - y
        if self.op == "*":
            return x * y
        if self.op == "/":
            return x / y
        return xm.power(x, y)


@dataclass
class Call(Node):
    name: str
    args: List[Node]

    def evaluate(self, t):
        _, fn = _FUNCTIONS[self.name]
        return fn(*(arg.evaluate(t) for arg in self.args))


class _Parser:
    def __init__(self, source: str, params: Dict[str, float]):
        self.source = source
        self.params = params
        self.tokens = self._tokenize(source)
        self.pos = 0

    @staticmethod
    def _tokenize(source: str) -> List[Tuple[str, str, int]]:
        tokens = []
        index = 0
        stripped_end = len(source.rstrip())
        while index < stripped_end:
            match = _TOKEN.match(source, index)
            if not match or match.end() == index:
                raise InputError(
                    f"unexpected character {source[index:].strip()[:1]!r} at position {index}",
                    {"expression": source, "position": index},
                )
            kind = match.lastgroup
            text = match.group(kind)
            if text == "**":
                text = "^"
            tokens.append((kind, text, match.start(kind)))
            index = match.end()
        tokens.append(("end", "", len(source)))
        return tokens

    def _peek(self) -> Tuple[str, str, int]:
        return self.tokens[self.pos]

    def _error(self, message: str) -> InputError:
        _, text, position = self._peek()
        found = repr(text) if text else "end of input"
        return InputError(
            f"{message} at position {position} (found {found}) in {self.source!r}",
            {"expression": self.source, "position": position},
        )

    def _accept(self, text: str) -> bool:
        if self._peek()[1] == text and self._peek()[0] == "op":
            self.pos += 1
            return True
        return False

    def _expect(self, text: str) -> None:
        if not self._accept(text):
            raise self._error(f"expected {text!r}")

    def parse(self) -> Node:
        node = self._expr()
        if self._peek()[0] != "end":
            raise self._error("unexpected token")
        return node

    def _expr(self) -> Node:
        node = self._term()
        while self._peek()[1] in ("+", "-") and self._peek()[0] == "op":
            op = self._peek()[1]
            self.pos += 1
            node = Binary(op, node, self._term())
        return node

    def _term(self) -> Node:
        node = self._unary()
        while self._peek()[1] in ("*", "/") and self._peek()[0] == "op":
            op = self._peek()[1]
            self.pos += 1
            node = Binary(op, node, self._unary())
        return node

    def _unary(self) -> Node:
        if self._accept("-"):
            return Negate(self._unary())
        if self._accept("+"):
            return self._unary()
        return self._power()

    def _power(self) -> Node:
        base = self._atom()
        if self._accept("^"):
            return Binary("^", base, self._unary())
        return base

    def _atom(self) -> Node:
        kind, text, _ = self._peek()
        if kind == "number":
            self.pos += 1
            return Number(float(text))
        if kind == "name":
            self.pos += 1
            if self._accept("("):
                if text not in _FUNCTIONS:
                    self.pos -= 2
                    raise self._error(f"unknown function {text!r}")
                args = [self._expr()]
                while self._accept(","):
                    args.append(self._expr())
                self._expect(")")
                arity, _ = _FUNCTIONS[text]
                if len(args) != arity:
                    raise InputError(
                        f"{text}() takes {arity} argument(s), got {len(args)} in {self.source!r}",
                        {"expression": self.source},
                    )
                return Call(text, args)
            if text == "t":
                return Variable()
            if text in self.params:
                return Number(float(self.params[text]))
            if text in _CONSTANTS:
                return Number(_CONSTANTS[text])
            self.pos -= 1
            raise self._error(f"unknown name {text!r}")
        if self._accept("("):
            node = self._expr()
            self._expect(")")
            return node
        raise self._error("expected a number, name or '('")


class Expression:
    """A parsed expression in the variable t."""

    def __init__(self, source: str, params: Optional[Dict[str, float]] = None):
        self.source = source
        self.params = dict(params or {})
        if not source or not source.strip():
            raise InputError("empty expression")
        self.tree = _Parser(source, self.params).parse()

    def __call__(self, t):
        if isinstance(t, xm.EdgeNumber):
            return self.tree.evaluate(t)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            arg = np.asarray(t, dtype=float) if isinstance(t, (list, tuple, np.ndarray)) else np.float64(t)
            value = self.tree.evaluate(arg)
        if isinstance(value, np.ndarray):
            return value
        if np.ndim(t) and np.ndim(value) == 0:
            return np.full(np.shape(t), float(value))
        return float(value)

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"


def parse(source: str, params: Optional[Dict[str, float]] = None) -> Expression:
    """Parse `source`; raises InputError with the offending position."""
    return Expression(source, params)


def parse_params(text: str) -> Dict[str, float]:
    """Parse 'nu=1, rho=2.5' into a parameter dict."""
    params: Dict[str, float] = {}
    if not text or not text.strip():
        return params
    for item in text.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise InputError(f"invalid parameter assignment: {item.strip()!r}")
        name, value = item.split("=", 1)
        name = name.strip()
        if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name):
            raise InputError(f"invalid parameter name: {name!r}")
        try:
            params[name] = float(value)
        except ValueError:
            raise InputError(f"invalid value for parameter {name!r}: {value.strip()!r}")
    return params
