"""
Extended-range scalars for endpoint analysis.

Near an endpoint S of (0, 1) the functions of a model are evaluated at
t = S -/+ d with d = exp(-X), where X = ln(1/d) is an ordinary float that may
be as large as ~1e300. An `EdgeNumber` holds a value of the form

    p0 + p1*X + s*exp(a*X + b)

with the symbol X kept separate, so that products like C(t)*t cancel the
exp(X) growth exactly instead of overflowing or losing every digit.

The module-level functions `ln`, `exp`, `sqrt`, `power` and `loglog` dispatch
on the argument type: numpy arrays and floats go to numpy, edge numbers stay
symbolic. Model functions written with them work in both regimes.
"""

import math
from typing import Union

import numpy as np

# Exponent gap beyond which the smaller part of a mixed value is negligible.
_DOMINANCE = 40.0


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


class EdgeNumber:
    """Value p0 + p1*X + s*exp(a*X + b) at a fixed endpoint scale X."""

    __slots__ = ("X", "p0", "p1", "s", "a", "b")
    __array_ufunc__ = None

    def __init__(self, X: float, p0: float = 0.0, p1: float = 0.0,
                 s: int = 0, a: float = 0.0, b: float = 0.0):
        self.X = float(X)
        self.p0 = float(p0)
        self.p1 = float(p1)
        self.s = int(s)
        self.a = float(a) if s else 0.0
        self.b = float(b) if s else 0.0
        self._fold()

    # construction

    @classmethod
    def distance(cls, X: float) -> "EdgeNumber":
        """d = exp(-X)."""
        return cls(X, s=1, a=-1.0, b=0.0)

    @classmethod
    def near(cls, side: int, X: float) -> "EdgeNumber":
        """The point at distance exp(-X) from endpoint `side` inside (0, 1)."""
        if side == 0:
            return cls.distance(X)
        return cls(X, p0=1.0, s=-1, a=-1.0, b=0.0)

    def _fold(self) -> None:
        # an X-free exponential that fits a float joins the constant part
        if self.s and self.a == 0.0 and abs(self.b) < 700.0:
            self.p0 += self.s * math.exp(self.b)
            self.s, self.a, self.b = 0, 0.0, 0.0

    def _like(self, p0=0.0, p1=0.0, s=0, a=0.0, b=0.0) -> "EdgeNumber":
        return EdgeNumber(self.X, p0, p1, s, a, b)

    # inspection

    @property
    def exponent(self) -> float:
        """a*X + b, the log-magnitude of the exponential part."""
        return self.a * self.X + self.b if self.s else -math.inf

    @property
    def poly(self) -> float:
        return self.p0 + self.p1 * self.X if self.p1 else self.p0

    def _poly_log(self) -> float:
        """ln|p0 + p1*X| without forming p1*X when X is huge."""
        if self.p1 == 0.0:
            return math.log(abs(self.p0)) if self.p0 else -math.inf
        ratio = self.p0 / (self.p1 * self.X)
        inner = 1.0 + ratio
        if inner == 0.0:
            return -math.inf
        return math.log(abs(self.p1)) + math.log(self.X) + math.log(abs(inner))

    def is_pure_exp(self) -> bool:
        return self.s != 0 and self.p0 == 0.0 and self.p1 == 0.0

    def is_poly(self) -> bool:
        return self.s == 0

    def __float__(self) -> float:
        value = self.poly
        if self.s:
            e = self.exponent
            if e > 709.0:
                return math.copysign(math.inf, self.s) if not math.isinf(value) else value
            value += self.s * math.exp(e)
        return value

    def log_abs(self) -> float:
        """ln|value|, finite even where float(value) under- or overflows."""
        if self.is_pure_exp():
            return self.exponent
        pl = self._poly_log()
        if not self.s:
            return pl
        e = self.exponent
        if e > pl + _DOMINANCE:
            return e
        if e < pl - _DOMINANCE:
            return pl
        return math.log(abs(float(self))) if float(self) != 0.0 else -math.inf

    def sign(self) -> int:
        if self.is_pure_exp():
            return self.s
        if not self.s:
            return _sign(self.poly) if self.p1 == 0.0 else _sign(self.p1 * self.X + self.p0)
        e, pl = self.exponent, self._poly_log()
        if e > pl + _DOMINANCE:
            return self.s
        if e < pl - _DOMINANCE:
            return _sign(self.poly)
        return _sign(float(self))

    def __repr__(self) -> str:
        return (f"EdgeNumber(X={self.X:.6g}, p0={self.p0:.6g}, p1={self.p1:.6g}, "
                f"s={self.s}, a={self.a:.6g}, b={self.b:.6g})")

    # arithmetic

    def _coerce(self, other) -> "EdgeNumber":
        if isinstance(other, EdgeNumber):
            if other.X != self.X:
                raise ValueError("edge numbers at different scales cannot be combined")
            return other
        return self._like(p0=float(other))

    @staticmethod
    def _combine_exp(s1, a1, b1, s2, a2, b2, X):
        if s1 == 0:
            return s2, a2, b2
        if s2 == 0:
            return s1, a1, b1
        e1, e2 = a1 * X + b1, a2 * X + b2
        if e2 > e1:
            s1, a1, b1, e1, s2, a2, b2, e2 = s2, a2, b2, e2, s1, a1, b1, e1
        if a1 == a2:
            gap = b2 - b1
        else:
            gap = e2 - e1
        factor = 1.0 + (s1 * s2) * math.exp(gap) if gap > -745.0 else 1.0
        if factor == 0.0:
            return 0, 0.0, 0.0
        return s1 * _sign(factor), a1, b1 + math.log(abs(factor))

    def __add__(self, other) -> "EdgeNumber":
        o = self._coerce(other)
        s, a, b = self._combine_exp(self.s, self.a, self.b, o.s, o.a, o.b, self.X)
        return self._like(self.p0 + o.p0, self.p1 + o.p1, s, a, b)

    __radd__ = __add__

    def __neg__(self) -> "EdgeNumber":
        return self._like(-self.p0, -self.p1, -self.s, self.a, self.b)

    def __pos__(self) -> "EdgeNumber":
        return self

    def __sub__(self, other) -> "EdgeNumber":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "EdgeNumber":
        return self._coerce(other) + (-self)

    def _scale(self, c: float) -> "EdgeNumber":
        if c == 0.0:
            return self._like()
        s = self.s * _sign(c)
        return self._like(self.p0 * c, self.p1 * c, s, self.a, self.b + math.log(abs(c)) if s else 0.0)

    def _poly_as_exp(self) -> "EdgeNumber":
        """Re-express the polynomial part as an X-free exponential."""
        sgn = _sign(self.p1 * self.X + self.p0) if self.p1 else _sign(self.p0)
        if sgn == 0:
            return self._like()
        return self._like(s=sgn, a=0.0, b=self._poly_log())

    def __mul__(self, other) -> "EdgeNumber":
        if not isinstance(other, EdgeNumber):
            return self._scale(float(other))
        o = self._coerce(other)
        result = self._like()
        # polynomial x polynomial
        if self.p1 == 0.0 or o.p1 == 0.0:
            result = result + self._like(self.p0 * o.p0, self.p0 * o.p1 + self.p1 * o.p0)
        else:
            result = result + self._like(s=0) + (
                self._like(self.p0, self.p1)._poly_as_exp() * o._like(o.p0, o.p1)._poly_as_exp()
            )
        # polynomial x exponential
        if o.s and (self.p0 or self.p1):
            ps = self._like(self.p0, self.p1)._poly_as_exp()
            result = result + self._like(s=ps.s * o.s, a=o.a, b=o.b + ps.b) if ps.s else result
        if self.s and (o.p0 or o.p1):
            ps = o._like(o.p0, o.p1)._poly_as_exp()
            result = result + self._like(s=ps.s * self.s, a=self.a, b=self.b + ps.b) if ps.s else result
        # exponential x exponential
        if self.s and o.s:
            result = result + self._like(s=self.s * o.s, a=self.a + o.a, b=self.b + o.b)
        return result

    __rmul__ = __mul__

    def reciprocal(self) -> "EdgeNumber":
        if self.is_pure_exp():
            return self._like(s=self.s, a=-self.a, b=-self.b)
        if not self.s:
            if self.p1 == 0.0:
                if self.p0 == 0.0:
                    raise ZeroDivisionError("edge number division by zero")
                return self._like(1.0 / self.p0)
            pe = self._poly_as_exp()
            if pe.s == 0:
                raise ZeroDivisionError("edge number division by zero")
            return self._like(s=pe.s, a=0.0, b=-pe.b)
        e, pl = self.exponent, self._poly_log()
        if e > pl + _DOMINANCE:
            return self._like(s=self.s, a=-self.a, b=-self.b)
        if e < pl - _DOMINANCE:
            inv = self._like(self.p0, self.p1).reciprocal()
            # 1/(P + E) ~ 1/P - E/P^2
            sgn = _sign(self.poly)
            correction = self._like(s=-self.s, a=self.a, b=self.b - 2.0 * pl)
            return inv + correction if sgn else inv
        value = float(self)
        if value == 0.0:
            raise ZeroDivisionError("edge number division by zero")
        return self._like(1.0 / value)

    def __truediv__(self, other) -> "EdgeNumber":
        if not isinstance(other, EdgeNumber):
            return self._scale(1.0 / float(other))
        return self * other.reciprocal()

    def __rtruediv__(self, other) -> "EdgeNumber":
        return self.reciprocal() * float(other)

    def __pow__(self, q) -> "EdgeNumber":
        return power(self, q)

    def __rpow__(self, base) -> "EdgeNumber":
        return exp(self * math.log(float(base)))

    # elementary functions

    def ln(self) -> Union["EdgeNumber", float]:
        if self.sign() <= 0:
            return math.nan
        if self.is_pure_exp():
            return self._like(self.b, self.a)
        if not self.s:
            return self._like(self._poly_log())
        e, pl = self.exponent, self._poly_log()
        if e > pl + _DOMINANCE:
            return self._like(self.b, self.a)
        if e < pl - _DOMINANCE:
            # ln(P + E) = ln P + E/P
            ratio_log = e - pl
            correction = self.s * _sign(self.poly) * math.exp(ratio_log) if ratio_log > -745.0 else 0.0
            return self._like(pl + correction)
        return self._like(math.log(float(self)))

    def exp(self) -> Union["EdgeNumber", float]:
        if not self.s:
            if self.p1 == 0.0:
                if self.p0 > 700.0:
                    return self._like(s=1, a=0.0, b=self.p0)
                return self._like(math.exp(self.p0))
            return self._like(s=1, a=self.p1, b=self.p0)
        value = float(self)
        if value > 700.0:
            return self._like(s=1, a=0.0, b=value)
        return self._like(math.exp(value))


Scalar = Union[float, np.ndarray, EdgeNumber]


def ln(x):
    if isinstance(x, EdgeNumber):
        return x.ln()
    return np.log(x)


def exp(x):
    if isinstance(x, EdgeNumber):
        return x.exp()
    return np.exp(x)


def power(x, q):
    if isinstance(q, EdgeNumber):
        return exp(q * ln(x))
    if isinstance(x, EdgeNumber):
        q = float(q)
        if q == 0.0:
            return x._like(1.0)
        if q == 1.0:
            return x
        if q.is_integer() and x.sign() < 0:
            magnitude = exp((-x).ln() * q)
            return -magnitude if int(q) % 2 else magnitude
        return exp(x.ln() * q)
    return np.power(x, q)


def sqrt(x):
    if isinstance(x, EdgeNumber):
        return power(x, 0.5)
    return np.sqrt(x)


def loglog(x):
    """ln(ln(x))."""
    return ln(ln(x))


def to_float(x) -> float:
    return float(x)


def log_abs(x) -> float:
    """ln|x| for floats and edge numbers alike."""
    if isinstance(x, EdgeNumber):
        return x.log_abs()
    x = float(x)
    return math.log(abs(x)) if x != 0.0 else -math.inf


def maximum(x, y):
    """Pointwise max for floats, arrays and edge numbers."""
    if isinstance(x, EdgeNumber) or isinstance(y, EdgeNumber):
        sx = x.sign() if isinstance(x, EdgeNumber) else _sign(float(x))
        sy = y.sign() if isinstance(y, EdgeNumber) else _sign(float(y))
        if sx != sy:
            return x if sx > sy else y
        lx, ly = log_abs(x), log_abs(y)
        if sx >= 0:
            return x if lx >= ly else y
        return x if lx <= ly else y
    return np.maximum(x, y)
