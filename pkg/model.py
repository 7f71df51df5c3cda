"""
Model objects: kernels, local variances, trends, chi-square models and the
f-transform, plus the catalog of named models and trends.

Every callable in this module accepts floats, numpy arrays and edge numbers
(see `extended`), so the same model drives simulation grids, adaptive
quadrature and the iterated-log endpoint analysis.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special

import extended as xm
from config import config
from errors import ConfigurationError, DomainError, InputError, NotApplicableError, NumericalError
from expression import Expression, parse_params
from quadrature import (FINITE, INFINITE, UNKNOWN, EndpointIntegral, endpoint_integral,
                        gauss_legendre, near_integrand, quad)

POWER = "power"
POWER_LOG = "power-log"
CUSTOM = "custom"

# sampled positivity checks stay this far inside (0, 1)
_EDGE_MARGIN = 1e-6


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegVarKernel:
    """Structural modulus K, regularly varying at 0 with index alpha/2.

    power:      K(t) = scale * t^(alpha/2)
    power-log:  K(t) = scale * t^(alpha/2) * ln(1/t)^beta, defined for t < 1
    custom:     K(t) = func(t), nondecreasing near 0
    """
    alpha: float
    form: str = POWER
    beta: float = 0.0
    scale: float = 1.0
    func: Optional[Callable[[float], float]] = field(default=None, compare=False)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 2.0:
            raise DomainError(f"kernel index alpha must lie in (0, 2], got {self.alpha}")
        if self.form not in (POWER, POWER_LOG, CUSTOM):
            raise ConfigurationError(f"unknown kernel form {self.form!r}")
        if self.form == CUSTOM and self.func is None:
            raise ConfigurationError("custom kernel requires a callable")
        if self.scale <= 0.0:
            raise ConfigurationError(f"kernel scale must be positive, got {self.scale}")

    def __call__(self, t: float) -> float:
        return kernel_eval(self, t)

    def squared(self, t: np.ndarray) -> np.ndarray:
        """K(t)^2 on an array of nonnegative lags; NaN where K is undefined."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.form == POWER:
                return self.scale ** 2 * np.power(t, self.alpha)
            if self.form == POWER_LOG:
                inside = np.where((t > 0) & (t < 1), t, np.nan)
                value = self.scale ** 2 * np.power(inside, self.alpha) * np.power(-np.log(inside), 2 * self.beta)
                return np.where(t == 0, 0.0, value)
            return np.array([kernel_eval(self, float(x)) ** 2 for x in t.ravel()]).reshape(t.shape)

    def describe(self) -> Dict:
        return {"alpha": self.alpha, "form": self.form, "beta": self.beta, "scale": self.scale}


def kernel_eval(kernel: RegVarKernel, t: float) -> float:
    """K(t) for t >= 0, with K(0) = 0."""
    t = float(t)
    if t < 0.0 or math.isnan(t):
        raise DomainError(f"kernel argument must be nonnegative, got {t}")
    if t == 0.0:
        return 0.0
    if kernel.form == POWER:
        return kernel.scale * t ** (kernel.alpha / 2.0)
    if kernel.form == POWER_LOG:
        if t >= 1.0:
            raise DomainError(f"power-log kernel is defined on (0, 1), got {t}")
        return kernel.scale * t ** (kernel.alpha / 2.0) * math.log(1.0 / t) ** kernel.beta
    value = float(kernel.func(t))
    if not value > 0.0:
        raise ConfigurationError(f"custom kernel must be positive at t>0, got K({t})={value}")
    return kernel.scale * value


def q_of_u(kernel: RegVarKernel, u: float) -> float:
    """q(u), the generalized inverse of K at u^(-1/2)."""
    u = float(u)
    if not u > 0.0:
        raise DomainError(f"u must be positive, got {u}")
    y = u ** -0.5
    if kernel.form == POWER:
        return (y / kernel.scale) ** (2.0 / kernel.alpha)
    return _generalized_inverse(kernel, y)


def _generalized_inverse(kernel: RegVarKernel, y: float) -> float:
    """inf{t : K(t) >= y} by doubling bracket and bisection."""
    cap = 1.0 if kernel.form == POWER_LOG else math.inf

    def k(t: float) -> float:
        return kernel_eval(kernel, t)

    hi = min((y / kernel.scale) ** (2.0 / kernel.alpha), 0.5 * cap)
    for _ in range(2000):
        if k(hi) >= y:
            break
        hi = 0.5 * (hi + cap) if math.isfinite(cap) else 2.0 * hi
    else:
        raise ConfigurationError(f"kernel never reaches {y:.6g}; not invertible near 0")
    lo = hi
    for _ in range(2000):
        lo *= 0.5
        if lo == 0.0:
            raise ConfigurationError("kernel does not decrease to 0; not invertible near 0")
        if k(lo) < y:
            break
    else:
        raise ConfigurationError("could not bracket the kernel inverse")
    while hi - lo > config.inverse_rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if k(mid) >= y:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# local variance and trend
# ---------------------------------------------------------------------------

def _vectorized(func: Callable) -> Callable:
    """Wrap a scalar callable so it maps numpy arrays elementwise."""
    def call(t):
        if isinstance(t, np.ndarray):
            try:
                value = func(t)
                if np.shape(value) == t.shape:
                    return np.asarray(value, dtype=float)
                if np.ndim(value) == 0:
                    return np.full(t.shape, float(value))
            except (TypeError, ValueError):
                pass
            return np.array([float(func(float(x))) for x in t.ravel()]).reshape(t.shape)
        return func(t)
    return call


@dataclass(frozen=True)
class LocalVariance:
    """C(t) > 0 on (0, 1), with the integrability of C^(1/alpha) at each end."""
    c: Callable = field(compare=False)
    name: str = "custom"
    integrable_at_0: str = UNKNOWN
    integrable_at_1: str = UNKNOWN

    def __call__(self, t):
        return self.c(t)

    def array(self, t: np.ndarray) -> np.ndarray:
        return _vectorized(self.c)(np.asarray(t, dtype=float))

    def check_positive(self, lo: float = _EDGE_MARGIN, hi: float = 1.0 - _EDGE_MARGIN, points: int = 257) -> None:
        """Sampled positivity and finiteness check on [lo, hi] inside (0, 1)."""
        ts = np.linspace(lo, hi, points)
        with np.errstate(all="ignore"):
            values = self.array(ts)
        bad = ~(np.isfinite(values) & (values > 0))
        if bad.any():
            t_bad = float(ts[np.argmax(bad)])
            raise DomainError(f"local variance {self.name} is not positive and finite at t={t_bad:.6g}")


@dataclass(frozen=True)
class TrendFunction:
    """Nonnegative trend g(t) with endpoint monotonicity metadata."""
    g: Callable = field(compare=False)
    name: str = "custom"
    monotone_near_0: bool = False
    monotone_near_1: bool = False

    def __call__(self, t):
        return self.g(t)

    def array(self, t: np.ndarray) -> np.ndarray:
        return _vectorized(self.g)(np.asarray(t, dtype=float))

    def check_nonnegative(self, lo: float = _EDGE_MARGIN, hi: float = 1.0 - _EDGE_MARGIN, points: int = 257) -> None:
        """Sampled check that g is finite and >= 0 on [lo, hi]."""
        ts = np.linspace(lo, hi, points)
        with np.errstate(all="ignore"):
            values = self.array(ts)
        bad = ~(np.isfinite(values) & (values >= 0))
        if bad.any():
            t_bad = float(ts[np.argmax(bad)])
            raise DomainError(f"trend {self.name} is negative or not finite at t={t_bad:.6g}")

    def shifted(self, c: float) -> "TrendFunction":
        base = self.g
        return TrendFunction(lambda t: base(t) + c, f"{self.name}+{c:g}",
                             self.monotone_near_0, self.monotone_near_1)


# ---------------------------------------------------------------------------
# chi-square model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Component:
    """One Gaussian component: kernel, local variance, and how to simulate it."""
    kernel: RegVarKernel
    variance: LocalVariance
    process: str = "custom"
    params: Dict[str, float] = field(default_factory=dict, compare=False)
    correlation: Optional[Callable] = field(default=None, compare=False)

    @property
    def alpha(self) -> float:
        return self.kernel.alpha


@dataclass(frozen=True)
class Interval:
    lo: float = 0.0
    hi: float = 1.0
    closed_lo: bool = False
    closed_hi: bool = False

    def __post_init__(self):
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise DomainError(f"interval must satisfy 0 <= lo < hi <= 1, got ({self.lo}, {self.hi})")

    def reaches(self, side: int) -> bool:
        return self.lo == 0.0 if side == 0 else self.hi == 1.0

    def truncated(self, eps: float, variance: Optional[LocalVariance] = None) -> "Interval":
        """Compact interval for simulation: open or singular ends pulled in by eps."""
        lo, hi = self.lo, self.hi
        singular_0 = variance is None or variance.integrable_at_0 != FINITE
        singular_1 = variance is None or variance.integrable_at_1 != FINITE
        if lo == 0.0 and (not self.closed_lo or singular_0):
            lo = eps
        if hi == 1.0 and (not self.closed_hi or singular_1):
            hi = 1.0 - eps
        return Interval(lo, hi, True, True)

    def __str__(self) -> str:
        return f"{'[' if self.closed_lo else '('}{self.lo:g}, {self.hi:g}{']' if self.closed_hi else ')'}"


@dataclass(frozen=True)
class ChiSquareModel:
    """Weighted chi-square process sum_i b_i^2 X_i^2(t) on an interval.

    Homogeneous models repeat one component n times. Heterogeneous models
    carry one component per coordinate, all weights 1, the first k sharing
    the leading index alpha and the rest rougher-free (larger alpha).
    """
    b: Tuple[float, ...]
    components: Tuple[Component, ...]
    interval: Interval = Interval()
    name: str = "custom"
    heterogeneous: bool = False
    k: Optional[int] = None

    def __post_init__(self):
        b = tuple(float(x) for x in self.b)
        object.__setattr__(self, "b", b)
        if not b:
            raise ConfigurationError("weight vector must be nonempty")
        if len(self.components) != len(b):
            raise ConfigurationError(f"{len(b)} weights but {len(self.components)} components")
        if b[0] != 1.0:
            raise ConfigurationError(f"leading weight must be 1, got {b[0]}")
        if any(x <= 0.0 for x in b) or any(x < y for x, y in zip(b, b[1:])):
            raise ConfigurationError(f"weights must be positive and nonincreasing, got {list(b)}")
        ones = sum(1 for x in b if x == 1.0)
        if not self.heterogeneous:
            first = self.components[0]
            if any(c.kernel != first.kernel or c.variance is not first.variance and c.variance != first.variance
                   for c in self.components):
                raise ConfigurationError("homogeneous model needs identical components")
            if self.k is not None and self.k != ones:
                raise ConfigurationError(f"k={self.k} does not match the {ones} unit weights")
            object.__setattr__(self, "k", ones)
            return
        if ones != len(b):
            raise ConfigurationError("heterogeneous models require all weights equal to 1")
        k = self.k if self.k is not None else len(b)
        if not 1 <= k <= len(b):
            raise ConfigurationError(f"k must lie in [1, {len(b)}], got {k}")
        object.__setattr__(self, "k", k)
        alphas = [c.alpha for c in self.components]
        lead = alphas[0]
        if any(a != lead for a in alphas[:k]):
            raise ConfigurationError(f"components 1..{k} must share the leading index, got {alphas[:k]}")
        rest = alphas[k:]
        if rest and not (lead < rest[0] and all(x <= y for x, y in zip(rest, rest[1:])) and rest[-1] < 2.0):
            raise ConfigurationError(
                f"trailing indices must satisfy {lead} < a_(k+1) <= ... <= a_n < 2, got {rest}")

    @property
    def n(self) -> int:
        return len(self.b)

    @property
    def kernel(self) -> RegVarKernel:
        return self.components[0].kernel

    @property
    def variance(self) -> LocalVariance:
        return self.components[0].variance

    @property
    def alpha(self) -> float:
        return self.kernel.alpha

    @property
    def key(self) -> str:
        """Identity of everything the checks and grids depend on, not just the name."""
        parts = [self.name, "b=" + ",".join(repr(x) for x in self.b), f"k={self.k}", str(self.interval)]
        for c in (self.components if self.heterogeneous else self.components[:1]):
            kernel = c.kernel
            params = ",".join(f"{name}={value!r}" for name, value in sorted(c.params.items()))
            # custom kernels are told apart by their callable; caches hold the model, so the id stays unique
            func = f",func={id(kernel.func):x}" if kernel.func is not None else ""
            parts.append(f"{c.process}:{c.variance.name}[{params}]:{kernel.form},alpha={kernel.alpha!r},"
                         f"beta={kernel.beta!r},scale={kernel.scale!r}{func}")
        return "|".join(parts)

    def with_interval(self, interval: Interval) -> "ChiSquareModel":
        return ChiSquareModel(self.b, self.components, interval, self.name, self.heterogeneous, self.k)

    def describe(self) -> Dict:
        return {
            "name": self.name,
            "n": self.n,
            "k": self.k,
            "b": list(self.b),
            "heterogeneous": self.heterogeneous,
            "interval": str(self.interval),
            "components": [{"process": c.process, "variance": c.variance.name, "params": dict(c.params),
                            "kernel": c.kernel.describe()} for c in self.components],
        }


# ---------------------------------------------------------------------------
# f-transform
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_PIECE = 0.25


class FTransform:
    """f(t) = integral from 1/2 to t of C(s)^(1/alpha) ds."""

    def __init__(self, variance: LocalVariance, alpha: float):
        if not 0.0 < alpha <= 2.0:
            raise DomainError(f"alpha must lie in (0, 2], got {alpha}")
        self.variance = variance
        self.alpha = float(alpha)
        self._limits: Dict[int, EndpointIntegral] = {}

    def density(self, t):
        return xm.power(self.variance(t), 1.0 / self.alpha)

    def _density_logit(self, y: np.ndarray) -> np.ndarray:
        """Density times dt/dy in the logit coordinate y = ln(t/(1-t))."""
        t = special.expit(y)
        with np.errstate(all="ignore"):
            return np.power(self.variance.array(t), 1.0 / self.alpha) * t * special.expit(-y)

    def __call__(self, t: float) -> float:
        t = float(t)
        if t == 0.5:
            return 0.0
        side = 0 if t < 0.5 else 1
        x = -math.log(t if side == 0 else 1.0 - t)
        value = quad(near_integrand(self.density, side), math.log(2.0), x, rel_tol=config.f_rel_tol)
        return -value if side == 0 else value

    def limit(self, side: int) -> EndpointIntegral:
        """Endpoint integral of C^(1/alpha) from 1/2 to `side` (unsigned)."""
        if side not in self._limits:
            self._limits[side] = endpoint_integral(self.density, side, 0.5)
        return self._limits[side]

    def limit_value(self, side: int) -> float:
        """f(0+) or f(1-): signed, +-inf when the integral diverges."""
        part = self.limit(side)
        if part.status == UNKNOWN:
            raise NumericalError(f"could not decide whether f is finite at {side}",
                                 {"evidence": part.to_dict()})
        value = part.value if part.status == FINITE else math.inf
        return -value if side == 0 else value

    def limit_status(self, side: int) -> str:
        flag = self.variance.integrable_at_0 if side == 0 else self.variance.integrable_at_1
        if flag in (FINITE, INFINITE):
            return flag
        return self.limit(side).status

    def inverse(self, value: float) -> float:
        """t with f(t) = value, by root-finding in the log-distance coordinate."""
        value = float(value)
        if value == 0.0:
            return 0.5
        side = 0 if value < 0.0 else 1
        target = abs(value)
        h = near_integrand(self.density, side)
        x_max = 744.0 if side == 0 else 36.0
        x0 = math.log(2.0)

        def excess(x: float) -> float:
            return quad(h, x0, x, rel_tol=config.f_rel_tol) - target

        hi = x0 + 1.0
        while excess(hi) < 0.0:
            if hi >= x_max:
                raise DomainError(f"f does not reach {value:.6g} within floating range toward {side}")
            hi = min(2.0 * hi, x_max)
        root = optimize.brentq(excess, x0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
        d = math.exp(-root)
        return d if side == 0 else 1.0 - d

    def on_points(self, ts: Sequence[float]) -> np.ndarray:
        """f at many points, by Gauss–Legendre pieces accumulated from t=1/2."""
        ts = np.asarray(ts, dtype=float)
        if ts.size == 0:
            return ts.copy()
        if np.any((ts <= 0.0) | (ts >= 1.0)):
            raise DomainError("f is evaluated on points inside (0, 1) only")
        ys = special.logit(ts)
        order = np.argsort(ys)
        ys_sorted = ys[order]
        anchor = int(np.searchsorted(ys_sorted, 0.0))
        values = np.empty_like(ys_sorted)
        values[anchor:] = self.cumulative_logit(np.concatenate(([0.0], ys_sorted[anchor:])))[1:]
        if anchor:
            left = np.concatenate(([0.0], ys_sorted[:anchor][::-1]))
            values[:anchor] = self.cumulative_logit(left)[1:][::-1]
        out = np.empty_like(values)
        out[order] = values
        return out

    def cumulative_logit(self, ys: np.ndarray) -> np.ndarray:
        """Running integral in the logit coordinate along the monotone sequence ys."""
        if ys.size < 2:
            return np.zeros_like(ys)
        counts = np.maximum(np.ceil(np.abs(np.diff(ys)) / _PIECE).astype(int), 1)
        starts = np.repeat(ys[:-1], counts)
        steps = np.repeat(np.diff(ys) / counts, counts)
        offsets = np.concatenate([np.arange(c) for c in counts])
        a = starts + offsets * steps
        half = 0.5 * steps
        nodes = (a + half)[:, None] + half[:, None] * _GL_NODES[None, :]
        pieces = (self._density_logit(nodes) * _GL_WEIGHTS[None, :]).sum(axis=1) * half
        gaps = np.add.reduceat(pieces, np.concatenate(([0], np.cumsum(counts)[:-1])))
        return np.concatenate(([0.0], np.cumsum(gaps)))

    def advance(self, t: float, step: float) -> float:
        """The point s > t with f(s) - f(t) = step."""
        if step <= 0.0:
            raise DomainError(f"step must be positive, got {step}")
        ya = float(special.logit(t))
        rate = float(self._density_logit(np.array([ya]))[0])
        yb = ya + step / rate
        for _ in range(100):
            nodes, weights = gauss_legendre(16, ya, yb)
            mass = float(np.dot(self._density_logit(nodes), weights))
            slope = float(self._density_logit(np.array([yb]))[0])
            if not (math.isfinite(mass) and slope > 0.0):
                raise NumericalError(f"f-transform is not finite on [{t}, {special.expit(yb)}]")
            delta = (mass - step) / slope
            y_new = max(yb - delta, 0.5 * (ya + yb))
            if abs(y_new - yb) <= 1e-13 * max(1.0, abs(yb)):
                yb = y_new
                break
            yb = y_new
        return float(special.expit(yb))


def f_transform(c: LocalVariance, alpha: float, t: float) -> float:
    """f(t); at t = 0 or 1 the signed endpoint limit (possibly infinite)."""
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    transform = FTransform(c, alpha)
    if t in (0.0, 1.0):
        return transform.limit_value(int(t))
    return transform(t)


def partition_points(c: LocalVariance, alpha: float, d: float, side: int, j: int) -> float:
    """The j-th partition point toward `side`: f^{-1}(-jd) at 0, f^{-1}(jd) at 1."""
    if d <= 0.0:
        raise DomainError(f"partition width must be positive, got {d}")
    if j < 0:
        raise DomainError(f"partition index must be nonnegative, got {j}")
    transform = FTransform(c, alpha)
    if transform.limit_status(side) != INFINITE:
        raise NotApplicableError(f"f has a finite limit at {side}; partitions do not cover the endpoint")
    if j == 0:
        return 0.5
    return transform.inverse(-j * d if side == 0 else j * d)


# ---------------------------------------------------------------------------
# correlations of the catalog processes (arrays broadcast)
# ---------------------------------------------------------------------------

def bridge_correlation(s, t):
    lo, hi = np.minimum(s, t), np.maximum(s, t)
    with np.errstate(all="ignore"):
        return np.sqrt(lo * (1.0 - hi) / (hi * (1.0 - lo)))


def bm_correlation(s, t):
    lo, hi = np.minimum(s, t), np.maximum(s, t)
    with np.errstate(all="ignore"):
        return np.sqrt(lo / hi)


def fbm_correlation(H: float) -> Callable:
    def r(s, t):
        with np.errstate(all="ignore"):
            return (np.power(s, 2 * H) + np.power(t, 2 * H) - np.power(np.abs(t - s), 2 * H)) / (
                2.0 * np.power(s, H) * np.power(t, H))
    return r


def ou_correlation(lam: float) -> Callable:
    def r(s, t):
        return np.exp(-lam * np.abs(np.asarray(t) - np.asarray(s)))
    return r


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

def bridge_component() -> Component:
    variance = LocalVariance(Expression("1/(2*t*(1-t))"), "bridge", INFINITE, INFINITE)
    return Component(RegVarKernel(1.0), variance, "bridge", {}, bridge_correlation)


def bm_component() -> Component:
    variance = LocalVariance(Expression("1/(2*t)"), "bm", INFINITE, FINITE)
    return Component(RegVarKernel(1.0), variance, "bm", {}, bm_correlation)


def fbm_component(H: float) -> Component:
    if not 0.0 < H < 1.0:
        raise DomainError(f"Hurst index must lie in (0, 1), got {H}")
    variance = LocalVariance(Expression("1/(2*t^(2*H))", {"H": H}), f"fbm:{H:g}", INFINITE, FINITE)
    return Component(RegVarKernel(2.0 * H), variance, "fbm", {"H": H}, fbm_correlation(H))


def ou_component(lam: float) -> Component:
    if lam <= 0.0:
        raise DomainError(f"OU rate must be positive, got {lam}")
    variance = LocalVariance(Expression("1"), "unit", FINITE, FINITE)
    return Component(RegVarKernel(1.0, scale=math.sqrt(lam)), variance, "ou", {"lambda": lam},
                     ou_correlation(lam))


def custom_component(c_source: str, alpha: float, params: Optional[Dict[str, float]] = None,
                     kernel_scale: float = 1.0, beta: float = 0.0,
                     interval: Optional[Interval] = None) -> Component:
    """Component with C given by an expression, checked positive on a grid inside `interval`."""
    variance = LocalVariance(Expression(c_source, params), c_source)
    interval = interval or Interval()
    variance.check_positive(max(interval.lo, _EDGE_MARGIN), min(interval.hi, 1.0 - _EDGE_MARGIN))
    form = POWER_LOG if beta else POWER
    return Component(RegVarKernel(alpha, form, beta, kernel_scale), variance, "custom", dict(params or {}))


def homogeneous(component: Component, b: Sequence[float], interval: Interval, name: str) -> ChiSquareModel:
    return ChiSquareModel(tuple(b), tuple(component for _ in b), interval, name)


def mixed_model(H: float) -> ChiSquareModel:
    """Bridge, Brownian motion and fBm(H) components with k = 2 (H in (1/2, 1))."""
    if not 0.5 < H < 1.0:
        raise DomainError(f"mixed bridge/bm/fbm model needs H in (1/2, 1), got {H}")
    return ChiSquareModel((1.0, 1.0, 1.0), (bridge_component(), bm_component(), fbm_component(H)),
                          Interval(0.0, 1.0), f"mixed:{H:g}", heterogeneous=True, k=2)


def _split_id(model_id: str) -> Tuple[str, Optional[float]]:
    name, _, arg = model_id.partition(":")
    if not arg:
        return name.strip().lower(), None
    try:
        return name.strip().lower(), float(arg)
    except ValueError:
        raise InputError(f"invalid parameter in model id {model_id!r}")


def parse_model_id(model_id: str, b: Optional[Sequence[float]] = None,
                   interval: Optional[Interval] = None) -> ChiSquareModel:
    """Build a catalog model: bridge, bm, bessel:n, fbm:H, ou:lambda, mixed:H."""
    name, arg = _split_id(model_id)
    if name == "mixed":
        model = mixed_model(0.75 if arg is None else arg)
        return model.with_interval(interval) if interval else model
    if name == "bessel":
        n = 1 if arg is None else int(arg)
        if n < 1 or arg != n and arg is not None:
            raise InputError(f"bessel order must be a positive integer, got {arg}")
        weights = tuple(b) if b else (1.0,) * n
        if len(weights) != n:
            raise InputError(f"bessel:{n} needs {n} weights, got {len(weights)}")
        return homogeneous(bm_component(), weights, interval or Interval(0.0, 1.0, False, True), f"bessel:{n}")
    weights = tuple(b) if b else (1.0,)
    if name == "bridge":
        return homogeneous(bridge_component(), weights, interval or Interval(0.0, 1.0), "bridge")
    if name == "bm":
        return homogeneous(bm_component(), weights, interval or Interval(0.0, 1.0, False, True), "bm")
    if name == "fbm":
        if arg is None:
            raise InputError("fbm model needs a Hurst index, e.g. fbm:0.3")
        return homogeneous(fbm_component(arg), weights, interval or Interval(0.0, 1.0, False, True),
                           f"fbm:{arg:g}")
    if name == "ou":
        lam = 1.0 if arg is None else arg
        return homogeneous(ou_component(lam), weights, interval or Interval(0.0, 1.0, True, True), f"ou:{lam:g}")
    raise InputError(f"unknown model id {model_id!r} (known: bridge, bm, bessel:n, fbm:H, ou:lambda, mixed:H)")


# g_nu on the chi-square scale: the limit statistic compares the chi-square
# process with 2*g_nu, where c(t) = ln(1 - ln(4t(1-t))).
_G_NU = "ln(1-ln(4*t*(1-t))) + nu*ln(1+ln(1-ln(4*t*(1-t)))^2)"
_G_RHO = "2*loglog(e^2/t) + 2*rho*ln(loglog(e^3/t))"
_G_BESSEL = "4*loglog(e^2/t)"


def g_nu_expression(nu: float) -> Expression:
    return Expression(_G_NU, {"nu": nu})


def parse_trend_id(trend_id: Optional[str], params: Optional[Dict[str, float]] = None) -> TrendFunction:
    """zero, const:c, gnu:nu, grho:rho, bessel, expr:<expression>."""
    if trend_id is None or trend_id.strip() in ("", "zero", "0"):
        return TrendFunction(Expression("0"), "zero")
    name, _, arg = trend_id.strip().partition(":")
    name = name.lower()
    if name == "expr":
        trend = TrendFunction(Expression(arg, params), arg)
        trend.check_nonnegative()
        return trend
    if name == "bessel":
        return TrendFunction(Expression(_G_BESSEL), "bessel", True, False)
    try:
        value = float(arg) if arg else None
    except ValueError:
        raise InputError(f"invalid parameter in trend id {trend_id!r}")
    if name == "const":
        if value is None or value < 0.0:
            raise InputError(f"constant trend needs a nonnegative value, got {arg!r}")
        return TrendFunction(Expression(repr(value)), f"const:{value:g}")
    if name == "gnu":
        nu = 1.0 if value is None else value
        return TrendFunction(Expression(f"2*({_G_NU})", {"nu": nu}), f"gnu:{nu:g}", True, True)
    if name == "grho":
        rho = 2.0 if value is None else value
        return TrendFunction(Expression(_G_RHO, {"rho": rho}), f"grho:{rho:g}", True, False)
    raise InputError(f"unknown trend id {trend_id!r} (known: zero, const:c, gnu:nu, grho:rho, bessel, expr:...)")


def build_model(model_id: str = "custom", b: Optional[Sequence[float]] = None,
                interval: Optional[Interval] = None, c_source: Optional[str] = None,
                alpha: Optional[float] = None, params: Optional[str] = None,
                kernel_scale: float = 1.0, beta: float = 0.0) -> ChiSquareModel:
    """Catalog lookup, or a custom homogeneous model from a C expression."""
    if model_id and model_id != "custom":
        return parse_model_id(model_id, b, interval)
    if not c_source or alpha is None:
        raise InputError("custom models need a local variance expression and alpha")
    component = custom_component(c_source, alpha, parse_params(params or ""), kernel_scale, beta, interval)
    return homogeneous(component, tuple(b) if b else (1.0,), interval or Interval(), f"custom:{c_source}")
