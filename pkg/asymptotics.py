"""
Tail asymptotics for suprema of chi-square processes with trend.

For a homogeneous model the approximation is

    P(sup_E (chi^2(t) - g(t)) > u) ~ H_alpha * G_b * J * u^(k/2-1) * exp(-u/2) / q(u)

with J the integral of C^(1/alpha) exp(-g/2) over E. Heterogeneous models
replace G_b * J by (2 pi)^(-n/2) times a mixed time/angle integral.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, special

import extended as xm
from config import config
from errors import (ConfigurationError, DivergenceError, DomainError, InadmissibleError,
                    NonMonotoneError)
from logger import ProcessingLogger, get_logger
from model import (ChiSquareModel, Interval, LocalVariance, RegVarKernel, TrendFunction,
                   g_nu_expression, parse_trend_id, q_of_u)
from quadrature import IntegralResult, gauss_legendre, open_integral, require_finite


@dataclass
class TailApprox:
    """Factorized tail approximation, evaluable at any u."""
    pickands: float
    gb: float
    j_integral: float
    poly_exponent: float
    kernel: RegVarKernel
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def coefficient(self) -> float:
        return self.pickands * self.gb * self.j_integral

    def log_evaluate(self, u: float) -> float:
        if u <= 0.0:
            raise DomainError(f"u must be positive, got {u}")
        if self.coefficient == 0.0:
            return -math.inf
        return (math.log(self.pickands) + math.log(self.gb) + math.log(self.j_integral)
                + self.poly_exponent * math.log(u) - 0.5 * u - math.log(q_of_u(self.kernel, u)))

    def evaluate(self, u: float) -> float:
        u = float(u)
        if u <= 0.0:
            raise DomainError(f"u must be positive, got {u}")
        value = self.coefficient * u ** self.poly_exponent * math.exp(-0.5 * u) / q_of_u(self.kernel, u)
        if value == 0.0 or not math.isfinite(value):
            log_value = self.log_evaluate(u)
            return math.exp(log_value) if log_value > -745.0 else 0.0
        return value

    __call__ = evaluate

    def to_dict(self, u: Optional[float] = None) -> Dict[str, Any]:
        out = {
            "pickands": self.pickands,
            "gb": self.gb,
            "j_integral": self.j_integral,
            "poly_exponent": self.poly_exponent,
            "kernel": self.kernel.describe(),
            "meta": self.meta,
        }
        if u is not None:
            out["u"] = u
            out["value"] = self.evaluate(u)
            out["log_value"] = self.log_evaluate(u)
            out["q"] = q_of_u(self.kernel, u)
        return out


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

def constant_gb(b: Sequence[float], k: int) -> float:
    """G_b = 2^(1-k/2) / Gamma(k/2) * prod_{i>k} (1 - b_i^2)^(-1/2)."""
    b = [float(x) for x in b]
    if not 1 <= k <= len(b):
        raise ConfigurationError(f"k must lie in [1, {len(b)}], got {k}")
    if any(x != 1.0 for x in b[:k]):
        raise ConfigurationError(f"the first k={k} weights must equal 1, got {b[:k]}")
    tail = b[k:]
    if any(not 0.0 < x < 1.0 for x in tail):
        raise ConfigurationError(f"weights beyond k must lie in (0, 1), got {tail}")
    value = 2.0 ** (1.0 - 0.5 * k) / special.gamma(0.5 * k)
    for x in tail:
        value /= math.sqrt(1.0 - x * x)
    return value


def _pickands_key(alpha: float) -> float:
    return round(float(alpha), 6)


def pickands_info(alpha: float) -> Tuple[float, Optional[Tuple[float, float]], str]:
    """(value, confidence interval or None, source) for H_alpha."""
    alpha = float(alpha)
    if not 0.0 < alpha <= 2.0:
        raise DomainError(f"Pickands index must lie in (0, 2], got {alpha}")
    if alpha == 1.0:
        return 1.0, None, "exact"
    if alpha == 2.0:
        return 1.0 / math.sqrt(math.pi), None, "exact"
    entry = config.pickands_estimates.get(_pickands_key(alpha))
    if entry is None:
        raise ConfigurationError(
            f"no Pickands estimate configured for alpha={alpha:g}; run "
            f"'run.py pickands --alpha {alpha:g} --save <table.json>' and set CHISQ_PICKANDS_TABLE",
            {"alpha": alpha},
        )
    value, lo, hi = entry
    return float(value), (float(lo), float(hi)), "estimate"


def pickands_constant(alpha: float) -> float:
    return pickands_info(alpha)[0]


def _resolve_pickands(alpha: float, override: Optional[float]) -> Tuple[float, Dict[str, Any]]:
    if override is not None:
        if override <= 0.0:
            raise DomainError(f"Pickands constant must be positive, got {override}")
        return float(override), {"alpha": alpha, "source": "supplied"}
    value, ci, source = pickands_info(alpha)
    meta = {"alpha": alpha, "source": source}
    if ci is not None:
        meta["ci"] = list(ci)
    return value, meta


# ---------------------------------------------------------------------------
# J integral
# ---------------------------------------------------------------------------

def j_integrand(c: LocalVariance, alpha: float, g: TrendFunction) -> Callable:
    inv = 1.0 / alpha

    def integrand(t):
        return xm.power(c(t), inv) * xm.exp(-0.5 * g(t))
    return integrand


def j_integral_result(c: LocalVariance, alpha: float, g: TrendFunction,
                      interval: Interval) -> IntegralResult:
    return open_integral(j_integrand(c, alpha, g), interval.lo, interval.hi)


def j_integral(c: LocalVariance, alpha: float, g: TrendFunction, interval: Interval) -> float:
    """J over the interval; raises DivergenceError when it is not finite."""
    return require_finite(j_integral_result(c, alpha, g, interval), "J integral")


# ---------------------------------------------------------------------------
# admissibility gate
# ---------------------------------------------------------------------------

def _needs_report(model: ChiSquareModel) -> bool:
    """True when the interval reaches an endpoint where f diverges."""
    from admissibility import model_transform
    transform = model_transform(model)
    return any(model.interval.reaches(side) and transform.limit_status(side) != "finite"
               for side in (0, 1))


def _gate(model: ChiSquareModel, g: TrendFunction, report, check: bool, logger: ProcessingLogger):
    if not check or not _needs_report(model):
        return report
    if report is None:
        from admissibility import assess
        logger.log_step("Admissibility", f"{model.name} with trend {g.name}")
        report = assess(model, g, logger=logger)
    if report.overall != "applicable":
        raise InadmissibleError(
            f"tail approximation not applicable on {model.interval}: admissibility is {report.overall}",
            report=report,
        )
    return report


def _j_or_raise(integrand: Callable, interval: Interval, report) -> float:
    result = open_integral(integrand, interval.lo, interval.hi)
    try:
        return require_finite(result, "J integral")
    except DivergenceError as exc:
        exc.details["admissibility"] = report.to_dict() if report is not None else None
        raise


# ---------------------------------------------------------------------------
# homogeneous and stationary tails
# ---------------------------------------------------------------------------

def build_tail_approx(model: ChiSquareModel, g: TrendFunction, report=None, pickands: Optional[float] = None,
                      check: bool = True, logger: Optional[ProcessingLogger] = None) -> TailApprox:
    """TailApprox of a homogeneous model; gated by admissibility on singular open ends."""
    logger = get_logger(logger)
    if model.heterogeneous:
        raise ConfigurationError("heterogeneous model: use tail_approx_hetero")
    report = _gate(model, g, report, check, logger)
    value, pickands_meta = _resolve_pickands(model.alpha, pickands)
    gb = constant_gb(model.b, model.k)
    j = _j_or_raise(j_integrand(model.variance, model.alpha, g), model.interval, report)
    meta = {
        "model": model.describe(),
        "trend": g.name,
        "pickands": pickands_meta,
        "gb": {"b": list(model.b), "k": model.k},
        "j_integral": {"interval": str(model.interval)},
        "admissibility": report.overall if report is not None else "not required",
    }
    return TailApprox(value, gb, j, 0.5 * model.k - 1.0, model.kernel, meta)


def tail_approx(model: ChiSquareModel, g: TrendFunction, u: float, report=None,
                pickands: Optional[float] = None, check: bool = True,
                logger: Optional[ProcessingLogger] = None) -> Tuple[float, TailApprox]:
    """Value of the approximation at u together with its decomposition."""
    approx = build_tail_approx(model, g, report, pickands, check, logger)
    return approx.evaluate(u), approx


def stationary_tail(kernel: RegVarKernel, length: float, b: Sequence[float], u: float,
                    pickands: Optional[float] = None) -> float:
    """Tail of a stationary chi-square process on [0, length] with C = 1."""
    if length <= 0.0:
        raise DomainError(f"length must be positive, got {length}")
    ones = sum(1 for x in b if x == 1.0)
    value, _ = _resolve_pickands(kernel.alpha, pickands)
    approx = TailApprox(value, constant_gb(b, ones), float(length), 0.5 * ones - 1.0, kernel,
                        {"stationary": True})
    return approx.evaluate(u)


# ---------------------------------------------------------------------------
# heterogeneous tail
# ---------------------------------------------------------------------------

class AngularRule:
    """Integral over the angles of sum_i rho_i w_i(theta), raised to 1/alpha.

    The angles are theta_2 in [-pi, pi] and theta_3..theta_n in [-pi/2, pi/2],
    with density prod_{i>=3} cos(theta_i)^(i-2). The weights are
    w_1 = cos^2(theta_2) P, w_2 = sin^2(theta_2) P with P = prod_{j>=3} cos^2(theta_j),
    and w_i = sin^2(theta_i) prod_{j>i} cos^2(theta_j) for 3 <= i <= k.
    """

    def __init__(self, n: int, k: int, alpha: float, order: Optional[int] = None):
        self.n, self.k, self.alpha = n, k, float(alpha)
        self.order = order or config.gl_order
        self.method = "gauss-legendre"
        if n == 1:
            # S^0 is two points
            self.method = "points"
            return
        if n - 1 > config.max_quadrature_dim:
            self._setup_monte_carlo()
            return
        self.theta2, self.weight2 = gauss_legendre(self.order, -math.pi, math.pi)
        rest = n - 2
        if rest:
            nodes, weights = gauss_legendre(self.order, -0.5 * math.pi, 0.5 * math.pi)
            grids = np.meshgrid(*([nodes] * rest), indexing="ij")
            thetas = np.array([grid.ravel() for grid in grids])       # row j-3 holds theta_j
            wgrid = np.meshgrid(*([weights] * rest), indexing="ij")
            mu = np.prod([w.ravel() for w in wgrid], axis=0)
        else:
            thetas = np.zeros((0, 1))
            mu = np.ones(1)
        cos2 = np.cos(thetas) ** 2
        for j in range(3, n + 1):
            mu = mu * np.cos(thetas[j - 3]) ** (j - 2)
        self.mu = mu
        self.common = np.prod(cos2, axis=0) if rest else np.ones(1)
        extra = []
        for i in range(3, k + 1):
            tail = np.prod(cos2[i - 2:], axis=0) if i < n else np.ones_like(mu)
            extra.append(np.sin(thetas[i - 3]) ** 2 * tail)
        self.extra = np.array(extra) if extra else np.zeros((0, mu.size))
        c2, s2 = np.cos(self.theta2) ** 2, np.sin(self.theta2) ** 2
        self.cos2_theta2, self.sin2_theta2 = c2, s2
        # exact linear moments for alpha = 1
        base = float(np.dot(mu, self.common))
        self.moments = np.concatenate((
            [float(np.dot(self.weight2, c2)) * base, float(np.dot(self.weight2, s2)) * base],
            float(np.sum(self.weight2)) * (self.extra @ mu) if extra else [],
        ))[:k]

    def _setup_monte_carlo(self) -> None:
        self.method = "monte-carlo"
        rng = np.random.default_rng(0)
        size = config.angular_mc_samples
        theta2 = rng.uniform(-math.pi, math.pi, size)
        thetas = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, (self.n - 2, size))
        volume = 2.0 * math.pi * math.pi ** (self.n - 2)
        mu = np.full(size, volume / size)
        for j in range(3, self.n + 1):
            mu *= np.cos(thetas[j - 3]) ** (j - 2)
        cos2 = np.cos(thetas) ** 2
        common = np.prod(cos2, axis=0)
        columns = [np.cos(theta2) ** 2 * common, np.sin(theta2) ** 2 * common]
        for i in range(3, self.k + 1):
            tail = np.prod(cos2[i - 2:], axis=0) if i < self.n else np.ones(size)
            columns.append(np.sin(thetas[i - 3]) ** 2 * tail)
        self.mc_weights = np.array(columns[: self.k])
        self.mu = mu
        self.moments = self.mc_weights @ mu

    def __call__(self, rho: np.ndarray) -> float:
        rho = np.asarray(rho, dtype=float)
        inv = 1.0 / self.alpha
        if self.method == "points":
            return 2.0 * float(rho[0]) ** inv
        if self.alpha == 1.0:
            return float(np.dot(self.moments, rho))
        if self.method == "monte-carlo":
            return float(np.dot(self.mu, np.power(rho @ self.mc_weights, inv)))
        rest = self.extra.T @ rho[2:] if self.k > 2 else 0.0
        second = rho[1] if self.k > 1 else 0.0
        total = 0.0
        for w2, c2, s2 in zip(self.weight2, self.cos2_theta2, self.sin2_theta2):
            inner = (rho[0] * c2 + second * s2) * self.common + rest
            total += w2 * float(np.dot(self.mu, np.power(inner, inv)))
        return total


def hetero_integrand(model: ChiSquareModel, g: TrendFunction, rule: AngularRule) -> Callable:
    k, inv = model.k, 1.0 / model.alpha
    variances = [c.variance for c in model.components[:k]]

    def integrand(t):
        values = [v(t) for v in variances]
        logs = np.array([xm.log_abs(v) for v in values])
        top = int(np.argmax(logs))
        rho = np.exp(logs - logs[top])
        return xm.power(values[top], inv) * rule(rho) * xm.exp(-0.5 * g(t))
    return integrand


def build_tail_approx_hetero(model: ChiSquareModel, g: TrendFunction, report=None,
                             pickands: Optional[float] = None, check: bool = True,
                             order: Optional[int] = None,
                             logger: Optional[ProcessingLogger] = None) -> TailApprox:
    logger = get_logger(logger)
    if not model.heterogeneous:
        raise ConfigurationError("homogeneous model: use tail_approx")
    report = _gate(model, g, report, check, logger)
    value, pickands_meta = _resolve_pickands(model.alpha, pickands)
    rule = AngularRule(model.n, model.k, model.alpha, order)
    j = _j_or_raise(hetero_integrand(model, g, rule), model.interval, report)
    meta = {
        "model": model.describe(),
        "trend": g.name,
        "pickands": pickands_meta,
        "angular": {"method": rule.method, "order": rule.order},
        "admissibility": report.overall if report is not None else "not required",
    }
    return TailApprox(value, (2.0 * math.pi) ** (-0.5 * model.n), j, 0.5 * model.n - 1.0, model.kernel, meta)


def tail_approx_hetero(model: ChiSquareModel, g: TrendFunction, u: float, report=None,
                       pickands: Optional[float] = None, check: bool = True,
                       order: Optional[int] = None,
                       logger: Optional[ProcessingLogger] = None) -> Tuple[float, TailApprox]:
    approx = build_tail_approx_hetero(model, g, report, pickands, check, order, logger)
    return approx.evaluate(u), approx


def approximation_for(model: ChiSquareModel, g: TrendFunction, **kwargs) -> TailApprox:
    if model.heterogeneous:
        return build_tail_approx_hetero(model, g, **kwargs)
    return build_tail_approx(model, g, **kwargs)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

CLOSED_FORMS = ("bridge-gnu", "fbm", "mixed", "bessel")
CLOSED_FORM_ALIASES = {"cor": "bridge-gnu", "cor2": "fbm", "cor3": "mixed", "cor4": "bessel"}


def _trend(g: Union[TrendFunction, str, None]) -> TrendFunction:
    return g if isinstance(g, TrendFunction) else parse_trend_id(g)


def _closed_integral(integrand: Callable, interval: Interval, what: str) -> float:
    result = open_integral(integrand, interval.lo, interval.hi)
    if not result.finite:
        raise InadmissibleError(f"{what} is {result.status} toward side(s) {result.diverging_sides()}",
                                details={"parts": [p.to_dict() for p in result.parts]})
    return result.value


@lru_cache(maxsize=256)
def bridge_gnu_integral(nu: float, lo: float = 0.0, hi: float = 1.0) -> float:
    """Integral of exp(-g_nu(t)) / (t(1-t)) over (lo, hi)."""
    g_nu = g_nu_expression(nu)
    return _closed_integral(lambda t: xm.exp(-g_nu(t)) / (t * (1.0 - t)), Interval(lo, hi),
                            "the g_nu trend integral")


def closed_form(case: str, params: Dict[str, Any], u: float) -> float:
    """Literal closed-form tails of the catalog models.

    bridge-gnu: nu (> 3/4), optional interval
    fbm:        H in (0, 1), g, optional pickands
    mixed:      H in (1/2, 1), g
    bessel:     n >= 1, g

    The short ids in CLOSED_FORM_ALIASES name the same four cases.
    """
    u = float(u)
    if u <= 0.0:
        raise DomainError(f"u must be positive, got {u}")
    case = case.lower()
    case = CLOSED_FORM_ALIASES.get(case, case)
    interval = params.get("interval") or Interval(0.0, 1.0)
    if case == "bridge-gnu":
        nu = float(params["nu"])
        if nu <= 0.75:
            raise InadmissibleError(f"condition C fails for the bridge with trend 2 g_nu: need nu > 3/4, got {nu}")
        integral = bridge_gnu_integral(nu, interval.lo, interval.hi)
        return math.sqrt(u) * math.exp(-0.5 * u) / math.sqrt(2.0 * math.pi) * integral
    if case == "fbm":
        H = float(params["H"])
        if not 0.0 < H < 1.0:
            raise DomainError(f"Hurst index must lie in (0, 1), got {H}")
        g = _trend(params.get("g"))
        pick = params.get("pickands")
        pick = pickands_constant(2.0 * H) if pick is None else float(pick)
        integral = _closed_integral(lambda t: xm.exp(-0.5 * g(t)) / t, Interval(0.0, 1.0, False, True),
                                    "the fBm trend integral")
        e = (1.0 - H) / (2.0 * H)
        return pick * u ** e * math.exp(-0.5 * u) / (2.0 ** e * math.sqrt(math.pi)) * integral
    if case == "mixed":
        H = float(params["H"])
        if not 0.5 < H < 1.0:
            raise DomainError(f"mixed model needs H in (1/2, 1), got {H}")
        g = _trend(params.get("g"))
        integral = _closed_integral(lambda t: (2.0 - t) / (t * (1.0 - t)) * xm.exp(-0.5 * g(t)),
                                    Interval(0.0, 1.0), "the mixed-model trend integral")
        return u ** 1.5 * math.exp(-0.5 * u) / (3.0 * math.sqrt(2.0 * math.pi)) * integral
    if case == "bessel":
        n = int(params["n"])
        if n < 1:
            raise DomainError(f"Bessel dimension must be positive, got {n}")
        g = _trend(params.get("g"))
        interval = params.get("interval") or Interval(0.0, 1.0, False, True)
        integral = _closed_integral(lambda t: xm.exp(-0.5 * g(t)) / t, interval, "the Bessel trend integral")
        return (2.0 ** (1.0 - 0.5 * n) * u ** (0.5 * n) * math.exp(-0.5 * u) / special.gamma(0.5 * n)
                * integral)
    raise DomainError(f"unknown closed form {case!r}; expected one of {', '.join(CLOSED_FORMS)}")


# ---------------------------------------------------------------------------
# critical values
# ---------------------------------------------------------------------------

@dataclass
class CriticalValue:
    u: float
    p: float
    u_min: float

    def to_dict(self) -> Dict[str, float]:
        return {"u": self.u, "p": self.p, "u_min": self.u_min}


def critical_value(model: Optional[ChiSquareModel], g: Optional[TrendFunction], p: float,
                   u_min: Optional[float] = None, approx: Optional[TailApprox] = None,
                   **kwargs) -> CriticalValue:
    """The u >= u_min at which the approximation equals p.

    Pass a prebuilt `approx` to skip rebuilding it from the model.
    """
    if approx is None:
        approx = approximation_for(model, g, **kwargs)
    u_min = config.critical_u_min if u_min is None else float(u_min)
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    p_max = approx.evaluate(u_min)
    if p >= p_max:
        raise DomainError(f"p={p:.6g} is not below the approximation at u_min={u_min:g} ({p_max:.6g})")
    target = math.log(p)
    hi = 2.0 * u_min
    while approx.log_evaluate(hi) > target:
        hi *= 2.0
        if hi > 1e12:
            raise NonMonotoneError("approximation does not fall to p; no bracket found")
    grid = np.linspace(u_min, hi, 65)
    logs = np.array([approx.log_evaluate(x) for x in grid])
    if np.any(np.diff(logs) >= 0.0):
        raise NonMonotoneError(
            f"approximation is not decreasing on [{u_min:g}, {hi:g}]; increase u_min",
            {"u_min": u_min, "hi": hi},
        )
    root = optimize.brentq(lambda x: approx.log_evaluate(x) - target, u_min, hi,
                           xtol=config.bisection_tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    return CriticalValue(root, approx.evaluate(root), u_min)
