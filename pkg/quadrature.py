"""
Adaptive quadrature on (0, 1) with singular endpoints.

Three regimes:
- interior pieces: scipy's adaptive Gauss–Kronrod `quad`;
- pieces ending close to 0 or 1: the substitution d = exp(-x) on the
  distance d to the endpoint, which turns 1/d-type singularities into
  bounded integrands;
- pieces reaching the endpoint itself: the iterated-log clock
  d = exp(-e^z), evaluated on extended-range scalars, integrated window by
  window out to z_max and closed by a fitted power-law tail in z. The
  fitted exponent decides finiteness.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import integrate

import extended as xm
from config import config
from errors import DivergenceError, NumericalError

FINITE = "finite"
INFINITE = "infinite"
UNKNOWN = "unknown"

_WINDOW_EDGES = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0,
                 32.0, 48.0, 64.0, 96.0, 128.0, 192.0, 256.0, 384.0, 512.0)


@dataclass
class EndpointIntegral:
    """One-sided integral from an anchor point to endpoint `side`."""
    side: int
    status: str
    value: float
    tail_exponent: Optional[float] = None
    reach: str = "extended"
    windows: List[float] = field(default_factory=list)
    evidence: Dict[str, float] = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return self.status == FINITE

    def to_dict(self) -> Dict:
        return {
            "side": self.side,
            "status": self.status,
            "value": self.value,
            "tail_exponent": self.tail_exponent,
            "reach": self.reach,
            "windows": list(self.windows),
            "evidence": dict(self.evidence),
        }


@dataclass
class IntegralResult:
    value: float
    status: str
    parts: List[EndpointIntegral] = field(default_factory=list)

    @property
    def finite(self) -> bool:
        return self.status == FINITE

    def diverging_sides(self) -> List[int]:
        return [p.side for p in self.parts if p.status != FINITE]


def quad(func: Callable[[float], float], a: float, b: float,
         rel_tol: Optional[float] = None, abs_tol: Optional[float] = None) -> float:
    """scipy quad with the configured tolerances; raises NumericalError on NaN."""
    if a == b:
        return 0.0
    rel_tol = config.quad_rel_tol if rel_tol is None else rel_tol
    abs_tol = config.quad_abs_tol if abs_tol is None else abs_tol
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        with np.errstate(all="ignore"):
            value, _ = integrate.quad(func, a, b, epsabs=abs_tol, epsrel=rel_tol,
                                      limit=config.quad_limit)
    if math.isnan(value):
        raise NumericalError(f"quadrature produced NaN on [{a}, {b}]")
    return float(value)


def near_integrand(func: Callable, side: int) -> Callable[[float], float]:
    """x -> func(t) * d for t at distance d = exp(-x) from `side`.

    Side 0 is exact in floats; side 1 uses edge numbers when `func` accepts
    them so that 1 - t keeps its digits.
    """
    if side == 0:
        def h0(x: float) -> float:
            d = math.exp(-x)
            return float(func(d)) * d
        return h0

    state = {"extended": True}

    def h1(x: float) -> float:
        if state["extended"]:
            try:
                value = func(xm.EdgeNumber.near(1, x)) * xm.EdgeNumber.distance(x)
                return float(value)
            except (TypeError, AttributeError, ValueError):
                state["extended"] = False
        d = math.exp(-x)
        return float(func(1.0 - d)) * d
    return h1


def integrate_interval(func: Callable, lo: float, hi: float,
                       rel_tol: Optional[float] = None) -> float:
    """Integral of func over a compact [lo, hi] inside (0, 1).

    The interval is split at its midpoint; a half whose far end is within a
    factor 1e-3 of an endpoint is integrated in log-distance coordinates.
    """
    if not 0.0 < lo <= hi < 1.0:
        raise ValueError(f"compact interval inside (0, 1) required, got [{lo}, {hi}]")
    if lo == hi:
        return 0.0
    mid = 0.5 * (lo + hi)
    total = 0.0
    # left half
    if lo < 1e-3 * mid:
        total += quad(near_integrand(func, 0), -math.log(mid), -math.log(lo), rel_tol)
    else:
        total += quad(lambda t: float(func(t)), lo, mid, rel_tol)
    # right half
    if 1.0 - hi < 1e-3 * (1.0 - mid):
        total += quad(near_integrand(func, 1), -math.log(1.0 - hi), -math.log(1.0 - mid), rel_tol)
    else:
        total += quad(lambda t: float(func(t)), mid, hi, rel_tol)
    return total


def _clock_value(func: Callable, side: int, z: float, extended: bool):
    """func(t) * dt/dz at z; returns an edge number or a float."""
    X = math.exp(z)
    if extended:
        return func(xm.EdgeNumber.near(side, X)) * xm.EdgeNumber(X, s=1, a=-1.0, b=z)
    d = math.exp(-X)
    t = d if side == 0 else 1.0 - d
    if t in (0.0, 1.0):
        return math.nan
    return float(func(t)) * d * X


def _supports_extended(func: Callable, side: int) -> bool:
    try:
        value = func(xm.EdgeNumber.near(side, 2.0))
        float(value)
        return True
    except (TypeError, AttributeError, ValueError, ZeroDivisionError):
        return False


def _fit_tail(lz: np.ndarray, lh: np.ndarray, rich: bool) -> float:
    """Least-squares decay exponent p in ln h = c - p ln z + corrections."""
    z = np.exp(lz)
    columns = [np.ones_like(lz), -lz]
    if rich:
        columns += [1.0 / z, lz / z, lz * lz / (z * z)]
    design = np.column_stack(columns)
    coef, *_ = np.linalg.lstsq(design, lh, rcond=None)
    return float(coef[1])


def endpoint_integral(func: Callable, side: int, anchor: float = 0.5,
                      rel_tol: Optional[float] = None) -> EndpointIntegral:
    """Integral of a nonnegative `func` between `anchor` and endpoint `side`.

    The result is classified finite, infinite or unknown. Unknown only
    arises when `func` cannot be evaluated on edge numbers and the float
    range leaves the decay exponent within 0.25 of the critical value 1.
    """
    if side not in (0, 1):
        raise ValueError(f"side must be 0 or 1, got {side}")
    d0 = anchor if side == 0 else 1.0 - anchor
    if not 0.0 < d0 < 1.0:
        raise ValueError(f"anchor must lie in (0, 1), got {anchor}")
    rel_tol = config.quad_rel_tol if rel_tol is None else rel_tol
    extended = _supports_extended(func, side)
    z0 = math.log(-math.log(d0))
    if extended:
        z_max = config.clock_z_max
    else:
        # float reach: d >= 1e-300 at side 0, d >= 1e-15 at side 1
        z_max = math.log(690.0) if side == 0 else math.log(34.0)
    edges = [z0] + [e for e in _WINDOW_EDGES if z0 < e < z_max] + [z_max]
    edges = edges[: config.divergence_windows + 1]

    def h(z: float) -> float:
        with np.errstate(all="ignore"):
            return float(_clock_value(func, side, z, extended))

    windows: List[float] = []
    total = 0.0
    quiet_windows = 0
    for za, zb in zip(edges[:-1], edges[1:]):
        try:
            contribution = quad(h, za, zb, rel_tol=rel_tol, abs_tol=0.0)
        except NumericalError:
            return EndpointIntegral(side, UNKNOWN, math.nan, reach="extended" if extended else "float",
                                    windows=windows, evidence={"nan_window_start": za})
        windows.append(contribution)
        total += contribution
        if not math.isfinite(total) or total > 1e300:
            return EndpointIntegral(side, INFINITE, math.inf, reach="extended" if extended else "float",
                                    windows=windows, evidence={"overflow_at_z": zb})
        if zb >= 4.0 and abs(contribution) <= config.divergence_tol * max(abs(total), 1e-300):
            quiet_windows += 1
            if quiet_windows >= 2:
                return EndpointIntegral(side, FINITE, total, reach="extended" if extended else "float",
                                        windows=windows, evidence={"converged_at_z": zb})
        else:
            quiet_windows = 0

    z_end = edges[-1]
    span = config.tail_fit_span if extended else 4.0
    zs = np.geomspace(max(z_end / span, 1.0), z_end, config.tail_fit_points)
    with np.errstate(all="ignore"):
        lh = np.array([xm.log_abs(_clock_value(func, side, float(z), extended)) for z in zs])
    reach = "extended" if extended else "float"
    if np.all(np.isneginf(lh)):
        return EndpointIntegral(side, FINITE, total, reach=reach, windows=windows,
                                evidence={"tail": 0.0})
    if not np.all(np.isfinite(lh)):
        return EndpointIntegral(side, UNKNOWN, math.nan, reach=reach, windows=windows,
                                evidence={"nonfinite_tail_samples": float(np.sum(~np.isfinite(lh)))})
    p = _fit_tail(np.log(zs), lh, rich=extended)
    margin = config.tail_exponent_margin
    evidence = {"z_end": z_end, "h_end": math.exp(lh[-1]) if lh[-1] > -745 else 0.0}
    if not extended and abs(p - 1.0) < 0.25:
        return EndpointIntegral(side, UNKNOWN, math.nan, tail_exponent=p, reach=reach,
                                windows=windows, evidence=evidence)
    if p > 1.0 + margin:
        tail = math.exp(lh[-1] + math.log(z_end)) / (p - 1.0) if lh[-1] > -745 else 0.0
        evidence["tail"] = tail
        return EndpointIntegral(side, FINITE, total + tail, tail_exponent=p, reach=reach,
                                windows=windows, evidence=evidence)
    return EndpointIntegral(side, INFINITE, math.inf, tail_exponent=p, reach=reach,
                            windows=windows, evidence=evidence)


def open_integral(func: Callable, lo: float, hi: float,
                  rel_tol: Optional[float] = None) -> IntegralResult:
    """Integral over the interval between lo and hi, where lo may be 0 and hi may be 1.

    Endpoints equal to 0 or 1 are handled by `endpoint_integral`; the
    result's status is finite only if every such part is finite.
    """
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError(f"need 0 <= lo < hi <= 1, got [{lo}, {hi}]")
    mid = 0.5 if lo < 0.5 < hi else 0.5 * (lo + hi)
    parts: List[EndpointIntegral] = []
    total = 0.0
    if lo == 0.0:
        part = endpoint_integral(func, 0, anchor=mid, rel_tol=rel_tol)
        parts.append(part)
        total += part.value
    else:
        total += integrate_interval(func, lo, mid, rel_tol)
    if hi == 1.0:
        part = endpoint_integral(func, 1, anchor=mid, rel_tol=rel_tol)
        parts.append(part)
        total += part.value
    else:
        total += integrate_interval(func, mid, hi, rel_tol)
    statuses = {p.status for p in parts}
    if INFINITE in statuses:
        status = INFINITE
    elif UNKNOWN in statuses:
        status = UNKNOWN
    else:
        status = FINITE
    return IntegralResult(total if status == FINITE else (math.inf if status == INFINITE else math.nan),
                          status, parts)


def require_finite(result: IntegralResult, what: str) -> float:
    if result.finite:
        return result.value
    raise DivergenceError(
        f"{what} is {result.status} toward side(s) {result.diverging_sides()}",
        side=(result.diverging_sides() or [None])[0],
        evidence=[p.to_dict() for p in result.parts],
    )


def gauss_legendre(order: int, lo: float, hi: float) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss–Legendre nodes and weights mapped to [lo, hi]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (hi - lo)
    return lo + half * (nodes + 1.0), half * weights
