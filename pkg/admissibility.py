"""
Numerical checks of the conditions under which the tail approximation holds
on intervals reaching a singular endpoint.

Conditions per endpoint S:
    A  g increases as t -> S
    B  (1 - r) / K^2(|f(t) - f(s)|) stays bounded on partition cells toward S
    C  the integral of C^(1/alpha) g^(k/2-1+1/alpha+eta) exp(-g/2) toward S is finite
    D  (1 - r) / K^2(|f(t) - f(s)|) stays bounded in shrinking windows at S

Which conditions are required depends on whether f is finite at each end.
Heterogeneous models use C*(t) = max of the component roots and the primed
variants of the same checks.
"""

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import special

import extended as xm
from config import config
from errors import InputError, NotApplicableError, NumericalError
from logger import ProcessingLogger, get_logger
from model import POWER, ChiSquareModel, FTransform, LocalVariance, RegVarKernel, TrendFunction
from quadrature import FINITE, INFINITE, UNKNOWN, endpoint_integral

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"

APPLICABLE = "applicable"
NOT_APPLICABLE = "not-applicable"

# refinement growth of the grid supremum above which the ratio is unbounded
_GROWTH_LIMIT = 1.25
_STATUS_TO_VERDICT = {FINITE: PASS, INFINITE: FAIL, UNKNOWN: INCONCLUSIVE}
# models whose transforms and grid checks are kept
_CACHE_SIZE = 64


@dataclass
class ConditionResult:
    condition: str
    side: int
    verdict: str
    evidence: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"condition": self.condition, "side": self.side, "verdict": self.verdict,
                "evidence": self.evidence}


@dataclass
class AdmissibilityReport:
    scenario: str
    conditions: List[ConditionResult] = field(default_factory=list)
    overall: str = INCONCLUSIVE
    j_finite: Dict[int, str] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)
    model: str = ""
    trend: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "trend": self.trend,
            "scenario": self.scenario,
            "overall": self.overall,
            "conditions": [c.to_dict() for c in self.conditions],
            "j_finite": {str(k): v for k, v in self.j_finite.items()},
            "notes": list(self.notes),
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, default=_json_default)


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def _finite_floats(values) -> List[Optional[float]]:
    return [float(v) if math.isfinite(v) else None for v in np.asarray(values, dtype=float)]


# ---------------------------------------------------------------------------
# f-transforms for models
# ---------------------------------------------------------------------------

class _ModelHandle:
    """Hashable stand-in for a model in the bounded caches below; equal by `key`."""

    __slots__ = ("model", "key")

    def __init__(self, model: ChiSquareModel):
        self.model = model
        self.key = model.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __eq__(self, other) -> bool:
        return isinstance(other, _ModelHandle) and other.key == self.key


def dominant_variance(model: ChiSquareModel) -> LocalVariance:
    """C*(t): pointwise max of C_i^(1/alpha_i) over the components."""
    roots = [(c.variance, 1.0 / c.alpha) for c in model.components]

    def cstar(t):
        value = None
        for variance, inv in roots:
            term = xm.power(variance(t), inv)
            value = term if value is None else xm.maximum(value, term)
        return value

    def flag(side: int) -> str:
        flags = [v.integrable_at_0 if side == 0 else v.integrable_at_1 for v, _ in roots]
        if INFINITE in flags:
            return INFINITE
        return FINITE if all(f == FINITE for f in flags) else UNKNOWN

    return LocalVariance(cstar, "C*", flag(0), flag(1))


@lru_cache(maxsize=_CACHE_SIZE)
def _transform_for(handle: _ModelHandle) -> FTransform:
    model = handle.model
    if model.heterogeneous:
        return FTransform(dominant_variance(model), 1.0)
    return FTransform(model.variance, model.alpha)


def model_transform(model: ChiSquareModel) -> FTransform:
    """f for homogeneous models, f* (built on C*, alpha = 1) for heterogeneous ones."""
    return _transform_for(_ModelHandle(model))


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------

def _scenario_from(statuses: Dict[int, str]) -> str:
    if UNKNOWN in statuses.values():
        return "unknown"
    inf0, inf1 = statuses[0] == INFINITE, statuses[1] == INFINITE
    if inf0 and inf1:
        return "(i)"
    if inf0:
        return "(ii)"
    if inf1:
        return "(iii)"
    return "(iv)"


def classify_scenario(c: Union[LocalVariance, FTransform], alpha: float = 1.0,
                      reached: Tuple[bool, bool] = (True, True)) -> str:
    """(i) f infinite at both ends, (ii) only at 0, (iii) only at 1, (iv) neither.

    Ends the interval does not reach count as finite.
    """
    transform = c if isinstance(c, FTransform) else FTransform(c, alpha)
    statuses = {side: transform.limit_status(side) if reached[side] else FINITE for side in (0, 1)}
    return _scenario_from(statuses)


# ---------------------------------------------------------------------------
# condition A
# ---------------------------------------------------------------------------

def _distances(side: int, window: float, points: int) -> np.ndarray:
    floor = 1e-300 if side == 0 else 1e-10
    return np.geomspace(window, max(floor, window * 1e-300), points)


def check_A(g: TrendFunction, side: int, window: float = 0.1, points: Optional[int] = None) -> ConditionResult:
    """g sampled toward `side` on a log-spaced grid must strictly increase."""
    points = points or config.check_a_points
    d = _distances(side, window, points)
    t = d if side == 0 else 1.0 - d
    with np.errstate(all="ignore"):
        values = g.array(t)
    evidence: Dict[str, Any] = {"window": window, "points": points,
                                "g_first": float(values[0]), "g_last": float(values[-1])}
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.argmax(bad))
        evidence["nonfinite_at"] = float(t[i])
        return ConditionResult("A", side, FAIL, evidence)
    steps = np.diff(values)
    if np.any(steps <= 0.0):
        i = int(np.argmax(steps <= 0.0))
        evidence["violation"] = {"t": [float(t[i]), float(t[i + 1])],
                                 "g": [float(values[i]), float(values[i + 1])]}
        return ConditionResult("A", side, FAIL, evidence)
    return ConditionResult("A", side, PASS, evidence)


# ---------------------------------------------------------------------------
# ratio grids for B and D
# ---------------------------------------------------------------------------

def _ratio_sup(r: Callable, kernel: RegVarKernel, ts: np.ndarray, fs: np.ndarray) -> float:
    """sup over distinct grid pairs of (1 - r(s, t)) / K^2(|f(t) - f(s)|)."""
    with np.errstate(all="ignore"):
        corr = np.asarray(r(ts[:, None], ts[None, :]), dtype=float)
    finite = corr[np.isfinite(corr)]
    if finite.size and (finite.max() > 1.0 + 1e-9 or finite.min() < -1.0 - 1e-9):
        raise InputError(f"correlation outside [-1, 1]: range [{finite.min():.6g}, {finite.max():.6g}]")
    with np.errstate(all="ignore"):
        den = kernel.squared(np.abs(fs[:, None] - fs[None, :]))
        ratio = (1.0 - corr) / den
    mask = ~np.eye(ts.size, dtype=bool) & (den > 0.0) & np.isfinite(ratio)
    return float(np.max(ratio[mask])) if mask.any() else math.nan


def _growth_verdict(fine: np.ndarray, coarse: np.ndarray) -> Tuple[bool, float]:
    ok = np.isfinite(fine) & np.isfinite(coarse) & (coarse > 0)
    if not ok.any():
        return False, math.nan
    growth = float(np.median(fine[ok] / coarse[ok]))
    return growth > _GROWTH_LIMIT, growth


# ---------------------------------------------------------------------------
# condition B
# ---------------------------------------------------------------------------

def _cell_edges(transform: FTransform, side: int, d0: float, j_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """Logit coordinates and |f| along a fine table toward `side`."""
    y_end = special.logit(1e-300) if side == 0 else special.logit(1.0 - 1e-10)
    ys = np.arange(0.0, y_end, -0.01 if side == 0 else 0.01)
    fs = np.abs(transform.cumulative_logit(ys))
    reach = int(np.searchsorted(fs, j_max * d0, side="right"))
    return ys[: reach + 2], fs[: reach + 2]


def check_B(r: Optional[Callable], kernel: RegVarKernel, c: Union[LocalVariance, FTransform], alpha: float,
            side: int, d0: float = 1.0, j_max: Optional[int] = None, grid: Optional[int] = None,
            label: str = "B") -> ConditionResult:
    """Bounded ratio on the partition cells of width d0 toward `side`.

    Each cell is sampled on an f-uniform grid; the sup on the full grid is
    compared with the sup on every other point. A median growth above 1.25
    means the ratio blows up within cells (fail). Growth across cells that
    the tail of the sequence does not settle is inconclusive.
    """
    j_max = j_max or config.check_b_j_max
    grid = grid or config.check_b_grid
    if r is None:
        return ConditionResult(label, side, INCONCLUSIVE, {"reason": "no correlation function"})
    transform = c if isinstance(c, FTransform) else FTransform(c, alpha)
    if transform.limit_status(side) != INFINITE:
        raise NotApplicableError(f"f is finite at {side}; condition {label} concerns infinite ends")
    ys, fs = _cell_edges(transform, side, d0, j_max)
    cells = min(j_max, int(fs[-1] // d0))
    if cells < 4:
        return ConditionResult(label, side, INCONCLUSIVE,
                               {"reason": "too few representable cells", "cells": cells})
    targets = np.concatenate([np.linspace((j - 1) * d0, j * d0, grid) for j in range(1, cells + 1)])
    t_all = special.expit(np.interp(targets, fs, ys))
    inside = (t_all > 0.0) & (t_all < 1.0)
    f_all = np.full_like(t_all, np.nan)
    f_all[inside] = transform.on_points(t_all[inside])
    fine, coarse = np.full(cells, np.nan), np.full(cells, np.nan)
    for j in range(cells):
        sl = slice(j * grid, (j + 1) * grid)
        ts, fv = t_all[sl], f_all[sl]
        keep = np.isfinite(fv)
        ts, fv = ts[keep], fv[keep]
        # drop points that collapse in floating point
        _, unique = np.unique(ts, return_index=True)
        ts, fv = ts[np.sort(unique)], fv[np.sort(unique)]
        if ts.size < 8:
            continue
        fine[j] = _ratio_sup(r, kernel, ts, fv)
        coarse[j] = _ratio_sup(r, kernel, ts[::2], fv[::2])
    evidence: Dict[str, Any] = {"d0": d0, "cells": cells, "grid": grid, "M": _finite_floats(fine)}
    valid = fine[np.isfinite(fine)]
    if valid.size < 4:
        evidence["reason"] = "too few evaluable cells"
        return ConditionResult(label, side, INCONCLUSIVE, evidence)
    blowup, growth = _growth_verdict(fine, coarse)
    evidence["refinement_growth"] = growth
    evidence["bound"] = float(valid.max())
    if blowup:
        return ConditionResult(label, side, FAIL, evidence)
    tail = valid[valid.size // 2:]
    median = float(np.median(valid))
    evidence["median"] = median
    if tail.max() <= 10.0 * median:
        return ConditionResult(label, side, PASS, evidence)
    evidence["reason"] = "cell suprema still growing"
    return ConditionResult(label, side, INCONCLUSIVE, evidence)


# ---------------------------------------------------------------------------
# condition D
# ---------------------------------------------------------------------------

def check_D(r: Optional[Callable], kernel: RegVarKernel, c: Union[LocalVariance, FTransform], alpha: float,
            side: int, delta: float = 0.1, windows: Optional[int] = None, grid: Optional[int] = None,
            label: str = "D") -> ConditionResult:
    """Bounded ratio in the windows of width delta, delta/2, ... at `side`."""
    windows = windows or config.check_d_windows
    grid = grid or config.check_b_grid
    if r is None:
        return ConditionResult(label, side, INCONCLUSIVE, {"reason": "no correlation function"})
    transform = c if isinstance(c, FTransform) else FTransform(c, alpha)
    fine, coarse, widths = [], [], []
    for m in range(windows):
        width = delta * 0.5 ** m
        d = width * np.arange(1, grid + 1) / grid
        ts = d if side == 0 else 1.0 - d
        ts = np.unique(ts)
        fv = transform.on_points(ts)
        fine.append(_ratio_sup(r, kernel, ts, fv))
        coarse.append(_ratio_sup(r, kernel, ts[::2], fv[::2]))
        widths.append(width)
    fine_a, coarse_a = np.array(fine), np.array(coarse)
    evidence: Dict[str, Any] = {"delta": delta, "widths": widths, "window_sup": _finite_floats(fine_a)}
    if not np.all(np.isfinite(fine_a)):
        evidence["reason"] = "ratio not evaluable in some windows"
        return ConditionResult(label, side, INCONCLUSIVE, evidence)
    blowup, growth = _growth_verdict(fine_a, coarse_a)
    evidence["refinement_growth"] = growth
    if blowup:
        return ConditionResult(label, side, FAIL, evidence)
    median = float(np.median(fine_a))
    evidence["cap"] = float(fine_a.max())
    if fine_a[-(windows // 3 or 1):].max() <= 10.0 * median:
        return ConditionResult(label, side, PASS, evidence)
    evidence["reason"] = "window suprema still growing"
    return ConditionResult(label, side, INCONCLUSIVE, evidence)


# ---------------------------------------------------------------------------
# condition C and the J half-integrals
# ---------------------------------------------------------------------------

def _positive_power(value, m: float):
    if m == 0.0:
        return 1.0
    if isinstance(value, xm.EdgeNumber):
        return xm.power(value, m) if value.sign() > 0 else 0.0
    value = float(value)
    return value ** m if value > 0.0 else 0.0


def check_C(g: TrendFunction, c: LocalVariance, alpha: float, k: int, side: int, eta: float = 0.0,
            exponent: Optional[float] = None, label: str = "C") -> ConditionResult:
    """Finiteness of the integral of C^(1/alpha) g^(k/2-1+1/alpha+eta) exp(-g/2) toward `side`.

    `exponent` replaces the power of g (the heterogeneous variant uses n in
    place of k and a C* that already carries its root).
    """
    if eta < 0.0:
        raise InputError(f"eta must be nonnegative, got {eta}")
    m = 0.5 * k - 1.0 + 1.0 / alpha + eta if exponent is None else exponent
    inv = 1.0 / alpha

    def integrand(t):
        gv = g(t)
        return xm.power(c(t), inv) * _positive_power(gv, m) * xm.exp(-0.5 * gv)

    part = endpoint_integral(integrand, side, 0.5)
    evidence = part.to_dict()
    evidence["g_exponent"] = m
    return ConditionResult(label, side, _STATUS_TO_VERDICT[part.status], evidence)


def j_finite(c: LocalVariance, alpha: float, g: TrendFunction, side: int) -> str:
    """finite / infinite / unknown for the J half-integral toward `side`."""
    inv = 1.0 / alpha
    return endpoint_integral(lambda t: xm.power(c(t), inv) * xm.exp(-0.5 * g(t)), side, 0.5).status


def bessel_integral_test(g: TrendFunction, n: int, side: Union[int, str] = 0) -> str:
    """finite / infinite for the integral of g^(n/2) t^-1 exp(-g/2) at 0 or at infinity.

    At infinity the substitution t = 1/s maps the test to s -> 0.
    """
    if n < 1:
        raise InputError(f"n must be positive, got {n}")
    if side in (0, "0"):
        h = g
    elif side in ("inf", "infinity", "oo"):
        def h(s):
            return g(1.0 / s)
    else:
        raise InputError(f"side must be 0 or 'inf', got {side!r}")
    sampled = [float(h(d)) for d in (1e-10, 1e-100, 1e-300)]
    sampled.append(float(h(xm.EdgeNumber.distance(1e100))))
    if any(math.isnan(p) for p in sampled) or not all(
            b > a for a, b in zip(sampled, sampled[1:])):
        raise NotApplicableError(f"the integral test needs g increasing to infinity at the end; "
                                 f"sampled values {sampled}")

    def integrand(t):
        gv = h(t)
        return _positive_power(gv, 0.5 * n) / t * xm.exp(-0.5 * gv)

    status = endpoint_integral(integrand, 0, 0.5).status
    if status == UNKNOWN:
        raise NumericalError("integral test could not be decided")
    return status


# ---------------------------------------------------------------------------
# full assessment
# ---------------------------------------------------------------------------

def default_eta(kernel: RegVarKernel) -> float:
    return config.eta_power_kernel if kernel.form == POWER else config.eta_default


@lru_cache(maxsize=4 * _CACHE_SIZE)
def _grid_check(handle: _ModelHandle, kind: str, side: int, scale: float, j_max: Optional[int], index: int,
                label: str) -> ConditionResult:
    """Condition B (scale = d0) or D (scale = delta) for one component of a model."""
    model = handle.model
    correlation = model.components[index].correlation
    transform = model_transform(model)
    if kind == "B":
        return check_B(correlation, model.kernel, transform, 1.0, side, scale, j_max, label=label)
    return check_D(correlation, model.kernel, transform, 1.0, side, scale, label=label)


def _worst(results: List[ConditionResult], label: str, side: int) -> ConditionResult:
    order = {FAIL: 0, INCONCLUSIVE: 1, PASS: 2}
    worst = min(results, key=lambda res: order[res.verdict])
    return ConditionResult(label, side, worst.verdict,
                           {"components": [res.to_dict() for res in results]})


def assess(model: ChiSquareModel, g: TrendFunction, eta: Optional[float] = None, d0: float = 1.0,
           j_max: Optional[int] = None, delta: float = 0.1, window: float = 0.1,
           logger: Optional[ProcessingLogger] = None) -> AdmissibilityReport:
    """Scenario, required conditions and overall verdict for `model` with trend `g`."""
    logger = get_logger(logger)
    eta = default_eta(model.kernel) if eta is None else eta
    hetero = model.heterogeneous
    prime = "'" if hetero else ""
    handle = _ModelHandle(model)
    transform = _transform_for(handle)
    reached = {side: model.interval.reaches(side) for side in (0, 1)}
    statuses = {side: transform.limit_status(side) if reached[side] else FINITE for side in (0, 1)}
    report = AdmissibilityReport(_scenario_from(statuses), model=model.name, trend=g.name)
    logger.log_metric("Scenario", report.scenario)

    components = model.components if hetero else model.components[:1]
    c_check = transform.variance if hetero else model.variance
    alpha_check = 1.0 if hetero else model.alpha
    c_exponent = 0.5 * model.n - 1.0 + 1.0 / model.alpha + eta if hetero else None

    for side in (0, 1):
        if not reached[side]:
            continue
        report.j_finite[side] = j_finite(c_check, alpha_check, g, side)
        status = statuses[side]
        if status == INFINITE:
            logger.log_step("Conditions A/B/C", f"side {side}")
            report.conditions.append(check_A(g, side, window))
            b_results = [_grid_check(handle, "B", side, d0, j_max, i, "B" + prime) for i in range(len(components))]
            report.conditions.append(b_results[0] if len(b_results) == 1 else _worst(b_results, "B" + prime, side))
            report.conditions.append(check_C(g, c_check, alpha_check, model.k, side, eta,
                                             exponent=c_exponent, label="C" + prime))
        elif status == FINITE:
            logger.log_step("Condition D", f"side {side}")
            d_results = [_grid_check(handle, "D", side, delta, None, i, "D" + prime)
                         for i in range(len(components))]
            report.conditions.append(d_results[0] if len(d_results) == 1 else _worst(d_results, "D" + prime, side))

    verdicts = [c.verdict for c in report.conditions]
    if report.scenario == "unknown":
        report.overall = INCONCLUSIVE
        report.notes.append("endpoint finiteness of f could not be decided")
    elif FAIL in verdicts:
        report.overall = NOT_APPLICABLE
    elif INCONCLUSIVE in verdicts:
        report.overall = INCONCLUSIVE
    else:
        report.overall = APPLICABLE
    for cond in report.conditions:
        if cond.condition.startswith("C") and cond.verdict == FAIL and report.j_finite.get(cond.side) == FINITE:
            report.notes.append(f"not-applicable (C failed): J is finite toward {cond.side} but condition C fails")
        if cond.verdict == INCONCLUSIVE:
            logger.log_warning(f"condition {cond.condition} at side {cond.side} is inconclusive")
    logger.log_metric("Admissibility", report.overall)
    return report
