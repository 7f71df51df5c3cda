"""
Goodness-of-fit statistic sup_t (n K(G_n(t), t) - g_nu(t)) for uniform
samples, and its asymptotic p-value.
"""

import csv
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy import optimize, special

from asymptotics import closed_form
from config import config
from errors import DomainError, InadmissibleError, InputError
from logger import ProcessingLogger, get_logger

_INTERIOR_POINTS = 32
_EDGE = 1e-15


@dataclass(frozen=True, eq=False)
class Sample:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise InputError("sample is empty")
        if not np.all(np.isfinite(values)):
            raise InputError("sample contains non-finite values")
        outside = values[(values <= 0.0) | (values >= 1.0)]
        if outside.size:
            raise InputError(f"{outside.size} sample value(s) outside (0, 1), e.g. {outside[0]!r}")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @cached_property
    def sorted(self) -> np.ndarray:
        return np.sort(self.values)


def divergence_K(s, t):
    """Bernoulli Kullback-Leibler divergence K(s, t), with 0 ln 0 = 0."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any((t <= 0.0) | (t >= 1.0)):
        raise DomainError("K(s, t) needs t in (0, 1)")
    if np.any((s < 0.0) | (s > 1.0)):
        raise DomainError("K(s, t) needs s in [0, 1]")
    value = special.rel_entr(s, t) + special.rel_entr(1.0 - s, 1.0 - t)
    return float(value) if value.ndim == 0 else value


def _c(t):
    return np.log1p(-np.log(4.0 * t * (1.0 - t)))


def trend_g_nu(nu: float, t):
    """g_nu(t) = c(t) + nu ln(1 + c(t)^2), c(t) = ln(1 - ln(4t(1-t)))."""
    t = np.asarray(t, dtype=float)
    if np.any((t <= 0.0) | (t >= 1.0)):
        raise DomainError("g_nu needs t in (0, 1)")
    c = _c(t)
    value = c + nu * np.log1p(c * c)
    return float(value) if value.ndim == 0 else value


def _g_nu_prime(nu: float, t: np.ndarray) -> np.ndarray:
    w = 4.0 * t * (1.0 - t)
    c = np.log1p(-np.log(w))
    dc = -(1.0 - 2.0 * t) / (t * (1.0 - t) * (1.0 - np.log(w)))
    return dc * (1.0 + 2.0 * nu * c / (1.0 + c * c))


def _phi(n: int, nu: float, s, t):
    return n * (special.rel_entr(s, t) + special.rel_entr(1.0 - s, 1.0 - t)) - trend_g_nu(nu, t)


def _phi_prime(n: int, nu: float, s, t):
    return n * (t - s) / (t * (1.0 - t)) - _g_nu_prime(nu, t)


def _interior_points(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Interior points per interval, spaced in t and in logit(t)."""
    a = np.maximum(lo, _EDGE)
    b = np.minimum(hi, 1.0 - _EDGE)
    frac = (np.arange(1, _INTERIOR_POINTS + 1) / (_INTERIOR_POINTS + 1))[None, :]
    linear = a[:, None] + (b - a)[:, None] * frac
    la, lb = special.logit(a), special.logit(b)
    logit = special.expit(la[:, None] + (lb - la)[:, None] * frac)
    return np.sort(np.concatenate((linear, logit), axis=1), axis=1)


@dataclass
class LStatistic:
    value: float
    t: float
    level: float
    n: int
    nu: float


def _maximize(sample: Sample, nu: float) -> LStatistic:
    n = sample.n
    x = sample.sorted
    lo = np.concatenate(([0.0], x))
    hi = np.concatenate((x, [1.0]))
    levels = np.arange(n + 1) / n
    keep = hi > lo
    lo, hi, levels = lo[keep], hi[keep], levels[keep]

    best = LStatistic(-math.inf, math.nan, math.nan, n, nu)

    def offer(value: float, t: float, s: float) -> None:
        nonlocal best
        if value > best.value:
            best = LStatistic(float(value), float(t), float(s), n, nu)

    # one-sided limits at sample points; the ends 0 and 1 contribute -inf
    inner_lo = lo > 0.0
    if np.any(inner_lo):
        values = _phi(n, nu, levels[inner_lo], lo[inner_lo])
        i = int(np.argmax(values))
        offer(values[i], lo[inner_lo][i], levels[inner_lo][i])
    inner_hi = hi < 1.0
    if np.any(inner_hi):
        values = _phi(n, nu, levels[inner_hi], hi[inner_hi])
        i = int(np.argmax(values))
        offer(values[i], hi[inner_hi][i], levels[inner_hi][i])

    interior = _interior_points(lo, hi)
    with np.errstate(all="ignore"):
        slopes = _phi_prime(n, nu, levels[:, None], interior)
    rows, cols = np.nonzero((slopes[:, :-1] > 0.0) & (slopes[:, 1:] <= 0.0))
    for r, c in zip(rows, cols):
        s = levels[r]
        a, b = interior[r, c], interior[r, c + 1]
        if a == b:
            continue
        root = optimize.brentq(lambda t: _phi_prime(n, nu, s, t), a, b, xtol=1e-15, rtol=4e-16, maxiter=200)
        offer(_phi(n, nu, s, root), root, s)
    return best


def compute_L(sample: Sample, nu: float) -> float:
    """L = sup over (0, 1) of n K(G_n(t), t) - g_nu(t).

    G_n is constant on each gap between order statistics; each gap is
    scored at its one-sided end limits and at the interior maxima found by
    root-finding on sign changes of the analytic derivative.
    """
    return _maximize(sample, nu).value


def locate_L(sample: Sample, nu: float) -> LStatistic:
    """compute_L with the maximizing t and the value of G_n there."""
    return _maximize(sample, nu)


def compute_L_grid(sample: Sample, nu: float, points: int = 1_000_000) -> float:
    """Brute-force L on a dense grid plus both one-sided limits at the sample points."""
    n = sample.n
    x = sample.sorted
    t = (np.arange(points) + 0.5) / points
    s = np.searchsorted(x, t, side="right") / n
    best = float(np.max(_phi(n, nu, s, t)))
    ranks = np.arange(1, n + 1)
    right = _phi(n, nu, ranks / n, x)
    left = _phi(n, nu, (ranks - 1) / n, x)
    return max(best, float(np.max(right)), float(np.max(left)))


def p_value(L_obs: float, nu: float) -> float:
    """Asymptotic P(L > L_obs), capped at 1.

    Below u = 1 the asymptotic is increasing in u, so the value there is 1.
    """
    if nu <= 0.75:
        raise InadmissibleError(
            f"for nu <= 3/4 the limit statistic is infinite with probability 1 (nu={nu}); no p-value")
    if L_obs <= 1.0:
        return 1.0
    return min(1.0, closed_form("bridge-gnu", {"nu": nu}, L_obs))


@dataclass
class GofResult:
    L: float
    nu: float
    p_value: float
    n: int
    t_max: float
    method: str = "interval"
    approximation: str = "asymptotic"

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        if math.isnan(self.t_max):
            out["t_max"] = None
        return out


def evaluate(sample: Sample, nu: float, method: str = "interval",
             logger: Optional[ProcessingLogger] = None) -> GofResult:
    """Statistic and p-value; the p-value is taken at 2L on the chi-square scale.

    method="grid" uses the dense-grid maximizer (no location reported).
    """
    logger = get_logger(logger)
    if method == "interval":
        stat = _maximize(sample, nu)
        value, t_max = stat.value, stat.t
    elif method == "grid":
        value, t_max = compute_L_grid(sample, nu), math.nan
    else:
        raise InputError(f"unknown gof method {method!r}; use interval or grid")
    p = p_value(2.0 * value, nu)
    logger.log_metric("L", value)
    logger.log_metric("p-value (asymptotic)", p)
    return GofResult(value, nu, p, sample.n, t_max, method)


def evaluate_many(samples: Sequence[Sample], nu: float, threads: Optional[int] = None,
                  logger: Optional[ProcessingLogger] = None) -> List[GofResult]:
    threads = threads or config.threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: evaluate(s, nu, logger=logger), samples))


def read_sample(path: str, column: Optional[int] = None) -> Sample:
    """One value per line, or a CSV column (0-based); "-" reads stdin.

    A non-numeric first row is taken as a header.
    """
    if path == "-":
        return _parse_rows(csv.reader(sys.stdin), "<stdin>", column)
    source = Path(path)
    if not source.exists():
        raise InputError(f"sample file not found: {path}")
    with source.open(newline="", encoding="utf-8") as handle:
        return _parse_rows(csv.reader(handle), path, column)


def _parse_rows(rows: Iterable[List[str]], path: str, column: Optional[int]) -> Sample:
    values: List[float] = []
    index = column or 0
    for line_no, row in enumerate(rows, start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if index >= len(row):
            raise InputError(f"{path}:{line_no}: no column {index}")
        try:
            values.append(float(row[index]))
        except ValueError:
            if line_no == 1:
                continue
            raise InputError(f"{path}:{line_no}: not a number: {row[index]!r}")
    return Sample(np.array(values))
