"""
Monte Carlo estimates built on the samplers: tail probabilities with
confidence intervals, Pickands constants, the Slepian-type bound and the
asymptotic-versus-simulation comparison table.
"""

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from admissibility import model_transform
from asymptotics import approximation_for, closed_form, critical_value, pickands_info
from config import config
from errors import DomainError, InputError, NotApplicableError, NumericalError
from logger import ProcessingLogger, get_logger
from model import ChiSquareModel, Interval, TrendFunction, parse_model_id, parse_trend_id, q_of_u
from simulate import TimeGrid, sample_fbm, sample_model, sup_trend


def wilson_interval(successes: int, total: int, z: Optional[float] = None) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total <= 0:
        return 0.0, 1.0
    z = config.confidence_z if z is None else z
    p = successes / total
    denom = 1.0 + z * z / total
    centre = (p + z * z / (2.0 * total)) / denom
    half = z * math.sqrt(p * (1.0 - p) / total + z * z / (4.0 * total * total)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def proportion_interval(hits: int, n_paths: int) -> Tuple[float, float]:
    """Wilson interval; with no hits the one-sided rule-of-three bound 3/n."""
    if hits == 0:
        return 0.0, min(1.0, 3.0 / n_paths)
    return wilson_interval(hits, n_paths)


@dataclass
class MeshLevel:
    mesh: float
    p_hat: float
    ci_low: float
    ci_high: float
    hits: int
    grid_size: int


@dataclass
class MCEstimate:
    p_hat: float
    ci_low: float
    ci_high: float
    n_paths: int
    hits: int
    grid: Dict[str, Any]
    seed: Optional[int]
    levels: List[MeshLevel] = field(default_factory=list)
    u: Optional[float] = None

    @property
    def converged(self) -> bool:
        """The coarse-mesh estimate sits inside the fine-mesh interval."""
        if len(self.levels) < 2:
            return True
        coarse = self.levels[0]
        return self.ci_low <= coarse.p_hat <= self.ci_high

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["converged"] = self.converged
        return out


# ---------------------------------------------------------------------------
# simulation driver
# ---------------------------------------------------------------------------

def default_grid(model: ChiSquareModel, u: float, truncation: float = 1e-3,
                 mesh_fraction: Optional[float] = None) -> TimeGrid:
    """f-uniform grid with step mesh_fraction * q(u) on the truncated interval."""
    fraction = config.mesh_fraction if mesh_fraction is None else mesh_fraction
    interval = model.interval.truncated(truncation, model.variance if not model.heterogeneous else None)
    step = fraction * q_of_u(model.kernel, u)
    return TimeGrid.f_uniform(model_transform(model), interval.lo, interval.hi, step)


def _blocks(n_paths: int, block_size: int) -> List[Tuple[int, int]]:
    count = math.ceil(n_paths / block_size)
    return [(b, min(block_size, n_paths - b * block_size)) for b in range(count)]


def simulate_sups(model: ChiSquareModel, g: TrendFunction, grid: TimeGrid, n_paths: int, seed: Optional[int],
                  subgrids: Sequence[Optional[np.ndarray]] = (None,), threads: Optional[int] = None,
                  block_size: Optional[int] = None,
                  logger: Optional[ProcessingLogger] = None) -> List[np.ndarray]:
    """Per-path sup of chi^2 - g over the grid and over each column subset.

    Blocks run on a thread pool; block b always uses random streams
    (seed, component, b), so the merge is deterministic.
    """
    logger = get_logger(logger)
    block_size = block_size or config.block_size
    threads = threads or config.threads

    def run(block: Tuple[int, int]) -> List[np.ndarray]:
        index, size = block
        batch = sample_model(model, grid, size, seed, block=index, logger=logger)
        return [sup_trend(batch, g, columns).values for columns in subgrids]

    blocks = _blocks(n_paths, block_size)
    logger.log_step("Simulating", f"{n_paths} paths of {model.name} on {grid.size} points, "
                                  f"{len(blocks)} block(s), {threads} thread(s)")
    if threads == 1 or len(blocks) == 1:
        parts = [run(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    return [np.concatenate([part[i] for part in parts]) for i in range(len(subgrids))]


def _level(sups: np.ndarray, u: float, mesh: float, grid_size: int) -> MeshLevel:
    hits = int(np.count_nonzero(sups > u))
    low, high = proportion_interval(hits, sups.size)
    return MeshLevel(mesh, hits / sups.size, low, high, hits, grid_size)


def _check_paths(n_paths: int) -> None:
    if n_paths < config.mc_min_paths:
        raise DomainError(f"need at least {config.mc_min_paths} paths, got {n_paths}")


def _mesh_of(grid: TimeGrid) -> float:
    if "step" in grid.params:
        return float(grid.params["step"])
    return float(np.max(np.diff(grid.points))) if grid.size > 1 else 0.0


def estimate_tail(model: ChiSquareModel, g: TrendFunction, u: float, n_paths: int, seed: Optional[int],
                  grid: Optional[TimeGrid] = None, refine: bool = True, threads: Optional[int] = None,
                  truncation: float = 1e-3, mesh_fraction: Optional[float] = None,
                  refuse_below_floor: bool = True,
                  logger: Optional[ProcessingLogger] = None) -> MCEstimate:
    """P(sup (chi^2 - g) > u) at mesh d and d/2 under common random numbers.

    The coarse grid is the even-indexed subset of the fine one, so the
    fine-mesh estimate is never below the coarse one. An upper bound below
    the brute-force floor raises NumericalError unless refuse_below_floor
    is switched off.
    """
    logger = get_logger(logger)
    _check_paths(n_paths)
    coarse = grid or default_grid(model, u, truncation, mesh_fraction)
    if refine and coarse.size > 1:
        transform = model_transform(model) if coarse.kind == "f-uniform" else None
        fine, columns = coarse.refined(transform)
        grids = [(coarse, columns), (fine, None)]
    else:
        fine = coarse
        grids = [(fine, None)]
    sups = simulate_sups(model, g, fine, n_paths, seed, [c for _, c in grids], threads, logger=logger)
    levels = [_level(s, u, _mesh_of(level_grid), level_grid.size) for s, (level_grid, _) in zip(sups, grids)]
    best = levels[-1]
    if refuse_below_floor and best.ci_high < config.mc_p_floor:
        raise NumericalError(f"tail probability below the brute-force floor {config.mc_p_floor:g} "
                             f"(upper bound {best.ci_high:.3g}); raise the number of paths or lower u")
    estimate = MCEstimate(best.p_hat, best.ci_low, best.ci_high, n_paths, best.hits, fine.descriptor(),
                          seed, levels, float(u))
    logger.log_metric("p_hat", estimate.p_hat)
    if not estimate.converged:
        logger.log_warning("coarse-mesh estimate falls outside the fine-mesh interval; refine the grid")
    return estimate


# ---------------------------------------------------------------------------
# Pickands constants
# ---------------------------------------------------------------------------

@dataclass
class PickandsLevel:
    mesh: float
    value: float
    ci_low: float
    ci_high: float
    std_error: float


@dataclass
class PickandsEstimate:
    alpha: float
    horizon: float
    method: str
    n_paths: int
    seed: Optional[int]
    levels: List[PickandsLevel]
    exact: Optional[float] = None

    @property
    def value(self) -> float:
        return self.levels[-1].value

    @property
    def ci_low(self) -> float:
        return self.levels[-1].ci_low

    @property
    def ci_high(self) -> float:
        return self.levels[-1].ci_high

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out.update(value=self.value, ci_low=self.ci_low, ci_high=self.ci_high)
        return out


def _mean_interval(samples: np.ndarray) -> Tuple[float, float, float, float]:
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else math.inf
    z = config.confidence_z
    return mean, mean - z * se, mean + z * se, se


def _pickands_block(alpha: float, horizon: float, finest: float, method: str, size: int,
                    seed: Optional[int], block: int, logger: ProcessingLogger) -> np.ndarray:
    """Per-path functional at meshes 4*finest, 2*finest, finest (columns)."""
    H = 0.5 * alpha
    two_sided = method == "ratio"
    span = 2.0 * horizon if two_sided else horizon
    steps = int(round(span / finest))
    unit = TimeGrid(np.arange(1, steps + 1) / steps, "uniform", {"m": steps})
    batch = sample_fbm(unit, H, size, seed, stream=0, block=block,
                       method="circulant" if H < 1.0 else "auto", logger=logger)
    path = np.concatenate((np.zeros((size, 1)), batch.values * span ** H), axis=1)
    times = np.arange(steps + 1) * finest
    if two_sided:
        centre = steps // 2
        path = path - path[:, centre:centre + 1]
        times = times - times[centre]
    drift = np.power(np.abs(times), alpha)
    out = np.empty((size, 3))
    for j, stride in enumerate((4, 2, 1)):
        if two_sided:
            idx = np.arange(steps // 2 % stride, steps + 1, stride)
        else:
            idx = np.arange(0, steps + 1, stride)
        y = math.sqrt(2.0) * path[:, idx] - drift[idx]
        top = np.max(y, axis=1)
        if two_sided:
            out[:, j] = 1.0 / (stride * finest * np.sum(np.exp(y - top[:, None]), axis=1))
        else:
            out[:, j] = np.exp(top) / horizon
    return out


def estimate_pickands(alpha: float, horizon: float = 50.0, mesh: float = 0.01, n_paths: int = 100_000,
                      seed: Optional[int] = None, method: str = "ratio", threads: Optional[int] = None,
                      logger: Optional[ProcessingLogger] = None) -> PickandsEstimate:
    """Pickands constant H_alpha at meshes 4m, 2m, m (finest last).

    method="ratio" averages max e^Y / (mesh * sum e^Y) over a two-sided grid
    on [-T, T], with Y(t) = sqrt(2) B_(alpha/2)(t) - |t|^alpha; it is bounded
    by 1/mesh. method="truncated" averages exp(sup_[0,T] Y) / T, whose
    variance grows without bound in T.
    """
    logger = get_logger(logger)
    if not 0.0 < alpha <= 2.0:
        raise DomainError(f"alpha must lie in (0, 2], got {alpha}")
    if horizon < 10.0:
        raise DomainError(f"horizon must be at least 10, got {horizon}")
    if not 0.0 < mesh <= 0.01 * horizon:
        raise DomainError(f"mesh must lie in (0, {0.01 * horizon:g}], got {mesh}")
    if method not in ("ratio", "truncated"):
        raise InputError(f"unknown Pickands estimator {method!r}; use 'ratio' or 'truncated'")
    finest = mesh / 4.0
    points = int(round((2.0 if method == "ratio" else 1.0) * horizon / finest)) + 1
    block_size = max(1, min(config.block_size, 2_000_000 // points))
    blocks = _blocks(n_paths, block_size)
    threads = threads or config.threads
    logger.log_step("Pickands", f"alpha={alpha:g}, T={horizon:g}, meshes {mesh:g}/{mesh / 2:g}/{finest:g}, "
                                f"{n_paths} paths via {method}")

    def run(block: Tuple[int, int]) -> np.ndarray:
        return _pickands_block(alpha, horizon, finest, method, block[1], seed, block[0], logger)

    if threads == 1 or len(blocks) == 1:
        parts = [run(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    samples = np.concatenate(parts)
    levels = []
    for j, level_mesh in enumerate((mesh, mesh / 2.0, finest)):
        value, low, high, se = _mean_interval(samples[:, j])
        levels.append(PickandsLevel(level_mesh, value, low, high, se))
        logger.log_metric(f"H_{alpha:g} at mesh {level_mesh:g}", value)
    exact = pickands_info(alpha)[0] if alpha in (1.0, 2.0) else None
    return PickandsEstimate(float(alpha), float(horizon), method, n_paths, seed, levels, exact)


def pickands_trend(estimates: Sequence[PickandsEstimate],
                   logger: Optional[ProcessingLogger] = None) -> bool:
    """Soft check that estimates decrease in alpha beyond their intervals."""
    logger = get_logger(logger)
    ordered = sorted(estimates, key=lambda e: e.alpha)
    ok = True
    for a, b in zip(ordered, ordered[1:]):
        if b.ci_low > a.ci_high:
            logger.log_warning(f"H_{b.alpha:g} exceeds H_{a.alpha:g} beyond both intervals")
            ok = False
    return ok


# ---------------------------------------------------------------------------
# Slepian-type bound
# ---------------------------------------------------------------------------

@dataclass
class SlepianReport:
    n: int
    u: float
    estimate_x: MCEstimate
    estimate_y: MCEstimate
    bound_factor: float
    holds: bool
    hypotheses: List[Dict[str, Any]]

    @property
    def ratio(self) -> Optional[float]:
        if self.estimate_y.p_hat == 0.0:
            return None
        return self.estimate_x.p_hat / self.estimate_y.p_hat

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "u": self.u,
            "x": self.estimate_x.to_dict(),
            "y": self.estimate_y.to_dict(),
            "bound_factor": self.bound_factor,
            "ratio": self.ratio,
            "holds": self.holds,
            "hypotheses": self.hypotheses,
        }


def verify_slepian_hypotheses(model_x: ChiSquareModel, model_y: ChiSquareModel,
                              grid: TimeGrid, tol: float = 1e-12) -> List[Dict[str, Any]]:
    """Equal weights and r_X >= r_Y on every grid pair, per component."""
    if model_x.n != model_y.n:
        raise NotApplicableError(f"models have {model_x.n} and {model_y.n} components")
    if model_x.b != model_y.b:
        raise NotApplicableError(f"variances differ: weights {list(model_x.b)} vs {list(model_y.b)}")
    if (model_x.interval.lo, model_x.interval.hi) != (model_y.interval.lo, model_y.interval.hi):
        raise NotApplicableError(f"models live on {model_x.interval} and {model_y.interval}")
    s, t = np.meshgrid(grid.points, grid.points, indexing="ij")
    upper = np.triu_indices(grid.size, 1)
    matrix, violations = [], []
    for i, (cx, cy) in enumerate(zip(model_x.components, model_y.components)):
        if cx.correlation is None or cy.correlation is None:
            raise NotApplicableError(f"component {i + 1} has no correlation function")
        gap = (np.asarray(cx.correlation(s, t)) - np.asarray(cy.correlation(s, t)))[upper]
        bad = np.flatnonzero(gap < -tol)
        matrix.append({"component": i + 1, "min_gap": float(np.min(gap)) if gap.size else 0.0,
                       "violations": int(bad.size)})
        for j in bad[:20]:
            violations.append({"component": i + 1, "s": float(grid.points[upper[0][j]]),
                               "t": float(grid.points[upper[1][j]]), "gap": float(gap[j])})
    if violations:
        raise NotApplicableError("X correlations fall below Y correlations on the grid",
                                 details={"violations": violations, "matrix": matrix})
    return matrix


def slepian_check(model_x: ChiSquareModel, model_y: ChiSquareModel, u: float, n_paths: int,
                  seed: Optional[int], grid: Optional[TimeGrid] = None, g: Optional[TrendFunction] = None,
                  threads: Optional[int] = None, logger: Optional[ProcessingLogger] = None) -> SlepianReport:
    """Estimate both tails on one grid and test p_X <= 2^n p_Y up to CI noise."""
    logger = get_logger(logger)
    g = g or parse_trend_id("zero")
    grid = grid or default_grid(model_y, u)
    matrix = verify_slepian_hypotheses(model_x, model_y, grid)
    est_x = estimate_tail(model_x, g, u, n_paths, seed, grid, refine=False, threads=threads, logger=logger)
    est_y = estimate_tail(model_y, g, u, n_paths, seed, grid, refine=False, threads=threads, logger=logger)
    factor = 2.0 ** model_x.n
    holds = est_x.ci_low <= factor * est_y.ci_high
    if not holds:
        logger.log_warning(f"bound violated: p_X={est_x.p_hat:.4g} > {factor:g} p_Y={est_y.p_hat:.4g}")
    return SlepianReport(model_x.n, float(u), est_x, est_y, factor, holds, matrix)


# ---------------------------------------------------------------------------
# asymptotic vs simulation
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("u", "asymptotic", "p_hat", "ci_low", "ci_high", "ratio", "mesh", "n_paths", "seed")


@dataclass
class ComparisonRow:
    u: float
    asymptotic: float
    p_hat: float
    ci_low: float
    ci_high: float
    ratio: Optional[float]
    mesh: float
    n_paths: int
    seed: Optional[int]


@dataclass
class ComparisonTable:
    rows: List[ComparisonRow]
    trend_visible: bool
    meta: Dict[str, Any] = field(default_factory=dict)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([_csv_value(getattr(row, name)) for name in CSV_COLUMNS])
        return buffer.getvalue()

    def to_dict(self) -> Dict[str, Any]:
        return {"rows": [asdict(r) for r in self.rows], "trend_visible": self.trend_visible, "meta": self.meta}


def _csv_value(value) -> str:
    if value is None:
        return "N/A"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _ratio_trend(rows: Sequence[ComparisonRow]) -> bool:
    gaps = [abs(math.log(r.ratio)) for r in rows if r.ratio]
    return len(gaps) >= 2 and gaps[-1] < gaps[0]


def compare(model: ChiSquareModel, g: TrendFunction, u_list: Sequence[float], n_paths: int,
            seed: Optional[int], threads: Optional[int] = None, truncation: float = 1e-3,
            mesh_fraction: Optional[float] = None, pickands: Optional[float] = None,
            logger: Optional[ProcessingLogger] = None) -> ComparisonTable:
    """Asymptotic value and MC estimate for each u.

    One simulation on the grid for the largest u serves every threshold;
    the asymptotic is evaluated on the same truncated interval.
    """
    logger = get_logger(logger)
    u_values = [float(u) for u in u_list]
    if not u_values:
        raise InputError("need at least one u")
    if any(b <= a for a, b in zip(u_values, u_values[1:])):
        raise InputError(f"u values must be increasing, got {u_values}")
    _check_paths(n_paths)
    interval = model.interval.truncated(truncation, None if model.heterogeneous else model.variance)
    simulated = model.with_interval(interval)
    approx = approximation_for(simulated, g, pickands=pickands, logger=logger)
    grid = default_grid(simulated, u_values[-1], truncation, mesh_fraction)
    sups = simulate_sups(simulated, g, grid, n_paths, seed, (None,), threads, logger=logger)[0]
    mesh = _mesh_of(grid)
    rows = []
    for u in u_values:
        level = _level(sups, u, mesh, grid.size)
        asym = approx.evaluate(u)
        ratio = level.p_hat / asym if level.hits > 0 and asym > 0.0 else None
        rows.append(ComparisonRow(u, asym, level.p_hat, level.ci_low, level.ci_high, ratio, mesh, n_paths, seed))
        logger.log_metric(f"u={u:g} ratio", "N/A" if ratio is None else ratio)
    meta = {"model": simulated.describe(), "trend": g.name, "grid": grid.descriptor(),
            "approximation": approx.to_dict()}
    return ComparisonTable(rows, _ratio_trend(rows), meta)


# ---------------------------------------------------------------------------
# Bessel constant
# ---------------------------------------------------------------------------

@dataclass
class BesselAdjudication:
    n: int
    u: float
    derived: float
    literal: float
    estimate: MCEstimate
    verdict: str

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "u": self.u, "derived": self.derived, "literal": self.literal,
                "ratio": self.literal / self.derived, "estimate": self.estimate.to_dict(),
                "verdict": self.verdict}


def bessel_verdict(estimate: MCEstimate, derived: float, literal: float) -> str:
    """"derived" or "literal" for the value nearer the estimate (on a log
    scale) when the fine-mesh interval excludes the other one; else "undecided".
    """
    if estimate.p_hat <= 0.0:
        return "undecided"
    gap_derived = abs(math.log(estimate.p_hat / derived))
    gap_literal = abs(math.log(estimate.p_hat / literal))
    if gap_derived < gap_literal and not estimate.ci_low <= literal <= estimate.ci_high:
        return "derived"
    if gap_literal < gap_derived and not estimate.ci_low <= derived <= estimate.ci_high:
        return "literal"
    return "undecided"


def adjudicate_bessel(n: int, n_paths: int, seed: Optional[int], p_target: float = 1e-3, lo: float = 1e-4,
                      threads: Optional[int] = None,
                      logger: Optional[ProcessingLogger] = None) -> BesselAdjudication:
    """Decide between the general-formula Bessel coefficient and the one with
    an extra factor 2 by simulation at the u where the former equals p_target.

    See bessel_verdict for how the estimate picks a side.
    """
    logger = get_logger(logger)
    interval = Interval(lo, 1.0, True, True)
    model = parse_model_id(f"bessel:{n}", interval=interval)
    g = parse_trend_id("bessel")
    approx = approximation_for(model, g, logger=logger)
    u = critical_value(None, None, p_target, approx=approx).u
    derived = approx.evaluate(u)
    literal = closed_form("bessel", {"n": n, "g": g, "interval": interval}, u)
    estimate = estimate_tail(model, g, u, n_paths, seed, threads=threads, logger=logger)
    verdict = bessel_verdict(estimate, derived, literal)
    logger.log_metric("Bessel verdict", verdict)
    return BesselAdjudication(n, u, derived, literal, estimate, verdict)
