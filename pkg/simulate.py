"""
Exact samplers on discrete time grids and the sup-with-trend functional.

Every batch is drawn from its own random stream: a SeedSequence built from
(seed, stream, block), so path blocks can be generated by any worker in any
order and still reproduce bit-for-bit.
"""

import csv
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, Hashable, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from config import config
from errors import ConfigurationError, DomainError, InputError, NumericalError
from logger import ProcessingLogger, get_logger
from model import ChiSquareModel, Component, FTransform, TrendFunction

_MAGIC = b"CHISQPTH"
_FORMAT_VERSION = 1
_MAX_GRID = 5_000_000


def stream_rng(seed: Optional[int], stream: int = 0, block: int = 0) -> np.random.Generator:
    """Generator for (seed, stream, block); independent of who draws it."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(stream), int(block))))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class TimeGrid:
    points: np.ndarray
    kind: str = "custom"
    params: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 1 or self.points.size == 0:
            raise InputError("grid must be a nonempty one-dimensional array")
        if np.any(np.diff(self.points) <= 0.0):
            raise InputError("grid points must be strictly increasing")
        if self.points[0] < 0.0 or self.points[-1] > 1.0:
            raise DomainError("grid points must lie in [0, 1]")

    @property
    def size(self) -> int:
        return int(self.points.size)

    def descriptor(self) -> Dict:
        return {"kind": self.kind, "size": self.size, "lo": float(self.points[0]),
                "hi": float(self.points[-1]), **self.params}

    @classmethod
    def uniform(cls, lo: float, hi: float, m: int) -> "TimeGrid":
        return cls(np.linspace(lo, hi, m), "uniform", {"m": m})

    @classmethod
    def log_end(cls, lo: float, hi: float, m: int, side: int) -> "TimeGrid":
        """Points geometric in the distance to `side`: dense near that end."""
        if side == 0:
            if lo <= 0.0:
                raise DomainError("log-end grid toward 0 needs lo > 0")
            points = np.geomspace(lo, hi, m)
        else:
            if hi >= 1.0:
                raise DomainError("log-end grid toward 1 needs hi < 1")
            points = 1.0 - np.geomspace(1.0 - lo, 1.0 - hi, m)
        return cls(points, "log-end", {"side": side, "m": m})

    @classmethod
    def f_uniform(cls, transform: FTransform, lo: float, hi: float, step: float) -> "TimeGrid":
        """Points with f(t_(i+1)) - f(t_i) = step, starting at lo."""
        if step <= 0.0:
            raise DomainError(f"f-step must be positive, got {step}")
        start = max(lo, 1e-300)
        points = [lo]
        t = start
        while True:
            t = transform.advance(t, step)
            if t > hi or t >= 1.0:
                break
            points.append(t)
            if len(points) > _MAX_GRID:
                raise InputError(f"f-uniform grid with step {step:g} exceeds {_MAX_GRID} points")
        if points[-1] < hi:
            points.append(hi)
        return cls(np.array(points), "f-uniform", {"step": step})

    def refined(self, transform: Optional[FTransform] = None) -> Tuple["TimeGrid", np.ndarray]:
        """Nested grid with one point between each pair; returns it and the
        positions of the original points inside it."""
        pts = self.points
        if self.kind == "f-uniform" and transform is not None:
            half = 0.5 * self.params["step"]
            mids = np.array([transform.advance(max(t, 1e-300), half) for t in pts[:-1]])
            overshoot = mids >= pts[1:]
            mids[overshoot] = 0.5 * (pts[:-1][overshoot] + pts[1:][overshoot])
            params = dict(self.params, step=half)
        elif self.kind == "log-end":
            side = self.params["side"]
            if side == 0:
                mids = np.sqrt(pts[:-1] * pts[1:])
            else:
                mids = 1.0 - np.sqrt((1.0 - pts[:-1]) * (1.0 - pts[1:]))
            params = dict(self.params, m=2 * self.size - 1)
        else:
            mids = 0.5 * (pts[:-1] + pts[1:])
            params = dict(self.params, m=2 * self.size - 1) if "m" in self.params else dict(self.params)
        merged = np.empty(2 * pts.size - 1)
        merged[0::2] = pts
        merged[1::2] = mids
        return TimeGrid(merged, self.kind, params), np.arange(0, merged.size, 2)

    def uniform_step(self) -> Optional[float]:
        """h if the points are h, 2h, ..., mh (0 may lead), else None."""
        pts = self.points[1:] if self.points[0] == 0.0 else self.points
        if pts.size < 2:
            return None
        h = pts[0]
        expected = h * np.arange(1, pts.size + 1)
        return float(h) if np.allclose(pts, expected, rtol=1e-10, atol=0.0) else None


@dataclass(eq=False)
class PathBatch:
    grid: TimeGrid
    values: np.ndarray
    process: str
    seed: Optional[int] = None
    stream: int = 0
    block: int = 0

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.size:
            raise InputError(f"values shape {self.values.shape} does not match grid size {self.grid.size}")

    @property
    def n_paths(self) -> int:
        return int(self.values.shape[0])


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def _brownian(times: np.ndarray, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    dt = np.diff(np.concatenate(([0.0], times)))
    return np.cumsum(rng.standard_normal((n_paths, times.size)) * np.sqrt(dt), axis=1)


def sample_bm(grid: TimeGrid, n_paths: int, seed: Optional[int], stream: int = 0, block: int = 0) -> PathBatch:
    """Brownian motion by independent Gaussian increments."""
    values = _brownian(grid.points, n_paths, stream_rng(seed, stream, block))
    return PathBatch(grid, values, "bm", seed, stream, block)


def sample_bm_normalized(grid: TimeGrid, n_paths: int, seed: Optional[int], stream: int = 0,
                         block: int = 0) -> PathBatch:
    if grid.points[0] <= 0.0:
        raise DomainError("normalized Brownian motion needs grid points > 0")
    batch = sample_bm(grid, n_paths, seed, stream, block)
    return PathBatch(grid, batch.values / np.sqrt(grid.points), "bm-normalized", seed, stream, block)


def _check_open(grid: TimeGrid, what: str) -> None:
    if grid.points[0] <= 0.0 or grid.points[-1] >= 1.0:
        raise DomainError(f"{what} grid must lie strictly inside (0, 1)")


def sample_bridge(grid: TimeGrid, n_paths: int, seed: Optional[int], stream: int = 0,
                  block: int = 0) -> PathBatch:
    """Normalized Brownian bridge B(t)/sqrt(t(1-t)) with B(t) = W(t) - t W(1)."""
    _check_open(grid, "bridge")
    t = grid.points
    w = _brownian(np.concatenate((t, [1.0])), n_paths, stream_rng(seed, stream, block))
    bridge = w[:, :-1] - t * w[:, -1:]
    return PathBatch(grid, bridge / np.sqrt(t * (1.0 - t)), "bridge", seed, stream, block)


def sample_bridge_time_change(grid: TimeGrid, n_paths: int, seed: Optional[int], stream: int = 0,
                              block: int = 0) -> PathBatch:
    """Normalized bridge from B(t) = (1 - t) W(t / (1 - t))."""
    _check_open(grid, "bridge")
    t = grid.points
    w = _brownian(t / (1.0 - t), n_paths, stream_rng(seed, stream, block))
    return PathBatch(grid, (1.0 - t) * w / np.sqrt(t * (1.0 - t)), "bridge-time-change", seed, stream, block)


def fbm_covariance(points: np.ndarray, H: float) -> np.ndarray:
    s, t = points[:, None], points[None, :]
    return 0.5 * (np.power(s, 2 * H) + np.power(t, 2 * H) - np.power(np.abs(t - s), 2 * H))


# grids whose Cholesky factors are kept
_FACTOR_CACHE_SIZE = 16


@lru_cache(maxsize=_FACTOR_CACHE_SIZE)
def _fbm_factor(H: float, points: bytes) -> Tuple[np.ndarray, bool]:
    """Cholesky factor of the fBm covariance and whether it needed the ridge."""
    pts = np.frombuffer(points)
    cov = fbm_covariance(pts, H)
    try:
        return linalg.cholesky(cov, lower=True), False
    except linalg.LinAlgError:
        pass
    try:
        return linalg.cholesky(cov + config.fbm_regularization * np.eye(pts.size), lower=True), True
    except linalg.LinAlgError:
        raise NumericalError(f"fBm covariance (H={H:g}) is numerically singular on this grid; "
                             f"thin the grid or move it away from 0")


def _dense_factor(points: np.ndarray, H: float, logger: ProcessingLogger) -> np.ndarray:
    factor, ridged = _fbm_factor(H, np.ascontiguousarray(points, dtype=float).tobytes())
    if ridged:
        logger.log_warning(f"fBm covariance not positive definite on {points.size} points; "
                           f"added {config.fbm_regularization:g} I")
    return factor


def _fgn_circulant(m: int, H: float, n_paths: int, rng: np.random.Generator,
                   logger: ProcessingLogger) -> Optional[np.ndarray]:
    """m steps of unit-spaced fractional Gaussian noise by circulant embedding."""
    k = np.arange(m + 1, dtype=float)
    gamma = 0.5 * (np.abs(k + 1) ** (2 * H) - 2.0 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))
    row = np.concatenate((gamma, gamma[-2:0:-1]))
    eigenvalues = np.fft.fft(row).real
    if eigenvalues.min() < -1e-10 * eigenvalues.max():
        logger.log_warning("circulant embedding is not nonnegative definite")
        return None
    scale = np.sqrt(np.maximum(eigenvalues, 0.0) / row.size)
    z = rng.standard_normal((n_paths, row.size)) + 1j * rng.standard_normal((n_paths, row.size))
    return np.fft.fft(scale * z, axis=1).real[:, :m]


def sample_fbm(grid: TimeGrid, H: float, n_paths: int, seed: Optional[int], stream: int = 0, block: int = 0,
               normalized: bool = False, method: str = "auto",
               logger: Optional[ProcessingLogger] = None) -> PathBatch:
    """Fractional Brownian motion B_H on the grid.

    Dense Cholesky (cached per grid) up to `fbm_dense_max` points; uniform
    grids h, 2h, ... may use circulant embedding of the increments. H = 1
    is the linear process t*Z.
    """
    logger = get_logger(logger)
    if not 0.0 < H <= 1.0:
        raise DomainError(f"Hurst index must lie in (0, 1], got {H}")
    rng = stream_rng(seed, stream, block)
    pts = grid.points
    if normalized and pts[0] <= 0.0:
        raise DomainError("normalized fBm needs grid points > 0")
    values = np.zeros((n_paths, pts.size))
    positive = pts > 0.0
    inner = pts[positive]
    if H == 1.0:
        values[:, positive] = rng.standard_normal((n_paths, 1)) * inner
    else:
        h = grid.uniform_step()
        use_circulant = method == "circulant" or (method == "auto" and inner.size > config.fbm_dense_max
                                                  and h is not None)
        block_values = None
        if use_circulant:
            if h is None:
                raise ConfigurationError("circulant fBm needs a grid of the form h, 2h, ..., mh")
            fgn = _fgn_circulant(inner.size, H, n_paths, rng, logger)
            if fgn is not None:
                block_values = np.cumsum(fgn, axis=1) * h ** H
        if block_values is None:
            if inner.size > config.fbm_dense_max:
                raise NumericalError(f"grid of {inner.size} points exceeds the dense fBm limit "
                                     f"({config.fbm_dense_max}); use a uniform grid")
            factor = _dense_factor(inner, H, logger)
            block_values = rng.standard_normal((n_paths, inner.size)) @ factor.T
        values[:, positive] = block_values
    if normalized:
        values = values / np.power(pts, H)
    return PathBatch(grid, values, "fbm-normalized" if normalized else "fbm", seed, stream, block)


def _stationary_factor(correlation: Callable, points: np.ndarray) -> np.ndarray:
    lags = np.abs(points[:, None] - points[None, :])
    cov = np.asarray(correlation(lags), dtype=float)
    if not np.all(np.isfinite(cov)):
        raise InputError("correlation returned non-finite values on the grid")
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        pass
    w, v = linalg.eigh(cov)
    top = max(w.max(), 1.0)
    if w.min() < -1e-10 * top:
        raise NumericalError(f"correlation is not positive semidefinite on the grid "
                             f"(smallest eigenvalue {w.min():.3g})")
    w = np.where(w < 1e-12 * top, 0.0, w)
    return v * np.sqrt(w)


@lru_cache(maxsize=_FACTOR_CACHE_SIZE)
def _cached_stationary_factor(cache_key: Hashable, points: bytes, correlation: Callable) -> np.ndarray:
    return _stationary_factor(correlation, np.frombuffer(points))


def sample_stationary(correlation: Callable, grid: TimeGrid, n_paths: int, seed: Optional[int],
                      stream: int = 0, block: int = 0, cache_key: Optional[Hashable] = None) -> PathBatch:
    """Unit-variance stationary Gaussian process with correlation r(|t - s|).

    The factor is cached per grid only when `cache_key` names the correlation.
    """
    if cache_key is None:
        factor = _stationary_factor(correlation, grid.points)
    else:
        points = np.ascontiguousarray(grid.points, dtype=float).tobytes()
        factor = _cached_stationary_factor(cache_key, points, correlation)
    rng = stream_rng(seed, stream, block)
    values = rng.standard_normal((n_paths, factor.shape[1])) @ factor.T
    return PathBatch(grid, values, "stationary", seed, stream, block)


def sample_ou(grid: TimeGrid, lam: float, n_paths: int, seed: Optional[int], stream: int = 0,
              block: int = 0) -> PathBatch:
    """Stationary OU with r(t) = exp(-lam |t|) by the exact AR(1) recursion."""
    if lam <= 0.0:
        raise DomainError(f"OU rate must be positive, got {lam}")
    rng = stream_rng(seed, stream, block)
    z = rng.standard_normal((n_paths, grid.size))
    rho = np.exp(-lam * np.diff(grid.points))
    innovation = np.sqrt(1.0 - rho * rho)
    values = np.empty_like(z)
    values[:, 0] = z[:, 0]
    for i in range(1, grid.size):
        values[:, i] = rho[i - 1] * values[:, i - 1] + innovation[i - 1] * z[:, i]
    return PathBatch(grid, values, "ou", seed, stream, block)


def sample_component(component: Component, grid: TimeGrid, n_paths: int, seed: Optional[int],
                     stream: int = 0, block: int = 0, logger: Optional[ProcessingLogger] = None) -> PathBatch:
    """Unit-variance sample of one catalog component."""
    process = component.process
    if process == "bridge":
        return sample_bridge(grid, n_paths, seed, stream, block)
    if process == "bm":
        return sample_bm_normalized(grid, n_paths, seed, stream, block)
    if process == "fbm":
        return sample_fbm(grid, component.params["H"], n_paths, seed, stream, block, normalized=True,
                          logger=logger)
    if process == "ou":
        return sample_ou(grid, component.params["lambda"], n_paths, seed, stream, block)
    if component.correlation is not None and process == "stationary":
        return sample_stationary(lambda lag: component.correlation(0.0, lag), grid, n_paths, seed, stream, block,
                                 cache_key=component.correlation)
    raise ConfigurationError(f"no sampler for component process {process!r}; use a catalog model")


# ---------------------------------------------------------------------------
# chi-square paths and suprema
# ---------------------------------------------------------------------------

def chi_square_path(model: ChiSquareModel, component_paths: Sequence[PathBatch]) -> PathBatch:
    """sum_i b_i^2 X_i(t)^2 over independent component batches."""
    if len(component_paths) != model.n:
        raise InputError(f"model has {model.n} components, got {len(component_paths)} batches")
    first = component_paths[0]
    for batch in component_paths[1:]:
        if batch.grid.size != first.grid.size or not np.array_equal(batch.grid.points, first.grid.points):
            raise InputError("component batches must share the grid")
        if batch.n_paths != first.n_paths:
            raise InputError("component batches must have the same number of paths")
    keys = [(b.seed, b.stream, b.block) for b in component_paths]
    if len(set(keys)) != len(keys):
        raise InputError("component batches must come from distinct random streams")
    total = np.zeros_like(first.values)
    for weight, batch in zip(model.b, component_paths):
        total += (weight * weight) * batch.values * batch.values
    return PathBatch(first.grid, total, f"chi-square:{model.name}", first.seed, -1, first.block)


def sample_model(model: ChiSquareModel, grid: TimeGrid, n_paths: int, seed: Optional[int], block: int = 0,
                 logger: Optional[ProcessingLogger] = None) -> PathBatch:
    """Chi-square batch with component i on stream i."""
    batches = [sample_component(comp, grid, n_paths, seed, stream=i, block=block, logger=logger)
               for i, comp in enumerate(model.components)]
    return chi_square_path(model, batches)


@dataclass
class SupResult:
    values: np.ndarray
    argmax: np.ndarray
    grid: TimeGrid

    def locations(self) -> np.ndarray:
        return self.grid.points[self.argmax]

    def histogram(self, bins: int = 20) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = float(self.grid.points[0]), float(self.grid.points[-1])
        return np.histogram(self.locations(), bins=bins, range=(lo, hi if hi > lo else lo + 1.0))


def sup_trend(batch: PathBatch, g: TrendFunction, columns: Optional[np.ndarray] = None) -> SupResult:
    """Per-path max over the grid of value - g(t); `columns` restricts to a subgrid."""
    trend = g.array(batch.grid.points)
    if not np.all(np.isfinite(trend)):
        raise DomainError(f"trend {g.name} is not finite on the grid")
    diff = batch.values - trend
    grid = batch.grid
    if columns is not None:
        diff = diff[:, columns]
        grid = TimeGrid(batch.grid.points[columns], batch.grid.kind, batch.grid.params)
    argmax = np.argmax(diff, axis=1)
    return SupResult(diff[np.arange(diff.shape[0]), argmax], argmax, grid)


# ---------------------------------------------------------------------------
# path dump
# ---------------------------------------------------------------------------

def dump_paths(batch: PathBatch, path: str, fmt: Optional[str] = None) -> Path:
    """Write a batch as little-endian float64 binary (with header) or CSV."""
    out = Path(path)
    fmt = fmt or ("csv" if out.suffix.lower() == ".csv" else "binary")
    out.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with out.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["t"] + [repr(float(t)) for t in batch.grid.points])
            for i, row in enumerate(batch.values):
                writer.writerow([i] + [repr(float(v)) for v in row])
        return out
    if fmt != "binary":
        raise InputError(f"unknown dump format {fmt!r}")
    rows, cols = batch.values.shape
    with out.open("wb") as handle:
        handle.write(_MAGIC)
        handle.write(struct.pack("<IQQ", _FORMAT_VERSION, rows, cols))
        handle.write(batch.grid.points.astype("<f8").tobytes())
        handle.write(np.ascontiguousarray(batch.values, dtype="<f8").tobytes())
    return out


def load_paths(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """(grid, values) from a file written by dump_paths."""
    source = Path(path)
    if source.suffix.lower() == ".csv":
        with source.open(newline="") as handle:
            rows = list(csv.reader(handle))
        grid = np.array([float(x) for x in rows[0][1:]])
        values = np.array([[float(x) for x in row[1:]] for row in rows[1:]])
        return grid, values.reshape(len(rows) - 1, grid.size)
    data = source.read_bytes()
    if data[:8] != _MAGIC:
        raise InputError(f"{path} is not a path dump")
    version, rows, cols = struct.unpack("<IQQ", data[8:28])
    if version != _FORMAT_VERSION:
        raise InputError(f"unsupported path dump version {version}")
    grid = np.frombuffer(data, dtype="<f8", count=cols, offset=28)
    values = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=28 + 8 * cols)
    return grid.copy(), values.reshape(rows, cols).copy()
