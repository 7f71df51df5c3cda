# config.py
"""
Chi-square Tail Toolkit Configuration
Centralized numeric protocol constants and per-run settings
"""

import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

if not os.getenv("CHISQ_NO_DOTENV"):
    try:
        from dotenv import load_dotenv
        load_dotenv()
    except ImportError:
        pass

VERSION = "1.0.0"


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or not value.strip():
        return default
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {value!r}")


@dataclass
class Config:
    """Centralized configuration for asymptotics, admissibility and simulation."""

    # Quadrature
    quad_rel_tol: float = 1e-8
    quad_abs_tol: float = 1e-14
    f_rel_tol: float = 1e-12
    quad_limit: int = 200

    # Endpoint divergence detector (iterated-log clock)
    divergence_tol: float = 1e-10
    divergence_windows: int = 60
    clock_z_max: float = 690.0
    tail_fit_points: int = 40
    tail_fit_span: float = 16.0
    tail_exponent_margin: float = 5e-3

    # Heterogeneous angular quadrature
    gl_order: int = field(default_factory=lambda: _env_int("CHISQ_GL_ORDER", 64))
    max_quadrature_dim: int = 5
    angular_mc_samples: int = 1_000_000

    # Root finding
    bisection_tol: float = 1e-10
    inverse_rel_tol: float = 1e-12
    critical_u_min: float = 4.0

    # Pickands constants for alpha outside {1, 2}: alpha -> (value, ci_low, ci_high)
    pickands_table_path: Optional[str] = field(
        default_factory=lambda: os.getenv("CHISQ_PICKANDS_TABLE")
    )
    pickands_estimates: Dict[float, Tuple[float, float, float]] = field(default_factory=dict)

    # Simulation
    fbm_regularization: float = 1e-12
    fbm_dense_max: int = 8192
    block_size: int = field(default_factory=lambda: _env_int("CHISQ_BLOCK_SIZE", 10_000))
    mesh_fraction: float = 0.2

    # Monte Carlo
    mc_min_paths: int = 10_000
    mc_p_floor: float = 1e-5
    confidence_z: float = 1.959963984540054

    # Admissibility protocol
    check_a_points: int = 10_000
    check_b_grid: int = 200
    check_b_j_max: int = 200
    check_d_windows: int = 12
    eta_power_kernel: float = 0.0
    eta_default: float = 0.01

    # Output
    output_dir: str = field(default_factory=lambda: os.getenv("CHISQ_OUTPUT_DIR", "outputs"))
    quiet: bool = field(default_factory=lambda: os.getenv("CHISQ_QUIET", "") not in ("", "0"))

    def __post_init__(self):
        if self.pickands_table_path and os.path.exists(self.pickands_table_path):
            self.load_pickands_table(self.pickands_table_path)

    @property
    def threads(self) -> int:
        """Default worker count from CHISQ_THREADS, else the CPU count."""
        return max(1, _env_int("CHISQ_THREADS", os.cpu_count() or 1))

    def load_pickands_table(self, path: str) -> None:
        """Load Pickands estimates written by `run.py pickands --save`."""
        with open(path, "r", encoding="utf-8") as f:
            table = json.load(f)
        for key, entry in table.items():
            self.pickands_estimates[float(key)] = (
                float(entry["value"]), float(entry["ci_low"]), float(entry["ci_high"])
            )

    def save_pickands_estimate(self, path: str, alpha: float, value: float,
                               ci_low: float, ci_high: float) -> None:
        table = {}
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as f:
                table = json.load(f)
        table[repr(float(alpha))] = {"value": value, "ci_low": ci_low, "ci_high": ci_high}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(table, f, indent=2)
        self.pickands_estimates[float(alpha)] = (value, ci_low, ci_high)

    def validate(self) -> bool:
        """Validate configuration settings."""
        try:
            if self.quad_rel_tol <= 0 or self.divergence_tol <= 0:
                raise ValueError("quadrature tolerances must be positive")
            if self.gl_order < 2:
                raise ValueError(f"gl_order must be >= 2, got {self.gl_order}")
            if not 0 < self.mesh_fraction <= 1:
                raise ValueError("mesh_fraction must lie in (0, 1]")
            if self.block_size < 1:
                raise ValueError("block_size must be positive")
            if self.clock_z_max > 700:
                raise ValueError("clock_z_max beyond 700 overflows the endpoint clock")
            return True
        except ValueError as e:
            print(f"Configuration validation error: {e}")
            return False


class RunConfig(BaseModel):
    """Serializable description of one CLI run; the body of every manifest."""

    command: str
    model: Optional[str] = None
    model_y: Optional[str] = None
    b: List[float] = Field(default_factory=list)
    c: Optional[str] = None
    params: Optional[str] = None
    kernel_scale: float = 1.0
    beta: float = 0.0
    trend: Optional[str] = None
    interval: Optional[str] = None
    u: Optional[float] = None
    u_list: List[float] = Field(default_factory=list)
    p: Optional[float] = None
    nu: Optional[float] = None
    alpha: Optional[float] = None
    horizon: float = 50.0
    mesh: Optional[float] = None
    mesh_fraction: Optional[float] = None
    pickands: Optional[float] = None
    u_min: Optional[float] = None
    paths: int = 100_000
    seed: Optional[int] = None
    threads: Optional[int] = None
    truncation: float = 1e-3
    eta: Optional[float] = None
    experiment: Optional[str] = None
    n: int = 1
    input: Optional[str] = None
    column: Optional[int] = None
    method: str = "interval"
    save: Optional[str] = None
    dump: Optional[str] = None
    output_dir: Optional[str] = None
    version: str = VERSION
    extra: Dict[str, Any] = Field(default_factory=dict)


config = Config()
