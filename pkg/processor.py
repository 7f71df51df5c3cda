"""
Experiment Runner
Runs one CLI command from a RunConfig and writes its artifacts and manifest
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import numpy as np

from admissibility import APPLICABLE, assess
from asymptotics import approximation_for, closed_form, critical_value
from config import VERSION, RunConfig, config
from errors import InputError, ToolkitError, exit_code_for
from gof import evaluate, read_sample
from logger import ProcessingLogger
from model import ChiSquareModel, Interval, TrendFunction, build_model, parse_model_id, parse_trend_id
from montecarlo import (adjudicate_bessel, compare, default_grid, estimate_pickands, estimate_tail,
                        slepian_check)
from simulate import dump_paths, sample_model
from utils import parse_interval

RANDOMIZED = {"mc", "pickands", "compare", "slepian"}


@dataclass
class ExperimentResult:
    """Outcome of one command: the machine-readable body plus bookkeeping."""
    content: str
    payload: Dict[str, Any] = field(default_factory=dict)
    output_file: Optional[str] = None
    manifest_file: Optional[str] = None
    status: str = "pending"
    success: bool = False
    exit_code: int = 0
    processing_time: float = 0.0
    content_type: str = "json"


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return str(value)


def to_json(payload: Dict[str, Any]) -> str:
    return json.dumps(_finite(payload), indent=2, default=_json_default)


def _finite(value):
    """Replace non-finite floats by None so the output stays strict JSON."""
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class ExperimentRunner:
    """Dispatches RunConfig commands to the library and saves their outputs."""

    def __init__(self, logger: Optional[ProcessingLogger] = None):
        self.logger = logger or ProcessingLogger()
        config.validate()
        self.handlers: Dict[str, Callable[[RunConfig], ExperimentResult]] = {
            "approx": self.run_approx,
            "admissible": self.run_admissible,
            "mc": self.run_mc,
            "pickands": self.run_pickands,
            "critical": self.run_critical,
            "gof": self.run_gof,
            "compare": self.run_compare,
            "slepian": self.run_slepian,
        }

    # ------------------------------------------------------------------
    # model construction
    # ------------------------------------------------------------------

    def _interval(self, run: RunConfig) -> Optional[Interval]:
        if not run.interval:
            return None
        lo, hi, closed_lo, closed_hi = parse_interval(run.interval)
        return Interval(lo, hi, closed_lo, closed_hi)

    def _model(self, run: RunConfig, model_id: Optional[str] = None) -> ChiSquareModel:
        return build_model(model_id or run.model or "custom", run.b or None, self._interval(run),
                           run.c, run.alpha, run.params, run.kernel_scale, run.beta)

    def _trend(self, run: RunConfig) -> TrendFunction:
        return parse_trend_id(run.trend)

    def _threads(self, run: RunConfig) -> int:
        return run.threads or config.threads

    # ------------------------------------------------------------------
    # commands
    # ------------------------------------------------------------------

    def run_approx(self, run: RunConfig) -> ExperimentResult:
        model, g = self._model(run), self._trend(run)
        if run.u is None:
            raise InputError("approx needs --u")
        approx = approximation_for(model, g, pickands=run.pickands, logger=self.logger)
        payload = {"approximation": approx.to_dict(run.u)}
        reference = self._closed_form(model, g, run.u, run.pickands)
        if reference is not None:
            case, value = reference
            ratio = value / payload["approximation"]["value"] if payload["approximation"]["value"] else None
            payload["closed_form"] = {"case": case, "value": value, "ratio": ratio}
            if ratio is not None and abs(ratio - 1.0) > 1e-6:
                payload["closed_form"]["note"] = (
                    f"DISCREPANCY: the closed form is {ratio:.6g} times the general-formula value")
                self.logger.log_warning(payload["closed_form"]["note"])
        self.logger.log_metric("Tail approximation", payload["approximation"]["value"])
        return ExperimentResult(to_json(payload), payload)

    def _closed_form(self, model: ChiSquareModel, g: TrendFunction, u: float, pickands: Optional[float] = None):
        """Matching catalog closed form, when the model has one."""
        name = model.name.split(":")[0]
        full = (model.interval.lo, model.interval.hi) == (0.0, 1.0)
        if model.b != (1.0,) * model.n:
            return None
        if name == "bridge" and model.n == 1 and g.name.startswith("gnu:"):
            nu = float(g.name.split(":")[1])
            interval = model.interval if not full else None
            return "bridge-gnu", closed_form("bridge-gnu", {"nu": nu, "interval": interval}, u)
        if name == "fbm" and model.n == 1 and full:
            H = model.components[0].params["H"]
            return "fbm", closed_form("fbm", {"H": H, "g": g, "pickands": pickands}, u)
        if name == "mixed" and full:
            return "mixed", closed_form("mixed", {"H": model.components[2].params["H"], "g": g}, u)
        if name == "bessel":
            return "bessel", closed_form("bessel", {"n": model.n, "g": g, "interval": model.interval}, u)
        return None

    def run_admissible(self, run: RunConfig) -> ExperimentResult:
        model, g = self._model(run), self._trend(run)
        report = assess(model, g, eta=run.eta, logger=self.logger)
        payload = report.to_dict()
        code = 0 if report.overall == APPLICABLE else 2
        return ExperimentResult(to_json(payload), payload, exit_code=code)

    def run_mc(self, run: RunConfig) -> ExperimentResult:
        if run.experiment == "bessel-factor":
            result = adjudicate_bessel(run.n, run.paths, run.seed, p_target=run.p or 1e-3,
                                       threads=self._threads(run), logger=self.logger)
            payload = result.to_dict()
            return ExperimentResult(to_json(payload), payload)
        if run.experiment:
            raise InputError(f"unknown experiment {run.experiment!r}; known: bessel-factor")
        model, g = self._model(run), self._trend(run)
        if run.u is None:
            raise InputError("mc needs --u")
        estimate = estimate_tail(model, g, run.u, run.paths, run.seed, threads=self._threads(run),
                                 truncation=run.truncation, mesh_fraction=run.mesh_fraction,
                                 refuse_below_floor=True, logger=self.logger)
        payload = estimate.to_dict()
        if run.dump:
            grid = default_grid(model, run.u, run.truncation, run.mesh_fraction)
            batch = sample_model(model, grid, min(run.paths, config.block_size), run.seed, logger=self.logger)
            payload["dump"] = str(dump_paths(batch, run.dump))
        return ExperimentResult(to_json(payload), payload)

    def run_pickands(self, run: RunConfig) -> ExperimentResult:
        if run.alpha is None:
            raise InputError("pickands needs --alpha")
        method = run.method if run.method in ("ratio", "truncated") else "ratio"
        estimate = estimate_pickands(run.alpha, run.horizon, run.mesh or 0.01, run.paths, run.seed, method,
                                     self._threads(run), self.logger)
        if run.save:
            config.save_pickands_estimate(run.save, run.alpha, estimate.value, estimate.ci_low, estimate.ci_high)
            self.logger.log_success(f"Pickands estimate saved to {run.save}")
        payload = estimate.to_dict()
        return ExperimentResult(to_json(payload), payload)

    def run_critical(self, run: RunConfig) -> ExperimentResult:
        if run.p is None:
            raise InputError("critical needs --p")
        model, g = self._model(run), self._trend(run)
        value = critical_value(model, g, run.p, run.u_min, pickands=run.pickands, logger=self.logger)
        payload = value.to_dict()
        return ExperimentResult(to_json(payload), payload)

    def run_gof(self, run: RunConfig) -> ExperimentResult:
        if not run.input:
            raise InputError("gof needs --input (a path or - for stdin)")
        sample = read_sample(run.input, run.column)
        result = evaluate(sample, 1.0 if run.nu is None else run.nu, run.method, self.logger)
        payload = result.to_dict()
        return ExperimentResult(to_json(payload), payload)

    def run_compare(self, run: RunConfig) -> ExperimentResult:
        model, g = self._model(run), self._trend(run)
        table = compare(model, g, run.u_list, run.paths, run.seed, self._threads(run), run.truncation,
                        run.mesh_fraction, run.pickands, self.logger)
        self.logger.log_metric("Ratio trend toward 1 visible", table.trend_visible)
        return ExperimentResult(table.to_csv(), table.to_dict(), content_type="csv")

    def run_slepian(self, run: RunConfig) -> ExperimentResult:
        if not run.model_y or run.u is None:
            raise InputError("slepian needs --model, --model-y and --u")
        model_x = parse_model_id(run.model, run.b or None, self._interval(run))
        model_y = parse_model_id(run.model_y, run.b or None, self._interval(run))
        report = slepian_check(model_x, model_y, run.u, run.paths, run.seed, g=self._trend(run),
                               threads=self._threads(run), logger=self.logger)
        payload = report.to_dict()
        return ExperimentResult(to_json(payload), payload)

    # ------------------------------------------------------------------
    # entry point
    # ------------------------------------------------------------------

    def run(self, run: RunConfig, save: bool = True) -> ExperimentResult:
        """Run one command; errors become a failed result with their exit code."""
        self.logger.log_section(f"Command: {run.command}")
        self.logger.start_run()
        handler = self.handlers.get(run.command)
        with self.logger.timed(run.command) as watch:
            try:
                if handler is None:
                    raise InputError(f"unknown command {run.command!r}")
                if run.command in RANDOMIZED and run.seed is None:
                    raise InputError(f"{run.command} is randomized: pass --seed")
                result = handler(run)
                result.success = result.exit_code == 0
                result.status = "Complete" if result.success else "Complete (nonzero verdict)"
            except (ToolkitError, ValueError, FileNotFoundError) as e:
                self.logger.log_error(str(e))
                payload = {"error": type(e).__name__, "message": str(e),
                           "details": getattr(e, "details", {}) or {}}
                report = getattr(e, "report", None)
                if report is not None:
                    payload["admissibility"] = report.to_dict()
                result = ExperimentResult(to_json(payload), payload, status="Error", exit_code=exit_code_for(e))
        result.processing_time = watch.elapsed
        if save:
            self._save_outputs(result, run)
        return result

    def replay(self, manifest_path: str, save: bool = True) -> ExperimentResult:
        """Re-run the configuration stored in a manifest."""
        path = Path(manifest_path)
        if not path.exists():
            raise InputError(f"manifest not found: {manifest_path}")
        with path.open("r", encoding="utf-8") as f:
            manifest = json.load(f)
        run = RunConfig(**manifest["config"])
        if run.version != VERSION:
            self.logger.log_warning(f"manifest written by version {run.version}, running {VERSION}")
        return self.run(run, save)

    def _run_id(self, run: RunConfig) -> str:
        body = json.dumps(run.model_dump(), sort_keys=True, default=str)
        return hashlib.md5(body.encode("utf-8")).hexdigest()[:8]

    def _save_outputs(self, result: ExperimentResult, run: RunConfig) -> ExperimentResult:
        """Write the artifact and a manifest echoing the full configuration."""
        try:
            out_dir = Path(run.output_dir or config.output_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            base = f"{run.command}_{self._run_id(run)}"

            ext = ".csv" if result.content_type == "csv" else ".json"
            output_file = out_dir / f"{base}{ext}"
            with open(output_file, "w", encoding="utf-8") as f:
                f.write(result.content)
            result.output_file = str(output_file)

            manifest = {
                "version": VERSION,
                "config": run.model_dump(),
                "status": result.status,
                "exit_code": result.exit_code,
                "output_file": result.output_file,
                "processing_time": result.processing_time,
                "metrics": _finite(self.logger.metrics),
            }
            manifest_file = out_dir / f"{base}.manifest.json"
            with open(manifest_file, "w", encoding="utf-8") as f:
                json.dump(manifest, f, indent=2, default=_json_default)
            result.manifest_file = str(manifest_file)

            self.logger.log_success(f"Outputs saved: {output_file}")

        except OSError as e:
            self.logger.log_error(f"Failed to save outputs: {e}")

        return result
