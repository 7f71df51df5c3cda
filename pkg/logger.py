"""
Experiment Logging System
Timestamped progress lines on stderr, plus the metrics of the current run
"""

import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Optional, TextIO

_MARKS = {
    "section": "📋",
    "step": "🔄",
    "success": "✅",
    "warning": "⚠️ ",
    "error": "❌",
    "metric": "📊",
}


@dataclass
class Stopwatch:
    started: float
    elapsed: float = 0.0


class ProcessingLogger:
    """Logger shared by the runner and the numerical modules.

    Lines go to stderr unless quiet; stdout belongs to the JSON/CSV payload.
    Metrics logged during a run are also kept as values in `metrics`, which
    the runner copies into the manifest.
    """

    def __init__(self, quiet: Optional[bool] = None, stream: Optional[TextIO] = None):
        from config import config

        self.quiet = config.quiet if quiet is None else quiet
        self.stream = stream
        self.logs: List[str] = []
        self.metrics: Dict[str, Any] = {}
        self.callbacks: List[Callable[[str], None]] = []

    def log(self, message: str, kind: Optional[str] = None) -> None:
        timestamp = time.strftime('%H:%M:%S')
        mark = _MARKS.get(kind or "")
        formatted = f"[{timestamp}] {mark} {message}" if mark else f"[{timestamp}] {message}"
        self.logs.append(formatted)
        if not self.quiet:
            print(formatted, file=self.stream or sys.stderr)
        for callback in self.callbacks:
            try:
                callback(formatted)
            except Exception as e:
                print(f"[{timestamp}] Logger callback error: {e}", file=sys.stderr)

    def add_callback(self, callback: Callable[[str], None]) -> None:
        self.callbacks.append(callback)

    def get_logs(self) -> str:
        return "\n".join(self.logs)

    def get_recent_logs(self, count: int = 10) -> str:
        return "\n".join(self.logs[-count:]) if count > 0 else ""

    def clear(self) -> None:
        self.logs.clear()

    def start_run(self) -> None:
        """Forget the metrics of the previous run; the log text is kept."""
        self.metrics = {}

    def log_section(self, title: str) -> None:
        self.log("-" * 50)
        self.log(title, "section")

    def log_step(self, step: str, detail: str = "") -> None:
        self.log(f"{step}: {detail}" if detail else step, "step")

    def log_success(self, message: str) -> None:
        self.log(message, "success")

    def log_warning(self, message: str) -> None:
        self.log(message, "warning")

    def log_error(self, message: str) -> None:
        self.log(message, "error")

    def log_metric(self, name: str, value: Any) -> None:
        """Record a metric; floats are printed at 6 significant digits."""
        self.metrics[name] = value
        shown = f"{value:.6g}" if isinstance(value, float) else value
        self.log(f"{name}: {shown}", "metric")

    @contextmanager
    def timed(self, step: str) -> Iterator[Stopwatch]:
        """Log `step`, then its wall time when the block exits (also on error)."""
        self.log_step(step)
        watch = Stopwatch(time.perf_counter())
        try:
            yield watch
        finally:
            watch.elapsed = time.perf_counter() - watch.started
            self.log(f"{step} took {watch.elapsed:.3f}s")


_default_logger: Optional[ProcessingLogger] = None


def get_logger(logger: Optional[ProcessingLogger] = None) -> ProcessingLogger:
    """Return `logger` or a shared module-level logger."""
    global _default_logger
    if logger is not None:
        return logger
    if _default_logger is None:
        _default_logger = ProcessingLogger()
    return _default_logger
