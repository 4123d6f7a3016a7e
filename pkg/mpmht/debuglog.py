"""
Debug Logging System
====================

Semantic logger that writes ``key=value`` context lines to daily files and
echoes a short form to the console. Disabled unless initialized with
``enabled=True`` (the CLI does this for ``--debug``).
"""

import os
import pathlib
import platform
import sys
import threading
import time
from datetime import datetime
from typing import Dict, Optional, Sequence

from . import __version__

CONFIG_DIR = ".mpmht"


def get_config_dir() -> pathlib.Path:
    """Get the configuration directory path."""
    if platform.system() == "Windows":
        base = os.environ.get("LOCALAPPDATA", os.path.expanduser("~"))
    else:
        base = os.environ.get("XDG_CONFIG_HOME", os.path.expanduser("~/.config"))
    return pathlib.Path(base) / CONFIG_DIR


class DebugLogger:
    """Debug logger that writes semantic logs to daily files."""

    _instance: Optional["DebugLogger"] = None

    def __init__(self, enabled: bool = False, log_dir: Optional[str] = None, echo: bool = True):
        self.enabled = enabled
        self.echo = echo
        self.log_dir = pathlib.Path(log_dir) if log_dir else get_config_dir() / "logs"
        self._current_date: Optional[str] = None
        self._log_file: Optional[pathlib.Path] = None
        self._start_time = time.time()
        # Worker threads log concurrently during sweeps
        self._lock = threading.Lock()

        if self.enabled:
            self._ensure_log_dir()
            self._write_session_start()

    @classmethod
    def get_instance(cls) -> "DebugLogger":
        """Get the global debug logger instance."""
        if cls._instance is None:
            cls._instance = cls(enabled=False)
        return cls._instance

    @classmethod
    def initialize(cls, enabled: bool = False, log_dir: Optional[str] = None, echo: bool = True) -> "DebugLogger":
        """Initialize the global debug logger."""
        cls._instance = cls(enabled=enabled, log_dir=log_dir, echo=echo)
        return cls._instance

    def _ensure_log_dir(self):
        self.log_dir.mkdir(parents=True, exist_ok=True)

    def _get_log_file(self) -> pathlib.Path:
        """Get the current log file path, rotating by day."""
        today = datetime.now().strftime("%Y-%m-%d")
        if self._current_date != today:
            self._current_date = today
            self._log_file = self.log_dir / f"mpmht-{today}.log"
        return self._log_file

    def _format_timestamp(self) -> str:
        return datetime.now().strftime("%Y-%m-%d %H:%M:%S.%f")[:-3]

    def _write(self, level: str, category: str, message: str, **context):
        """Write a log entry."""
        if not self.enabled:
            return

        timestamp = self._format_timestamp()

        context_str = ""
        if context:
            context_parts = [f"{k}={v}" for k, v in context.items()]
            context_str = f" | {' | '.join(context_parts)}"

        log_line = f"[{timestamp}] [{level}] [{category}] {message}{context_str}\n"

        with self._lock:
            if self.echo:
                print(f"[DEBUG] [{category}] {message}", flush=True)
            try:
                with open(self._get_log_file(), "a", encoding="utf-8") as f:
                    f.write(log_line)
            except Exception as e:
                print(f"[DEBUG] Failed to write log: {e}")

    def _write_session_start(self):
        self._write("INFO", "SESSION", "=" * 60)
        self._write("INFO", "SESSION", "mpmht debug session started",
                    version=__version__,
                    platform=platform.system(),
                    python=sys.version.split()[0])
        self._write("INFO", "SESSION", "=" * 60)

    # High-level semantic logging methods
    def sweep_started(self, n_t: int, n_r: int, order: int, detectors: Sequence[str], snr_points: int, workers: int, seed: int):
        self._write("INFO", "SWEEP", f"Starting {n_r}x{n_t} sweep over {snr_points} SNR points",
                    order=order, detectors=",".join(detectors), workers=workers, seed=seed)

    def snr_point_started(self, snr_db: float, sigma2: float):
        self._write("INFO", "SWEEP", f"SNR point {snr_db:g} dB", sigma2=f"{sigma2:.6g}")

    def batch_merged(self, snr_db: float, batch_index: int, trials: int, errors: Dict[str, int]):
        """Log running error totals after a batch boundary."""
        totals = " ".join(f"{k}:{v}" for k, v in errors.items())
        self._write("DEBUG", "BATCH", f"Batch {batch_index} merged at {snr_db:g} dB",
                    trials=trials, errors=totals)

    def snr_point_finished(self, snr_db: float, trials: int, duration_seconds: float, stop_reason: str):
        self._write("INFO", "SWEEP", f"SNR point {snr_db:g} dB done after {trials} trials",
                    duration=f"{duration_seconds:.2f}s", stop=stop_reason)

    def conditioned_draws(self, min_cond: float, accepted: int, attempts: int):
        """Log the empirical acceptance rate of the conditioned channel sampler."""
        rate = accepted / attempts if attempts else 0.0
        self._write("INFO", "CHANNEL", f"Conditioned sampler acceptance {rate:.4%}",
                    min_cond=min_cond, accepted=accepted, attempts=attempts)

    def singular_redraw(self, trial: int, column: Optional[int]):
        self._write("WARN", "CHANNEL", "Singular channel drawn, redrawing", trial=trial, column=column)

    def dominance_violation(self, detector: str, trial: int, metric: float, ml_metric: float):
        self._write("ERROR", "CHECK", f"{detector} beat the ML oracle metric",
                    trial=trial, metric=f"{metric:.17g}", ml_metric=f"{ml_metric:.17g}")

    def llr_dump_written(self, path: str, rows: int):
        self._write("INFO", "OUTPUT", "LLR dump written", path=path, rows=rows)

    def error(self, category: str, message: str, **context):
        self._write("ERROR", category, message, **context)

    def warning(self, category: str, message: str, **context):
        self._write("WARN", category, message, **context)

    def info(self, category: str, message: str, **context):
        self._write("INFO", category, message, **context)

    def resource_stats(self):
        """Log current resource statistics."""
        uptime = time.time() - self._start_time
        stats = {
            "uptime_seconds": f"{uptime:.1f}",
            "thread_count": threading.active_count(),
        }

        try:
            import psutil
            process = psutil.Process()
            stats["memory_mb"] = f"{process.memory_info().rss / (1024 * 1024):.1f}"
            stats["cpu_count"] = psutil.cpu_count(logical=True)
        except ImportError:
            pass
        except Exception:
            pass

        self._write("INFO", "RESOURCES", "Resource statistics", **stats)


def get_logger() -> DebugLogger:
    """Current global logger (re-read on every call so ``initialize`` takes effect)."""
    return DebugLogger.get_instance()
