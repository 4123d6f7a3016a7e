"""
Monte-Carlo BER sweeps and the ``mpmhtsim`` command line.

Every trial draws a channel, random symbols and noise from its own
``(seed, snr index, trial index)`` stream, and every enabled detector sees the
same realization (paired comparison). Trials run in fixed-size batches; a
batch boundary is the only place the stop rule is evaluated, so results do
not depend on the number of worker threads.

Usage:
    mpmhtsim sweep CONFIG [--seed N] [--out PATH] [--threads N]
    mpmhtsim llrdump CONFIG [--seed N] [--out PATH] [--threads N]
    mpmhtsim selftest [--trials N]
"""

import argparse
import csv
import math
import pathlib
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__
from .channel import (
    ChannelRealization,
    RngStream,
    add_noise,
    draw_channel,
    draw_channel_conditioned,
    snr_to_sigma2,
    trial_stream,
)
from .debuglog import DebugLogger, get_logger
from .detect import (
    MAX_LAYERS,
    ORACLE_GUARD,
    PivotVariant,
    check_oracle_guard,
    detect_ml,
    detect_mpmht,
    detect_zf_qr,
    euclidean_metric,
)
from .errors import ConfigError, MpmhtError, OutputError, SingularChannel
from .modem import MODULATION_NAMES, SUPPORTED_ORDERS, Constellation, build_constellation
from .softout import LlrVector, ScalingKind, ScalingScheme, llr_oracle_ml, maxlog_llr, scale_llrs

# Singular draws tolerated per trial before giving up
MAX_SINGULAR_REDRAWS = 100
# One paired dominance check every this many trials
DOMINANCE_CHECK_EVERY = 100
DOMINANCE_TOLERANCE = 1e-9

CSV_COLUMNS = ("detector", "snr_db", "bits", "errors", "ber", "mismatch_ml", "mean_cond", "trials", "wall_s")
LLR_COLUMNS = ("snr_db", "trial", "layer", "bit", "llr_raw", "rank", "alpha", "llr_scaled", "llr_oracle")


class Detector(Enum):
    ML = "ml"
    ZFQR = "zfqr"
    MPMHT_CYCLIC = "mpmht_cyclic"
    MPMHT_FULL = "mpmht_full"

    @property
    def variant(self) -> Optional[PivotVariant]:
        return {
            Detector.MPMHT_CYCLIC: PivotVariant.CYCLIC,
            Detector.MPMHT_FULL: PivotVariant.FULL,
        }.get(self)


# -----------------------------------------------------------------------------
# Configuration
# -----------------------------------------------------------------------------

class SweepConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_t: int = Field(ge=1, le=MAX_LAYERS, description="Transmit layers")
    n_r: int = Field(ge=1, description="Receive antennas")
    order: int = Field(description="Constellation order (4, 16, 64, 256)")
    snr_db: List[float] = Field(description="Strictly increasing SNR grid in dB")
    detectors: List[Detector] = Field(
        default_factory=lambda: [Detector.ML, Detector.ZFQR, Detector.MPMHT_CYCLIC],
    )
    min_errors: int = Field(default=100, ge=1, description="Bit errors per detector before an SNR point stops")
    max_trials: int = Field(default=1_000_000, ge=1, le=2**40, description="Trial ids share 40 bits with the SNR index")
    seed: int = Field(default=1, ge=0, lt=2**64)
    min_cond: Optional[float] = Field(default=None, ge=1.0, description="Condition-number filter for channels")
    llr_scheme: ScalingScheme = Field(default_factory=ScalingScheme)
    llr_normalize: bool = False
    llr_clip: Optional[float] = Field(default=None, gt=0.0)
    llr_trials: int = Field(default=100, ge=1)
    workers: int = Field(default=1, ge=1)
    batch: int = Field(default=200, ge=1, description="Trials per deterministic batch")
    timing: bool = False
    out: str = "ber.csv"

    @field_validator("order")
    @classmethod
    def _supported_order(cls, v: int) -> int:
        if v not in SUPPORTED_ORDERS:
            raise ValueError(f"order must be one of {SUPPORTED_ORDERS}")
        return v

    @field_validator("snr_db")
    @classmethod
    def _increasing_grid(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("SNR grid is empty")
        if not all(math.isfinite(s) for s in v):
            raise ValueError("SNR values must be finite")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("SNR grid must be strictly increasing")
        return v

    @field_validator("detectors")
    @classmethod
    def _distinct_detectors(cls, v: List[Detector]) -> List[Detector]:
        if not v:
            raise ValueError("no detectors enabled")
        if len(set(v)) != len(v):
            raise ValueError("detectors listed more than once")
        return v

    @model_validator(mode="after")
    def _antenna_counts(self) -> "SweepConfig":
        if self.n_r < self.n_t:
            raise ValueError(f"nr ({self.n_r}) must be >= nt ({self.n_t})")
        return self

    @property
    def constellation(self) -> Constellation:
        return build_constellation(self.order)

    @property
    def ml_enabled(self) -> bool:
        return Detector.ML in self.detectors

    def check_oracle(self):
        """Raise ``OracleTooLarge`` if ML is enabled beyond the oracle guard."""
        if self.ml_enabled:
            check_oracle_guard(self.order, self.n_t)

    def with_overrides(self, **overrides) -> "SweepConfig":
        updates = {k: v for k, v in overrides.items() if v is not None}
        if not updates:
            return self
        try:
            return SweepConfig.model_validate({**self.model_dump(), **updates})
        except ValidationError as e:
            first = e.errors()[0]
            raise ConfigError(f"{'.'.join(str(p) for p in first['loc'])}: {first['msg']}") from None


# Config file key -> (SweepConfig field, value parser)
def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"{text!r} is not an integer")
        return int(value)


def _parse_optional_float(text: str) -> Optional[float]:
    if text.lower() in ("none", "off", ""):
        return None
    return float(text)


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _parse_modulation(text: str) -> int:
    lowered = text.lower()
    if lowered in MODULATION_NAMES:
        return MODULATION_NAMES[lowered]
    if lowered.isdigit():
        return int(lowered)
    raise ValueError(f"unknown modulation {text!r}; expected one of {sorted(MODULATION_NAMES)}")


def _parse_float_list(text: str) -> List[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _parse_detectors(text: str) -> List[str]:
    names = [part.strip().lower() for part in text.split(",") if part.strip()]
    known = {d.value for d in Detector}
    for name in names:
        if name not in known:
            raise ValueError(f"unknown detector {name!r}; expected one of {sorted(known)}")
    return names


def _parse_scale(text: str) -> str:
    lowered = text.lower()
    if lowered == "exponential":
        return ScalingKind.EXPONENTIAL.value
    if lowered not in {k.value for k in ScalingKind}:
        raise ValueError(f"unknown llr_scale {text!r}; expected none, linear or exp")
    return lowered


CONFIG_KEYS: Dict[str, Tuple[str, Callable[[str], object]]] = {
    "nt": ("n_t", _parse_int),
    "nr": ("n_r", _parse_int),
    "mod": ("order", _parse_modulation),
    "snr_db": ("snr_db", _parse_float_list),
    "detectors": ("detectors", _parse_detectors),
    "min_errors": ("min_errors", _parse_int),
    "max_trials": ("max_trials", _parse_int),
    "seed": ("seed", _parse_int),
    "min_cond": ("min_cond", _parse_optional_float),
    "llr_scale": ("kind", _parse_scale),
    "beta": ("beta", float),
    "gamma": ("gamma", float),
    "llr_normalize": ("llr_normalize", _parse_bool),
    "llr_clip": ("llr_clip", _parse_optional_float),
    "llr_trials": ("llr_trials", _parse_int),
    "workers": ("workers", _parse_int),
    "batch": ("batch", _parse_int),
    "timing": ("timing", _parse_bool),
    "out": ("out", str),
}
SCHEME_FIELDS = ("kind", "beta", "gamma")


def parse_config(text: str) -> SweepConfig:
    """Parse ``key = value`` lines (``#`` comments) into a validated config.

    Raises:
        ConfigError: unknown or repeated key, malformed value or violated
            invariant, naming the offending line where one exists.
    """
    values: Dict[str, object] = {}
    scheme: Dict[str, object] = {}
    lines: Dict[str, Tuple[int, str]] = {}

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=number, text=raw)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}", line=number, text=raw)
        target, parser = CONFIG_KEYS[key]
        if target in lines:
            raise ConfigError(f"key {key!r} repeated (first on line {lines[target][0]})", line=number, text=raw)
        try:
            parsed = parser(value)
        except ValueError as e:
            raise ConfigError(f"malformed value for {key!r}: {e}", line=number, text=raw) from None
        lines[target] = (number, raw)
        if target in SCHEME_FIELDS:
            scheme[target] = parsed
        else:
            values[target] = parsed

    if scheme:
        values["llr_scheme"] = scheme

    try:
        cfg = SweepConfig.model_validate(values)
    except ValidationError as e:
        first = e.errors()[0]
        loc = [str(p) for p in first["loc"]]
        name = loc[-1] if loc and loc[0] == "llr_scheme" and len(loc) > 1 else (loc[0] if loc else "")
        if first["type"] == "missing":
            raise ConfigError(f"missing required key for {name!r}") from None
        if not name:
            # Model-level invariant (antenna counts)
            name = "n_r"
        number, raw = lines.get(name, (None, None))
        raise ConfigError(f"{name}: {first['msg']}", line=number, text=raw) from None

    if cfg.min_errors < 100:
        get_logger().warning("CONFIG", "min_errors below 100; not suitable for acceptance runs", min_errors=cfg.min_errors)
    return cfg


def load_config(path: str) -> SweepConfig:
    try:
        text = pathlib.Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot read config ({e.strerror})", path=path) from None
    return parse_config(text)


# -----------------------------------------------------------------------------
# Results and CSV persistence
# -----------------------------------------------------------------------------

@dataclass
class BerRecord:
    detector: str
    snr_db: float
    bits: int
    errors: int
    ber: float
    mismatch_ml: Optional[int]
    mean_cond: float
    trials: int
    wall_s: float
    # Vector errors by number of layers in error (index 0 = one layer); not in the CSV
    error_layer_hist: Tuple[int, ...] = field(default=(), compare=False)


def _format_real(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(records: Sequence[BerRecord], path: str):
    """Header plus one row per record; reals with 17 significant digits."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in records:
                writer.writerow([
                    r.detector,
                    _format_real(r.snr_db),
                    r.bits,
                    r.errors,
                    _format_real(r.ber),
                    "" if r.mismatch_ml is None else r.mismatch_ml,
                    _format_real(r.mean_cond),
                    r.trials,
                    _format_real(r.wall_s),
                ])
    except OSError as e:
        raise OutputError(f"cannot write CSV ({e.strerror})", path=str(path)) from None


def read_csv(path: str) -> List[BerRecord]:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise OutputError(f"unexpected CSV header {reader.fieldnames}", path=str(path))
            return [
                BerRecord(
                    detector=row["detector"],
                    snr_db=float(row["snr_db"]),
                    bits=int(row["bits"]),
                    errors=int(row["errors"]),
                    ber=float(row["ber"]),
                    mismatch_ml=int(row["mismatch_ml"]) if row["mismatch_ml"] else None,
                    mean_cond=float(row["mean_cond"]),
                    trials=int(row["trials"]),
                    wall_s=float(row["wall_s"]),
                )
                for row in reader
            ]
    except OSError as e:
        raise OutputError(f"cannot read CSV ({e.strerror})", path=str(path)) from None


# -----------------------------------------------------------------------------
# Trial execution
# -----------------------------------------------------------------------------

@dataclass
class TrialDraw:
    channel: ChannelRealization
    symbols: np.ndarray
    y: np.ndarray
    qr_cache: dict = field(default_factory=dict)


def _draw_trial(cfg: SweepConfig, c: Constellation, gen: np.random.Generator, sigma2: float) -> TrialDraw:
    if cfg.min_cond is not None:
        channel = draw_channel_conditioned(gen, cfg.n_r, cfg.n_t, cfg.min_cond)
    else:
        channel = draw_channel(gen, cfg.n_r, cfg.n_t)
    symbols = gen.integers(0, c.order, size=cfg.n_t)
    y = add_noise(channel.H @ c.points[symbols], sigma2, gen)
    return TrialDraw(channel=channel, symbols=symbols, y=y)


def _with_redraw(cfg: SweepConfig, c: Constellation, stream: RngStream, trial: int, sigma2: float, evaluate):
    """Run ``evaluate(draw)``, redrawing from the same stream on singular channels."""
    attempts = 0
    for _ in range(MAX_SINGULAR_REDRAWS):
        draw = _draw_trial(cfg, c, stream.generator, sigma2)
        attempts += draw.channel.attempts
        try:
            return evaluate(draw), draw, attempts
        except SingularChannel as e:
            get_logger().singular_redraw(trial, e.column)
    raise SingularChannel(f"{MAX_SINGULAR_REDRAWS} singular draws in a row on {stream}")


@dataclass
class _Tally:
    """Counts for a run of trials; merged by addition."""

    detectors: Tuple[Detector, ...]
    n_t: int
    trials: int = 0
    cond_sum: float = 0.0
    attempts: int = 0
    violations: int = 0
    errors: Dict[Detector, int] = field(default_factory=dict)
    mismatch: Dict[Detector, int] = field(default_factory=dict)
    hist: Dict[Detector, np.ndarray] = field(default_factory=dict)
    seconds: Dict[Detector, float] = field(default_factory=dict)

    def __post_init__(self):
        for d in self.detectors:
            self.errors.setdefault(d, 0)
            self.mismatch.setdefault(d, 0)
            self.hist.setdefault(d, np.zeros(self.n_t, dtype=np.int64))
            self.seconds.setdefault(d, 0.0)

    def merge(self, other: "_Tally") -> "_Tally":
        self.trials += other.trials
        self.cond_sum += other.cond_sum
        self.attempts += other.attempts
        self.violations += other.violations
        for d in self.detectors:
            self.errors[d] += other.errors[d]
            self.mismatch[d] += other.mismatch[d]
            self.hist[d] += other.hist[d]
            self.seconds[d] += other.seconds[d]
        return self

    def min_errors(self) -> int:
        return min(self.errors.values())


def _detect(detector: Detector, draw: TrialDraw, c: Constellation) -> Tuple[int, ...]:
    H = draw.channel.H
    if detector is Detector.ML:
        return detect_ml(draw.y, H, c).symbols
    if detector is Detector.ZFQR:
        return detect_zf_qr(draw.y, H, c, qr_cache=draw.qr_cache).symbols
    hard, _ = detect_mpmht(draw.y, H, c, detector.variant, qr_cache=draw.qr_cache)
    return hard.symbols


def run_batch(cfg: SweepConfig, snr_index: int, sigma2: float, first_trial: int, count: int) -> _Tally:
    """Trials ``first_trial .. first_trial + count - 1`` of one SNR point."""
    c = cfg.constellation
    detectors = tuple(cfg.detectors)
    tally = _Tally(detectors=detectors, n_t=cfg.n_t)
    labels = c.bit_labels
    logger = get_logger()

    for trial in range(first_trial, first_trial + count):
        stream = trial_stream(cfg.seed, snr_index, trial)
        seconds: Dict[Detector, float] = {}

        def evaluate(draw: TrialDraw) -> Dict[Detector, Tuple[int, ...]]:
            decisions = {}
            for d in detectors:
                start = time.perf_counter()
                decisions[d] = _detect(d, draw, c)
                seconds[d] = time.perf_counter() - start
            return decisions

        decisions, draw, attempts = _with_redraw(cfg, c, stream, trial, sigma2, evaluate)
        tally.trials += 1
        tally.cond_sum += draw.channel.cond
        tally.attempts += attempts
        sent = draw.symbols
        ml_hat = decisions.get(Detector.ML)

        for d, hat in decisions.items():
            hat = np.asarray(hat, dtype=np.int64)
            tally.errors[d] += int(np.count_nonzero(labels[hat] != labels[sent]))
            wrong_layers = int(np.count_nonzero(hat != sent))
            if wrong_layers:
                tally.hist[d][wrong_layers - 1] += 1
            tally.seconds[d] += seconds[d]
            if ml_hat is not None and d is not Detector.ML and tuple(hat) != tuple(ml_hat):
                tally.mismatch[d] += 1

        if ml_hat is not None and trial % DOMINANCE_CHECK_EVERY == 0:
            ml_metric = euclidean_metric(draw.y, draw.channel.H, ml_hat, c)
            for d, hat in decisions.items():
                metric = euclidean_metric(draw.y, draw.channel.H, hat, c)
                if metric < ml_metric - DOMINANCE_TOLERANCE * max(1.0, ml_metric):
                    tally.violations += 1
                    logger.dominance_violation(d.value, trial, metric, ml_metric)
    return tally


def _batches(max_trials: int, batch: int) -> Iterator[Tuple[int, int]]:
    for start in range(0, max_trials, batch):
        yield start, min(batch, max_trials - start)


def _run_point(cfg: SweepConfig, snr_index: int, sigma2: float, executor: Optional[ThreadPoolExecutor]) -> Tuple[_Tally, str]:
    """Accumulate batches in order until the stop rule holds at a batch boundary."""
    total = _Tally(detectors=tuple(cfg.detectors), n_t=cfg.n_t)
    logger = get_logger()
    pending = list(_batches(cfg.max_trials, cfg.batch))
    wave = cfg.workers if executor is not None else 1
    batch_index = 0

    while pending:
        current, pending = pending[:wave], pending[wave:]
        if executor is not None:
            results = list(executor.map(lambda b: run_batch(cfg, snr_index, sigma2, *b), current))
        else:
            results = [run_batch(cfg, snr_index, sigma2, *b) for b in current]
        for tally in results:
            total.merge(tally)
            batch_index += 1
            logger.batch_merged(cfg.snr_db[snr_index], batch_index, total.trials,
                                {d.value: total.errors[d] for d in cfg.detectors})
            if total.min_errors() >= cfg.min_errors:
                return total, "min_errors"
    return total, "max_trials"


def run_ber_sweep(cfg: SweepConfig, progress: Optional[Callable[[List[BerRecord]], None]] = None) -> List[BerRecord]:
    """Paired BER sweep; records ordered by detector (config order), then SNR.

    Raises:
        OracleTooLarge: ML enabled beyond the oracle guard.
    """
    cfg.check_oracle()
    c = cfg.constellation
    logger = get_logger()
    logger.sweep_started(cfg.n_t, cfg.n_r, c.order, [d.value for d in cfg.detectors],
                         len(cfg.snr_db), cfg.workers, cfg.seed)

    per_detector: Dict[Detector, List[BerRecord]] = {d: [] for d in cfg.detectors}
    bits_per_trial = cfg.n_t * c.bits_per_symbol
    executor = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for snr_index, snr_db in enumerate(cfg.snr_db):
            sigma2 = snr_to_sigma2(snr_db, cfg.n_t)
            logger.snr_point_started(snr_db, sigma2)
            start = time.perf_counter()
            tally, reason = _run_point(cfg, snr_index, sigma2, executor)
            logger.snr_point_finished(snr_db, tally.trials, time.perf_counter() - start, reason)
            if cfg.min_cond is not None:
                logger.conditioned_draws(cfg.min_cond, tally.trials, tally.attempts)

            point: List[BerRecord] = []
            bits = tally.trials * bits_per_trial
            for d in cfg.detectors:
                record = BerRecord(
                    detector=d.value,
                    snr_db=float(snr_db),
                    bits=bits,
                    errors=tally.errors[d],
                    ber=tally.errors[d] / bits,
                    mismatch_ml=tally.mismatch[d] if cfg.ml_enabled else None,
                    mean_cond=tally.cond_sum / tally.trials,
                    trials=tally.trials,
                    wall_s=tally.seconds[d] if cfg.timing else 0.0,
                    error_layer_hist=tuple(int(v) for v in tally.hist[d]),
                )
                logger.info("RESULT", f"{d.value} at {snr_db:g} dB", ber=f"{record.ber:.4e}",
                            errors=record.errors, seconds=f"{tally.seconds[d]:.2f}",
                            layers_in_error=",".join(str(v) for v in record.error_layer_hist))
                per_detector[d].append(record)
                point.append(record)
            if progress is not None:
                progress(point)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    logger.resource_stats()
    return [r for d in cfg.detectors for r in per_detector[d]]


# -----------------------------------------------------------------------------
# LLR dump
# -----------------------------------------------------------------------------

@dataclass
class LlrRow:
    snr_db: float
    trial: int
    layer: int
    bit: int
    llr_raw: float
    rank: int
    alpha: float
    llr_scaled: float
    llr_oracle: Optional[float]


def _llr_variant(cfg: SweepConfig) -> PivotVariant:
    for d in cfg.detectors:
        if d.variant is not None:
            return d.variant
    return PivotVariant.CYCLIC


def _llr_trial(cfg: SweepConfig, snr_index: int, trial: int, sigma2: float, with_oracle: bool) -> List[LlrRow]:
    c = cfg.constellation
    variant = _llr_variant(cfg)
    norm = sigma2 if cfg.llr_normalize else None

    def evaluate(draw: TrialDraw) -> Tuple[LlrVector, Optional[LlrVector]]:
        _, candidates = detect_mpmht(draw.y, draw.channel.H, c, variant, qr_cache=draw.qr_cache)
        llrs = maxlog_llr(candidates, c, sigma2=norm, clip=cfg.llr_clip)
        if llrs.n_c >= 2:
            llrs = scale_llrs(llrs, llrs.n_c, cfg.llr_scheme)
        oracle = None
        if with_oracle:
            oracle = llr_oracle_ml(draw.y, draw.channel.H, c, sigma2, normalize=cfg.llr_normalize, clip=cfg.llr_clip)
        return llrs, oracle

    (llrs, oracle), _, _ = _with_redraw(cfg, c, trial_stream(cfg.seed, snr_index, trial), trial, sigma2, evaluate)
    rows = []
    for t in range(cfg.n_t):
        for b in range(c.bits_per_symbol):
            rows.append(LlrRow(
                snr_db=cfg.snr_db[snr_index],
                trial=trial,
                layer=t,
                bit=b,
                llr_raw=float(llrs.values[t, b]),
                rank=int(llrs.competitor_rank[t, b]),
                alpha=float(llrs.alpha[t, b]),
                llr_scaled=float(llrs.scaled[t, b]),
                llr_oracle=None if oracle is None else float(oracle.values[t, b]),
            ))
    return rows


def run_llr_dump(cfg: SweepConfig) -> List[LlrRow]:
    """MP-MHT soft outputs for ``llr_trials`` trials per SNR point (same trials as the sweep).

    Oracle LLRs are added when ``ml`` is enabled and the search fits the guard.
    """
    with_oracle = cfg.ml_enabled and cfg.order**cfg.n_t <= ORACLE_GUARD
    if cfg.ml_enabled and not with_oracle:
        get_logger().warning("LLR", "Oracle LLRs skipped: search space exceeds the guard",
                             search_size=cfg.order**cfg.n_t)
    jobs = [(i, trial) for i in range(len(cfg.snr_db)) for trial in range(cfg.llr_trials)]
    sigmas = [snr_to_sigma2(s, cfg.n_t) for s in cfg.snr_db]

    def work(job):
        i, trial = job
        return _llr_trial(cfg, i, trial, sigmas[i], with_oracle)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
            chunks = list(executor.map(work, jobs))
    else:
        chunks = [work(job) for job in jobs]
    return [row for chunk in chunks for row in chunk]


def write_llr_csv(rows: Sequence[LlrRow], path: str):
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(LLR_COLUMNS)
            for r in rows:
                writer.writerow([
                    _format_real(r.snr_db), r.trial, r.layer, r.bit,
                    _format_real(r.llr_raw), r.rank, _format_real(r.alpha), _format_real(r.llr_scaled),
                    "" if r.llr_oracle is None else _format_real(r.llr_oracle),
                ])
    except OSError as e:
        raise OutputError(f"cannot write LLR dump ({e.strerror})", path=str(path)) from None
    get_logger().llr_dump_written(str(path), len(rows))


# -----------------------------------------------------------------------------
# Self test: 2x2 oracle equivalence
# -----------------------------------------------------------------------------

SELFTEST_SNRS = (0.0, 10.0, 20.0)
SELFTEST_LLR_TOLERANCE = 1e-9


@dataclass
class SelftestResult:
    order: int
    snr_db: float
    trials: int
    hard_mismatches: int = 0
    worst_llr_gap: float = 0.0

    @property
    def passed(self) -> bool:
        return self.hard_mismatches == 0 and self.worst_llr_gap <= SELFTEST_LLR_TOLERANCE


def selftest_point(order: int, snr_db: float, trials: int, seed: int = 1) -> SelftestResult:
    """MP-MHT on 2x2 must reproduce ML hard decisions and max-log LLRs exactly."""
    c = build_constellation(order)
    sigma2 = snr_to_sigma2(snr_db, 2)
    result = SelftestResult(order=order, snr_db=snr_db, trials=trials)
    snr_index = SELFTEST_SNRS.index(snr_db) if snr_db in SELFTEST_SNRS else len(SELFTEST_SNRS)
    for trial in range(trials):
        gen = trial_stream(seed, (order << 8) | snr_index, trial).generator
        H = draw_channel(gen, 2, 2).H
        symbols = gen.integers(0, order, size=2)
        y = add_noise(H @ c.points[symbols], sigma2, gen)

        hard, candidates = detect_mpmht(y, H, c, PivotVariant.CYCLIC)
        if hard.symbols != detect_ml(y, H, c).symbols:
            result.hard_mismatches += 1
        gap = np.max(np.abs(maxlog_llr(candidates, c).values - llr_oracle_ml(y, H, c, sigma2).values))
        result.worst_llr_gap = max(result.worst_llr_gap, float(gap))
    return result


def run_selftest(trials: int = 10_000, trials_256: int = 1_000, seed: int = 1) -> List[SelftestResult]:
    results = []
    for order in SUPPORTED_ORDERS:
        n = trials_256 if order == 256 else trials
        for snr_db in SELFTEST_SNRS:
            result = selftest_point(order, snr_db, n, seed)
            mark = "✓" if result.passed else "✗"
            print(f"{mark} 2x2 order {order:3d} at {snr_db:4.0f} dB: {n} trials, "
                  f"{result.hard_mismatches} hard mismatches, worst LLR gap {result.worst_llr_gap:.2e}")
            results.append(result)
    return results


# -----------------------------------------------------------------------------
# Command line
# -----------------------------------------------------------------------------

def print_banner():
    print("mpmhtsim " + __version__)
    print("Multi-pivot MIMO detection: ML / ZF-QR / MP-MHT BER simulator")
    print("=" * 60)


def _print_point(records: List[BerRecord]):
    for r in records:
        mismatch = "" if r.mismatch_ml is None else f"  mismatch {r.mismatch_ml}"
        wrong = sum(r.error_layer_hist)
        single = f"  single-layer {r.error_layer_hist[0] / wrong:.0%}" if wrong else ""
        print(f"  {r.detector:<13} {r.snr_db:6.2f} dB  ber {r.ber:.4e}  errors {r.errors:>8}  "
              f"trials {r.trials:>8}{mismatch}{single}", flush=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpmhtsim",
        description="MIMO detection BER simulator (ML, ZF-QR, multi-pivot)",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    parser.add_argument("-v", "--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging to ~/.config/.mpmht/logs/")
    parser.add_argument("--log-dir", type=str, default=None, help="Directory for debug logs")

    subparsers = parser.add_subparsers(dest="command", metavar="")

    for name, help_text in (("sweep", "Run a BER sweep and write the CSV"),
                            ("llrdump", "Dump MP-MHT soft outputs to CSV")):
        sub = subparsers.add_parser(name, help=help_text, description=help_text)
        sub.add_argument("config", help="Sweep configuration file (key = value lines)")
        sub.add_argument("--seed", type=int, default=None, help="Override the config seed")
        sub.add_argument("--out", type=str, default=None, help="Override the output path")
        sub.add_argument("--threads", type=int, default=None, help="Worker threads (results do not depend on it)")

    selftest = subparsers.add_parser(
        "selftest",
        help="2x2 oracle-equivalence suite",
        description="Check MP-MHT against brute-force ML (hard and max-log soft) on 2x2 channels",
    )
    selftest.add_argument("--trials", type=int, default=10_000, help="Trials per order and SNR (default: 10000)")
    selftest.add_argument("--trials-256", type=int, default=1_000, help="Trials per SNR for 256-QAM (default: 1000; use --trials 500 --trials-256 100 for a quick smoke run)")
    selftest.add_argument("--seed", type=int, default=1, help="Seed (default: 1)")
    return parser


def _load_with_overrides(args) -> SweepConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, out=args.out, workers=args.threads)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        print_banner()
        parser.print_help()
        return 0

    if args.debug:
        logger = DebugLogger.initialize(enabled=True, log_dir=args.log_dir)
        print(f"✓ Debug logging enabled. Logs will be written to: {logger.log_dir}")

    try:
        if args.command == "sweep":
            cfg = _load_with_overrides(args)
            print(f"Sweep {cfg.n_r}x{cfg.n_t} {cfg.constellation.name}, "
                  f"detectors {','.join(d.value for d in cfg.detectors)}, seed {cfg.seed}, workers {cfg.workers}")
            records = run_ber_sweep(cfg, progress=_print_point)
            write_csv(records, cfg.out)
            print(f"✓ {len(records)} records written to {cfg.out}")
            return 0

        if args.command == "llrdump":
            cfg = _load_with_overrides(args)
            out = args.out or str(pathlib.Path(cfg.out).with_suffix(".llr.csv"))
            rows = run_llr_dump(cfg)
            write_llr_csv(rows, out)
            print(f"✓ {len(rows)} LLR rows written to {out}")
            return 0

        if args.command == "selftest":
            results = run_selftest(args.trials, args.trials_256, args.seed)
            failed = [r for r in results if not r.passed]
            if failed:
                print(f"✗ {len(failed)} of {len(results)} configurations failed")
                return 1
            print(f"✓ all {len(results)} configurations match the ML oracle")
            return 0
    except MpmhtError as e:
        print(f"Error: {e}", file=sys.stderr)
        get_logger().error("CLI", str(e), error_type=type(e).__name__)
        return e.exit_code
    except KeyboardInterrupt:
        print("\n\nKeyboard interrupt received. Shutting down...")
        return 130
    except Exception as e:
        print(f"\nAn unexpected error occurred: {e}", file=sys.stderr)
        get_logger().error("CLI", "Unexpected error", error=str(e), error_type=type(e).__name__)
        return 1

    parser.print_help()
    return 0
