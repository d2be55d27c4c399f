"""FX29 compact load cell: count-to-force conversion and static verification.

The cell reports a 14-bit digital word.  Force in pounds-force follows

    F = (O - Z) * R / 14000

with ``O`` the raw output, ``Z`` the zero offset and ``R`` the rated range,
and is reported here in newtons.
"""
from __future__ import annotations

import csv
import enum
import io
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    InsufficientDataError,
    OutOfRangeError,
    ParseError,
    StaleDataError,
    UnstableZeroWarning,
)
from .trace import SignalTrace

LBF_TO_N = 4.44822
STANDARD_GRAVITY = 9.80665
COUNTS_SPAN = 14000
DATA_BITS = 14
# below-zero readings tolerated as cuff lift-off before flagging a fault
NEGATIVE_SLACK_COUNTS = 200
ZERO_STD_LIMIT_COUNTS = 50.0


class Condition(str, enum.Enum):
    BARE = "bare"
    CUSHION = "cushion"


@dataclass(frozen=True)
class LoadCellConfig:
    full_scale_lbf: float = 100.0
    zero_offset_counts: int = 1000
    counts_span: int = COUNTS_SPAN
    condition: Condition = Condition.BARE

    def __post_init__(self):
        if not self.full_scale_lbf > 0:
            raise ValueError("full_scale_lbf must be positive")
        if self.counts_span != COUNTS_SPAN:
            raise ValueError(f"counts_span must be {COUNTS_SPAN}")
        z = self.zero_offset_counts
        if int(z) != z:
            raise ValueError("zero_offset_counts must be an integer")
        object.__setattr__(self, "zero_offset_counts", int(z))
        # Z + span must fit the 14-bit data field
        if not 0 <= z <= 2**DATA_BITS - COUNTS_SPAN:
            raise ValueError(
                f"zero_offset_counts must lie in [0, {2**DATA_BITS - COUNTS_SPAN}]"
            )
        object.__setattr__(self, "condition", Condition(self.condition))

    @property
    def newtons_per_count(self) -> float:
        return self.full_scale_lbf / self.counts_span * LBF_TO_N

    @property
    def full_scale_n(self) -> float:
        return self.full_scale_lbf * LBF_TO_N

    @property
    def valid_counts(self) -> tuple[int, int]:
        z = self.zero_offset_counts
        return z - NEGATIVE_SLACK_COUNTS, z + self.counts_span + NEGATIVE_SLACK_COUNTS


class RawSample(NamedTuple):
    channel: int
    timestamp_us: int
    counts: int
    status: int = 0


def counts_to_force(raw, cfg: LoadCellConfig):
    """Convert raw counts (scalar or array) to newtons.

    Raises:
        OutOfRangeError: a reading falls outside ``[Z - 200, Z + 14200]``;
            ``index`` carries the offending position for array input.
    """
    arr = np.asarray(raw)
    lo, hi = cfg.valid_counts
    bad = (arr < lo) | (arr > hi)
    if np.any(bad):
        if arr.ndim == 0:
            raise OutOfRangeError(
                f"raw count {int(arr)} outside [{lo}, {hi}] (saturated or disconnected)"
            )
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise OutOfRangeError(
            f"raw count {arr.ravel()[idx]} at sample {idx} outside [{lo}, {hi}]",
            index=idx,
        )
    force = (arr - cfg.zero_offset_counts) * (cfg.full_scale_lbf / cfg.counts_span) * LBF_TO_N
    if arr.ndim == 0:
        return float(force)
    return force.astype(float)


def force_to_counts(force_n, cfg: LoadCellConfig):
    """Nearest integer reading for a force in newtons (no range check)."""
    counts = np.rint(np.asarray(force_n, dtype=float) / cfg.newtons_per_count)
    counts = counts.astype(np.int64) + cfg.zero_offset_counts
    if counts.ndim == 0:
        return int(counts)
    return counts


def expected_force(mass_kg: float) -> float:
    return mass_kg * STANDARD_GRAVITY


def error_percent(mean_force_n: float, mass_kg: float) -> float:
    expected = expected_force(mass_kg)
    return 100.0 * (mean_force_n - expected) / expected


class ZeroEstimate(NamedTuple):
    counts: int
    std_counts: float


def estimate_zero_offset(unloaded: SignalTrace) -> ZeroEstimate:
    """Zero offset as the rounded mean of an unloaded window of at least 1 s."""
    if unloaded.duration_s < 1.0:
        raise InsufficientDataError(
            f"zero-offset window is {unloaded.duration_s:.3f} s; need at least 1 s"
        )
    samples = unloaded.samples
    std = float(np.std(samples))
    if std > ZERO_STD_LIMIT_COUNTS:
        warnings.warn(
            f"unloaded trace std {std:.1f} counts exceeds {ZERO_STD_LIMIT_COUNTS:g}",
            UnstableZeroWarning,
            stacklevel=2,
        )
    # round half away from zero, not banker's rounding
    mean = float(np.mean(samples))
    return ZeroEstimate(int(math.floor(mean + 0.5)), std)


@dataclass(frozen=True)
class LoadStat:
    load_mass_kg: float
    mean_force_n: float
    std_force_n: float
    error_percent: float


@dataclass(frozen=True)
class CalibrationRecord:
    config: LoadCellConfig
    per_load: tuple[LoadStat, ...]
    trials: int
    trial_duration_s: float

    CSV_HEADER = ("load_kg", "mean_N", "std_N", "error_pct", "condition", "trials", "trial_s")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_HEADER)
        for s in self.per_load:
            writer.writerow([
                f"{s.load_mass_kg:g}",
                f"{s.mean_force_n:.6f}",
                f"{s.std_force_n:.6f}",
                f"{s.error_percent:.6f}",
                self.config.condition.value,
                self.trials,
                f"{self.trial_duration_s:g}",
            ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, config: LoadCellConfig | None = None, path=None):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != cls.CSV_HEADER:
            raise ParseError(f"expected header {','.join(cls.CSV_HEADER)}", path, 1)
        stats, conditions, trials, trial_s = [], set(), set(), set()
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != len(cls.CSV_HEADER):
                raise ParseError(f"expected {len(cls.CSV_HEADER)} fields, got {len(row)}", path, lineno)
            try:
                load, mean, std, err = (float(v) for v in row[:4])
                conditions.add(Condition(row[4]))
                trials.add(int(row[5]))
                trial_s.add(float(row[6]))
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
            if std < 0:
                raise ParseError("negative std_N", path, lineno)
            stats.append(LoadStat(load, mean, std, err))
        if len(conditions) > 1 or len(trials) > 1 or len(trial_s) > 1:
            raise ParseError("condition, trials and trial_s must be constant", path)
        cfg = config or LoadCellConfig()
        if conditions:
            cfg = LoadCellConfig(cfg.full_scale_lbf, cfg.zero_offset_counts,
                                 cfg.counts_span, conditions.pop())
        return cls(cfg, tuple(stats), trials.pop() if trials else 0,
                   trial_s.pop() if trial_s else 0.0)


# (mass_kg, condition, mean_N, std_N, error_pct) as published
PUBLISHED_CALIBRATION = (
    (1, Condition.BARE, 9.25, 0.030, -5.75),
    (2, Condition.BARE, 19.48, 0.007, -0.70),
    (3, Condition.BARE, 29.53, 0.009, 0.33),
    (4, Condition.BARE, 38.82, 0.012, -1.06),
    (5, Condition.BARE, 48.57, 0.003, -0.98),
    (6, Condition.BARE, 57.79, 0.030, -1.82),
    (1, Condition.CUSHION, 9.59, 0.005, -2.24),
    (2, Condition.CUSHION, 19.65, 0.005, 0.15),
    (3, Condition.CUSHION, 29.64, 0.003, 0.73),
    (4, Condition.CUSHION, 39.04, 0.012, -0.51),
    (5, Condition.CUSHION, 48.81, 0.006, -0.48),
    (6, Condition.CUSHION, 58.32, 0.014, -0.93),
)

STANDARD_WEIGHTS_KG = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)


def _as_counts(samples, mass_kg, trial):
    counts = []
    for s in samples:
        if isinstance(s, RawSample):
            if s.status:
                raise StaleDataError(
                    f"status {s.status:02b} while sampling {mass_kg} kg, trial {trial}",
                    status=s.status,
                )
            counts.append(s.counts)
        else:
            counts.append(int(s))
    return np.asarray(counts, dtype=np.int64)


def run_verification(
    weights_kg: Sequence[float],
    trials: int,
    trial_s: float,
    cfg: LoadCellConfig,
    source: Callable[[float, int], Iterable],
    rate_hz: float = 500.0,
) -> CalibrationRecord:
    """Static-weight verification: place each weight for ``trials`` trials.

    ``source(mass_kg, trial)`` (trials numbered from 1) yields raw counts or :class:`RawSample`
    values for one trial; the first ``trial_s * rate_hz`` samples are used.
    Statistics pool every trial's samples per load.
    """
    if not weights_kg:
        raise ValueError("weights_kg must not be empty")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    need = int(round(trial_s * rate_hz))
    stats = []
    for mass in weights_kg:
        pooled = []
        for trial in range(1, trials + 1):
            it = iter(source(mass, trial))
            chunk = _as_counts((s for _, s in zip(range(need), it)), mass, trial)
            if chunk.size < need:
                raise InsufficientDataError(
                    f"source underrun for {mass} kg, trial {trial}: "
                    f"{chunk.size} of {need} samples"
                )
            pooled.append(counts_to_force(chunk, cfg))
        forces = np.concatenate(pooled)
        mean = float(np.mean(forces))
        std = float(np.std(forces, ddof=1)) if forces.size > 1 else 0.0
        stats.append(LoadStat(float(mass), mean, std, error_percent(mean, mass)))
    return CalibrationRecord(cfg, tuple(stats), trials, float(trial_s))
