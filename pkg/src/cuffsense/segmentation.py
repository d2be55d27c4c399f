"""Lifting-cycle segmentation on trunk-angle peaks and box-impact events."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import signal

from .errors import InsufficientCyclesError, ParseError
from .trace import SignalTrace

GRID_POINTS = 101
N_CYCLES = 10

# trace key -> ensemble CSV column
PROFILE_COLUMNS = {"if": "if_N", "ra": "ra", "trunk": "trunk_deg", "esl": "esl", "esi": "esi"}
ENSEMBLE_HEADER = ("cycle", "grid_pct") + tuple(PROFILE_COLUMNS.values())


@dataclass(frozen=True)
class PeakGate:
    min_separation_frac: float = 0.6
    prominence_frac: float = 0.2
    # zero-phase low-pass before peak picking, as a multiple of the cadence
    smoothing_harmonics: float = 5.0


@dataclass(frozen=True)
class DurationGate:
    low_frac: float = 0.5
    high_frac: float = 1.5


def nominal_period_s(cadence_cpm: float) -> float:
    return 60.0 / cadence_cpm


def detect_trunk_peaks(trunk_angle: SignalTrace, cadence_cpm: float = 6.0,
                       gate: PeakGate = PeakGate()) -> np.ndarray:
    """Times (s) of peak trunk flexion, in order.

    The angle is low-passed at ``smoothing_harmonics`` x cadence with a
    zero-phase filter so sensor noise does not move the maxima.  Peaks must
    be ``min_separation_frac`` periods apart and stand out by
    ``prominence_frac`` of the raw angle range.
    """
    period = nominal_period_s(cadence_cpm)
    x = trunk_angle.samples
    fs = trunk_angle.rate_hz
    if trunk_angle.duration_s < 2 * period:
        raise InsufficientCyclesError(
            f"trunk trace covers {trunk_angle.duration_s:.1f} s, need two periods ({2 * period:.1f} s)"
        )
    span = float(np.ptp(x))
    if span <= 1e-9 * max(1.0, float(np.max(np.abs(x)))):
        raise InsufficientCyclesError("trunk angle is constant; no flexion peaks")
    cutoff = gate.smoothing_harmonics * cadence_cpm / 60.0
    if cutoff < fs / 2:
        sos = signal.butter(2, cutoff, btype="lowpass", fs=fs, output="sos")
        x = signal.sosfiltfilt(sos, x)
    distance = max(1, int(round(gate.min_separation_frac * period * fs)))
    peaks, _ = signal.find_peaks(x, distance=distance, prominence=gate.prominence_frac * span)
    if peaks.size < 2:
        raise InsufficientCyclesError(f"found {peaks.size} trunk peak(s); need at least 2")
    return trunk_angle.t0_s + peaks / fs


def acceleration_magnitude(ax, ay, az) -> np.ndarray:
    return np.sqrt(np.square(ax) + np.square(ay) + np.square(az))


def detect_box_impacts(box_accel: SignalTrace, k_std: float = 6.0,
                       refractory_s: float = 0.5) -> np.ndarray:
    """Onset times (s) where |a| exceeds mean + k*std, one per refractory window."""
    a = box_accel.samples
    if a.size == 0:
        return np.empty(0)
    threshold = a.mean() + k_std * a.std()
    above = np.flatnonzero(a > threshold)
    events = []
    dead = int(round(refractory_s * box_accel.rate_hz))
    last = None
    for i in above:
        if last is None or i - last >= dead:
            events.append(i)
            last = i
    return box_accel.t0_s + np.asarray(events, dtype=float) / box_accel.rate_hz


@dataclass(frozen=True, eq=False)
class LiftCycle:
    """One peak-to-peak epoch resampled onto the 0-100 % grid."""

    grid: np.ndarray
    profiles: Mapping[str, np.ndarray]
    source_span: tuple[int, int]
    impacts_pct: tuple[float, ...] = ()

    @property
    def if_profile(self) -> np.ndarray:
        return self.profiles["if"]

    @property
    def ra_profile(self) -> np.ndarray:
        return self.profiles["ra"]

    @property
    def emg_profiles(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.profiles.items() if k in ("esl", "esi")}

    @property
    def duration_s(self) -> float:
        return (self.source_span[1] - self.source_span[0]) / 1e6


@dataclass(frozen=True)
class SessionCondition:
    subject: str = "S1"
    loaded: bool = False
    technique: str = "stoop"

    @property
    def load_label(self) -> str:
        return "w" if self.loaded else "wo"


@dataclass(frozen=True, eq=False)
class CycleEnsemble:
    cycles: tuple[LiftCycle, ...]
    condition: SessionCondition = field(default_factory=SessionCondition)

    def __post_init__(self):
        spans = [c.source_span for c in self.cycles]
        for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
            if s1 < e0:
                raise ValueError("ensemble cycles overlap or are out of order")

    def __len__(self):
        return len(self.cycles)

    def series(self, key: str) -> np.ndarray:
        """Concatenation of one profile across cycles."""
        return np.concatenate([c.profiles[key] for c in self.cycles])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ENSEMBLE_HEADER)
        for ci, cyc in enumerate(self.cycles):
            cols = [cyc.profiles.get(k) for k in PROFILE_COLUMNS]
            for gi, pct in enumerate(cyc.grid):
                w.writerow([ci, f"{pct:g}"] + ["" if c is None else repr(float(c[gi])) for c in cols])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, condition: SessionCondition = SessionCondition(), path=None) -> "CycleEnsemble":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or tuple(header) != ENSEMBLE_HEADER:
            raise ParseError(f"expected header {','.join(ENSEMBLE_HEADER)}", path, 1)
        rows: dict[int, list] = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(ENSEMBLE_HEADER):
                raise ParseError(f"expected {len(ENSEMBLE_HEADER)} fields, got {len(row)}", path, lineno)
            try:
                ci = int(row[0])
                vals = [float(v) if v != "" else np.nan for v in row[1:]]
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
            rows.setdefault(ci, []).append(vals)
        cycles = []
        for ci in sorted(rows):
            arr = np.asarray(rows[ci])
            profiles = {k: arr[:, j + 1] for j, k in enumerate(PROFILE_COLUMNS)
                        if not np.all(np.isnan(arr[:, j + 1]))}
            # source spans are not part of the CSV; keep cycle order only
            cycles.append(LiftCycle(arr[:, 0], profiles, (ci, ci + 1)))
        return cls(tuple(cycles), condition)


def _resample(trace: SignalTrace, start_s: float, end_s: float, grid: np.ndarray) -> np.ndarray:
    t = start_s + (end_s - start_s) * grid / 100.0
    pos = (t - trace.t0_s) * trace.rate_hz
    return np.interp(pos, np.arange(len(trace)), trace.samples)


def extract_cycles(peaks_s: Sequence[float], traces: Mapping[str, SignalTrace],
                   cadence_cpm: float = 6.0, n_cycles: int = N_CYCLES,
                   gate: DurationGate = DurationGate(), grid_points: int = GRID_POINTS,
                   impacts_s: Sequence[float] = (), condition: SessionCondition = SessionCondition(),
                   ) -> CycleEnsemble:
    """Cut peak-to-peak spans and resample every trace onto a common grid.

    Each trace is interpolated at its own rate, which aligns the 500 Hz
    exoskeleton stream with the 2000 Hz EMG.  The first run of ``n_cycles``
    consecutive spans that pass the duration gate and lie inside every trace
    becomes the ensemble.
    """
    peaks = np.asarray(peaks_s, dtype=float)
    period = nominal_period_s(cadence_cpm)
    grid = np.linspace(0.0, 100.0, grid_points)
    impacts = np.asarray(impacts_s, dtype=float)
    coverage = [(tr.t0_s, tr.t0_s + (len(tr) - 1) / tr.rate_hz) for tr in traces.values()]
    lo_cov = max((c[0] for c in coverage), default=-np.inf)
    hi_cov = min((c[1] for c in coverage), default=np.inf)

    rejected = []
    run: list[LiftCycle] = []
    for i, (start, end) in enumerate(zip(peaks[:-1], peaks[1:])):
        dur = end - start
        reason = None
        if dur < gate.low_frac * period:
            reason = f"duration {dur:.2f} s below {gate.low_frac:g} x {period:g} s"
        elif dur > gate.high_frac * period:
            reason = f"duration {dur:.2f} s above {gate.high_frac:g} x {period:g} s"
        elif start < lo_cov or end > hi_cov:
            reason = "span outside trace coverage"
        if reason:
            rejected.append((i, float(start), float(end), reason))
            run = []
            continue
        profiles = {k: _resample(tr, start, end, grid) for k, tr in traces.items()}
        inside = impacts[(impacts >= start) & (impacts < end)]
        run.append(LiftCycle(grid, profiles,
                             (int(round(start * 1e6)), int(round(end * 1e6))),
                             tuple(100.0 * (inside - start) / dur)))
        if len(run) == n_cycles:
            return CycleEnsemble(tuple(run), condition)
    raise InsufficientCyclesError(
        f"needed {n_cycles} consecutive valid cycles from {max(peaks.size - 1, 0)} spans; "
        f"rejected: {rejected if rejected else 'none'}",
        rejected=rejected,
    )


def ensemble_mean(ensemble: CycleEnsemble) -> tuple[LiftCycle, dict[str, np.ndarray]]:
    """Gridwise mean cycle plus the matching gridwise standard deviations."""
    if len(ensemble) == 0:
        raise InsufficientCyclesError("empty ensemble")
    keys = ensemble.cycles[0].profiles.keys()
    stacks = {k: np.stack([c.profiles[k] for c in ensemble.cycles]) for k in keys}
    mean = LiftCycle(
        ensemble.cycles[0].grid,
        {k: s.mean(axis=0) for k, s in stacks.items()},
        (ensemble.cycles[0].source_span[0], ensemble.cycles[-1].source_span[1]),
    )
    return mean, {k: s.std(axis=0) for k, s in stacks.items()}
