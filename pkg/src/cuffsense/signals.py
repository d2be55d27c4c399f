"""EMG conditioning and interface-force trace construction.

The EMG chain runs, in order: band-pass, linear detrend plus full-wave
rectification, centered moving average, MVC normalization, and left/right
averaging.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import InvalidBandError, InvalidMVCError, OutOfRangeError, ShapeMismatchError
from .fx29 import LoadCellConfig, counts_to_force
from .trace import SignalTrace, Unit

EMG_RATE_HZ = 2000.0
MOVING_AVERAGE_S = 0.2


@dataclass(frozen=True)
class FilterSpec:
    order: int = 4
    band_low_hz: float = 10.0
    band_high_hz: float = 400.0

    def check(self, rate_hz: float) -> None:
        nyquist = rate_hz / 2
        if not 0 < self.band_low_hz < self.band_high_hz:
            raise InvalidBandError(
                f"band {self.band_low_hz}-{self.band_high_hz} Hz is not increasing and positive"
            )
        if self.band_high_hz >= nyquist:
            raise InvalidBandError(
                f"upper edge {self.band_high_hz} Hz at or above Nyquist {nyquist} Hz"
            )
        if self.order < 1:
            raise InvalidBandError("filter order must be >= 1")

    def design(self, rate_hz: float) -> np.ndarray:
        """Second-order sections; ``order`` is the low-pass prototype order."""
        self.check(rate_hz)
        return signal.butter(self.order, [self.band_low_hz, self.band_high_hz],
                             btype="bandpass", fs=rate_hz, output="sos")


def _require_samples(trace: SignalTrace, minimum: int = 1) -> None:
    if len(trace) < minimum:
        raise ValueError(f"trace {trace.label!r} needs at least {minimum} samples")


def butterworth_bandpass(trace: SignalTrace, spec: FilterSpec = FilterSpec()) -> SignalTrace:
    """Zero-phase (forward-backward) Butterworth band-pass; length preserved."""
    _require_samples(trace)
    sos = spec.design(trace.rate_hz)
    x = trace.samples
    # sosfiltfilt needs more than 3 * (2 * n_sections + 1) samples of padding
    padlen = min(3 * (2 * sos.shape[0] + 1), max(x.size - 1, 0))
    y = signal.sosfiltfilt(sos, x, padlen=padlen)
    return trace.with_samples(y)


def detrend_rectify(trace: SignalTrace) -> SignalTrace:
    _require_samples(trace, 2)
    y = signal.detrend(trace.samples, type="linear")
    return trace.with_samples(np.abs(y), rectified=True)


def window_samples(window_s: float, rate_hz: float) -> int:
    """Window length rounded to samples and forced odd (400 -> 401)."""
    w = int(round(window_s * rate_hz))
    if w < 1:
        raise ValueError("moving-average window shorter than one sample")
    return w if w % 2 else w + 1


def moving_average(trace: SignalTrace, window_s: float = MOVING_AVERAGE_S) -> SignalTrace:
    """Centered box average; the window shrinks at the edges."""
    _require_samples(trace)
    x = trace.samples
    half = window_samples(window_s, trace.rate_hz) // 2
    n = x.size
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    y = (csum[hi] - csum[lo]) / (hi - lo)
    # cumulative-sum round-off must not push a mean outside the data range
    y = np.clip(y, x.min(), x.max())
    return trace.with_samples(y)


def mvc_normalize(trace: SignalTrace, mvc_value: float) -> SignalTrace:
    if not mvc_value > 0:
        raise InvalidMVCError(f"MVC reference must be positive, got {mvc_value}")
    return trace.with_samples(trace.samples / mvc_value, unit=Unit.NORMALIZED_MVC)


def _check_pair(left: SignalTrace, right: SignalTrace) -> None:
    if len(left) != len(right) or left.rate_hz != right.rate_hz:
        raise ShapeMismatchError(
            f"{left.label!r} ({len(left)} @ {left.rate_hz} Hz) vs "
            f"{right.label!r} ({len(right)} @ {right.rate_hz} Hz)"
        )


def average_bilateral(left: SignalTrace, right: SignalTrace, label: str | None = None) -> SignalTrace:
    _check_pair(left, right)
    return left.with_samples(0.5 * (left.samples + right.samples),
                             label=label if label is not None else left.label)


def emg_envelope(trace: SignalTrace, mvc_value: float, spec: FilterSpec = FilterSpec(),
                 window_s: float = MOVING_AVERAGE_S) -> SignalTrace:
    """Steps (filter, detrend+rectify, smooth, normalize) for one channel."""
    y = butterworth_bandpass(trace, spec)
    y = detrend_rectify(y)
    y = moving_average(y, window_s)
    return mvc_normalize(y, mvc_value)


def process_muscle(left: SignalTrace, right: SignalTrace, mvc_left: float, mvc_right: float,
                   spec: FilterSpec = FilterSpec(), window_s: float = MOVING_AVERAGE_S,
                   label: str = "") -> SignalTrace:
    """Full five-step chain for one bilateral muscle pair."""
    _check_pair(left, right)
    return average_bilateral(emg_envelope(left, mvc_left, spec, window_s),
                             emg_envelope(right, mvc_right, spec, window_s), label=label)


def build_interface_force(left_counts: SignalTrace, right_counts: SignalTrace,
                          cfg_left: LoadCellConfig, cfg_right: LoadCellConfig) -> SignalTrace:
    """Convert both cuffs to newtons and average them into one IF trace."""
    _check_pair(left_counts, right_counts)
    forces = []
    for side, trace, cfg in (("left", left_counts, cfg_left), ("right", right_counts, cfg_right)):
        try:
            forces.append(counts_to_force(trace.samples, cfg))
        except OutOfRangeError as exc:
            raise OutOfRangeError(f"{side} cuff: {exc.args[0]}", index=exc.index) from None
    return SignalTrace(0.5 * (forces[0] + forces[1]), left_counts.rate_hz, Unit.NEWTON,
                       label="IF", t0_s=left_counts.t0_s)
