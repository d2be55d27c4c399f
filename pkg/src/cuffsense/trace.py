"""Uniform-rate time series container used across the processing chain."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np


class Unit(str, enum.Enum):
    NEWTON = "N"
    MILLIVOLT = "mV"
    NORMALIZED_MVC = "MVC"
    DEGREE = "deg"
    DEGREE_PER_SECOND = "deg/s"
    METERS_PER_SECOND2 = "m/s^2"
    COUNTS = "counts"
    NEWTON_METER = "N*m"


@dataclass(frozen=True, eq=False)
class SignalTrace:
    """Samples on a uniform clock starting at ``t0_s``.

    ``rectified`` records that a rectification step has been applied; the
    unit tag itself only changes on normalization.
    """

    samples: np.ndarray
    rate_hz: float
    unit: Unit
    label: str = ""
    t0_s: float = 0.0
    rectified: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1:
            raise ValueError(f"trace {self.label!r} must be one-dimensional")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        if not self.rate_hz > 0:
            raise ValueError(f"trace {self.label!r}: rate_hz must be positive")
        object.__setattr__(self, "unit", Unit(self.unit))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate_hz

    @property
    def times(self) -> np.ndarray:
        return self.t0_s + np.arange(self.samples.size) / self.rate_hz

    def with_samples(self, samples, **changes) -> "SignalTrace":
        return replace(self, samples=np.asarray(samples, dtype=float), **changes)
