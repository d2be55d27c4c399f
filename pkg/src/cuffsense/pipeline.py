"""Session-level chain: polled records + EMG -> cycle ensemble."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .config import ToolkitConfig
from .daqbus import PolledRecord
from .segmentation import (
    CycleEnsemble,
    SessionCondition,
    detect_box_impacts,
    detect_trunk_peaks,
    extract_cycles,
)
from .signals import build_interface_force, process_muscle
from .synth import Session
from .trace import SignalTrace, Unit


def traces_from_records(records: Sequence[PolledRecord], rate_hz: float) -> dict[str, SignalTrace]:
    if not records:
        raise ValueError("no polled records")
    arr = np.asarray(records, dtype=float)
    t0 = arr[0, 0] / 1e6
    return {
        "left_counts": SignalTrace(arr[:, 1], rate_hz, Unit.COUNTS, "left", t0),
        "right_counts": SignalTrace(arr[:, 2], rate_hz, Unit.COUNTS, "right", t0),
        "trunk": SignalTrace(arr[:, 3], rate_hz, Unit.DEGREE, "trunk", t0),
        "trunk_velocity": SignalTrace(arr[:, 4], rate_hz, Unit.DEGREE_PER_SECOND, "trunk_velocity", t0),
    }


@dataclass(frozen=True)
class ProcessResult:
    ensemble: CycleEnsemble
    peaks_s: np.ndarray
    impacts_s: np.ndarray
    traces: Mapping[str, SignalTrace]


def process_streams(records: Sequence[PolledRecord], emg: Mapping[str, SignalTrace],
                    box_magnitude: SignalTrace | None, assistance: SignalTrace | None,
                    cfg: ToolkitConfig = ToolkitConfig(),
                    condition: SessionCondition = SessionCondition(), jobs: int = 1) -> ProcessResult:
    """Conversion, EMG conditioning and segmentation for one session.

    ``emg`` maps ``esl_l``/``esl_r``/``esi_l``/``esi_r`` to raw millivolt
    traces; muscles with a missing side are skipped.
    """
    seg = cfg.segmentation
    sig = cfg.signal
    exo = traces_from_records(records, cfg.daq.poll_rate_hz)
    traces: dict[str, SignalTrace] = {
        "if": build_interface_force(exo["left_counts"], exo["right_counts"],
                                    cfg.daq.cell("left"), cfg.daq.cell("right")),
    }
    if assistance is not None:
        traces["ra"] = assistance
    traces["trunk"] = exo["trunk"]

    muscles = [m for m in ("esl", "esi") if f"{m}_l" in emg and f"{m}_r" in emg]

    def run(m):
        return process_muscle(emg[f"{m}_l"], emg[f"{m}_r"], sig.mvc(f"{m}_l"), sig.mvc(f"{m}_r"),
                              sig.filter_spec(), sig.ma_window_s, label=m)

    if jobs > 1 and len(muscles) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            envelopes = list(pool.map(run, muscles))
    else:
        envelopes = [run(m) for m in muscles]
    traces.update(zip(muscles, envelopes))

    peaks = detect_trunk_peaks(exo["trunk"], seg.cadence_cpm, seg.peak_gate())
    impacts = (detect_box_impacts(box_magnitude, seg.impact_k_std, seg.impact_refractory_s)
               if box_magnitude is not None else np.empty(0))
    ensemble = extract_cycles(peaks, traces, seg.cadence_cpm, seg.n_cycles, seg.duration_gate(),
                              seg.grid_points, impacts, condition)
    return ProcessResult(ensemble, peaks, impacts, traces)


def emg_traces_from_session(session: Session) -> dict[str, SignalTrace]:
    rate = float(session.n_emg / session.spec.duration_s)
    return {k: SignalTrace(v, rate, Unit.MILLIVOLT, k) for k, v in session.emg.items()}


def analyze_session(session: Session, cfg: ToolkitConfig = ToolkitConfig(), jobs: int = 1) -> ProcessResult:
    """Simulate acquisition for ``session`` and run the chain in memory."""
    records = session.poll(cfg.daq.topology()).records
    cond = SessionCondition(session.spec.subject, session.spec.load_kg > 0)
    return process_streams(records, emg_traces_from_session(session), session.box_magnitude_trace(),
                           session.assistance_trace(), cfg, cond, jobs)
