"""On-disk artifact formats: session directories, EMG CSV, ensemble sidecars."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import polars as pl

from . import __version__
from .daqbus import SERIAL_FIELDS, export_serial_log, parse_serial_log
from .errors import ParseError
from .segmentation import SessionCondition
from .synth import ACCEL_COLUMNS, EMG_COLUMNS
from .trace import SignalTrace, Unit

MANIFEST = "manifest.json"
SERIAL_LOG = "serial.log"
EMG_CSV = "emg.csv"
TRUTH = "truth.json"
ENSEMBLE_CSV = "ensemble.csv"
ENSEMBLE_META = "ensemble.json"
REPORT_CSV = "report.csv"

EMG_HEADER = ("t_s",) + EMG_COLUMNS + ACCEL_COLUMNS
EMG_UNITS = {"t_s": "s", **{c: "mV" for c in EMG_COLUMNS}, **{c: "m/s^2" for c in ACCEL_COLUMNS}}


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_serial_log(path: Path, records, rate_hz: int, baud: int) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.writelines(export_serial_log(records, rate_hz, baud))


def read_serial_log(path: Path):
    with open(path, encoding="ascii") as fh:
        return parse_serial_log(fh, path=path)


def write_emg_csv(path: Path, t_s: np.ndarray, columns: dict[str, np.ndarray]) -> None:
    frame = pl.DataFrame({"t_s": t_s, **{c: columns[c] for c in EMG_HEADER[1:]}})
    frame.write_csv(path, float_precision=6, line_terminator="\n")


def read_emg_csv(path: Path, rate_hz: float) -> tuple[dict[str, SignalTrace], SignalTrace]:
    """Raw EMG traces (mV) and the box acceleration magnitude (m/s^2)."""
    try:
        frame = pl.read_csv(path, infer_schema_length=0)
    except Exception as exc:  # polars raises several unrelated types
        raise ParseError(str(exc).splitlines()[0], path) from None
    if tuple(frame.columns) != EMG_HEADER:
        raise ParseError(f"expected header {','.join(EMG_HEADER)}", path, 1)
    cols = {}
    for name in EMG_HEADER:
        try:
            cols[name] = frame[name].cast(pl.Float64, strict=True).to_numpy()
        except Exception:
            bad = frame.with_row_index().filter(
                frame[name].cast(pl.Float64, strict=False).is_null())["index"]
            line = int(bad[0]) + 2 if len(bad) else None
            raise ParseError(f"non-numeric value in column {name}", path, line) from None
    t = cols["t_s"]
    if t.size < 2:
        raise ParseError("EMG file holds fewer than two samples", path)
    step = np.diff(t)
    bad = np.flatnonzero(np.abs(step - 1.0 / rate_hz) > 0.25 / rate_hz)
    if bad.size:
        raise ParseError(f"t_s is not uniform at {rate_hz:g} Hz", path, int(bad[0]) + 3)
    emg = {c: SignalTrace(cols[c], rate_hz, Unit.MILLIVOLT, c, float(t[0])) for c in EMG_COLUMNS}
    mag = np.sqrt(cols["box_ax"] ** 2 + cols["box_ay"] ** 2 + cols["box_az"] ** 2)
    return emg, SignalTrace(mag, rate_hz, Unit.METERS_PER_SECOND2, "box", float(t[0]))


def read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from None


def assistance_from_truth(truth: dict, path=None) -> SignalTrace | None:
    block = truth.get("commanded_assistance") or {}
    if not block:
        return None
    try:
        return SignalTrace(np.asarray(block["values"], dtype=float), float(block["rate_hz"]),
                           Unit(block.get("unit", Unit.NEWTON_METER.value)), "ra",
                           float(block.get("t0_s", 0.0)))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"commanded_assistance: {exc}", path) from None


def manifest_for(spec, cfg, files: dict[str, str]) -> dict:
    return {
        "tool": "cuffsense",
        "version": __version__,
        "seed": spec.seed,
        "spec": spec.to_dict(),
        "config": cfg.to_dict(),
        "serial_fields": list(SERIAL_FIELDS),
        "emg_units": EMG_UNITS,
        "files": files,
    }


def condition_to_dict(cond: SessionCondition) -> dict:
    return {"subject": cond.subject, "loaded": cond.loaded, "technique": cond.technique}


def condition_from_dict(d: dict) -> SessionCondition:
    return SessionCondition(str(d.get("subject", "")), bool(d.get("loaded", False)),
                            str(d.get("technique", "stoop")))
