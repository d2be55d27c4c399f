"""Toolkit configuration: flat ``key = value`` text with one section per module."""
from __future__ import annotations

import configparser
import dataclasses
import types
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from .daqbus import POLL_RATE_HZ, SERIAL_BAUD, Topology
from .errors import ConfigError
from .fx29 import LoadCellConfig
from .segmentation import DurationGate, PeakGate
from .signals import FilterSpec
from .synth import SessionSpec


@dataclass(frozen=True)
class DaqSection:
    poll_rate_hz: int = POLL_RATE_HZ
    serial_baud: int = SERIAL_BAUD
    mux_address: int = 0x70
    left_address: int = 0x28
    right_address: int = 0x28
    left_channel: int = 0
    right_channel: int = 1
    left_zero_offset: int = 1000
    right_zero_offset: int = 1000
    full_scale_lbf: float = 100.0

    def topology(self) -> Topology:
        return Topology(self.mux_address, self.left_address, self.right_address,
                        self.left_channel, self.right_channel)

    def cell(self, side: str) -> LoadCellConfig:
        z = self.left_zero_offset if side == "left" else self.right_zero_offset
        return LoadCellConfig(self.full_scale_lbf, z)


@dataclass(frozen=True)
class SignalSection:
    emg_rate_hz: float = 2000.0
    filter_order: int = 4
    band_low_hz: float = 10.0
    band_high_hz: float = 400.0
    ma_window_s: float = 0.2
    mvc_esl_l: float = 0.25
    mvc_esl_r: float = 0.25
    mvc_esi_l: float = 0.2
    mvc_esi_r: float = 0.2

    def filter_spec(self) -> FilterSpec:
        return FilterSpec(self.filter_order, self.band_low_hz, self.band_high_hz)

    def mvc(self, channel: str) -> float:
        return getattr(self, f"mvc_{channel}")


@dataclass(frozen=True)
class SegmentationSection:
    cadence_cpm: float = 6.0
    min_separation_frac: float = 0.6
    prominence_frac: float = 0.2
    smoothing_harmonics: float = 5.0
    duration_low_frac: float = 0.5
    duration_high_frac: float = 1.5
    n_cycles: int = 10
    grid_points: int = 101
    impact_k_std: float = 6.0
    impact_refractory_s: float = 0.5

    def peak_gate(self) -> PeakGate:
        return PeakGate(self.min_separation_frac, self.prominence_frac, self.smoothing_harmonics)

    def duration_gate(self) -> DurationGate:
        return DurationGate(self.duration_low_frac, self.duration_high_frac)


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"


@dataclass(frozen=True)
class ToolkitConfig:
    daq: DaqSection = field(default_factory=DaqSection)
    signal: SignalSection = field(default_factory=SignalSection)
    segmentation: SegmentationSection = field(default_factory=SegmentationSection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> "ToolkitConfig":
        try:
            self.daq.cell("left")
            self.daq.cell("right")
        except ValueError as exc:
            raise ConfigError(str(exc), field="daq") from None
        try:
            self.signal.filter_spec().check(self.signal.emg_rate_hz)
        except ValueError as exc:
            raise ConfigError(str(exc), field="signal") from None
        for name in ("mvc_esl_l", "mvc_esl_r", "mvc_esi_l", "mvc_esi_r"):
            if not getattr(self.signal, name) > 0:
                raise ConfigError("must be positive", field=f"signal.{name}")
        topo = self.daq.topology()
        for name in ("left_channel", "right_channel"):
            if not 0 <= getattr(topo, name) <= 7:
                raise ConfigError("must be 0-7", field=f"daq.{name}")
        if topo.left_channel == topo.right_channel and topo.left_address == topo.right_address:
            raise ConfigError("both cells share an address on one channel", field="daq")
        seg = self.segmentation
        if not seg.cadence_cpm > 0:
            raise ConfigError("must be positive", field="segmentation.cadence_cpm")
        if seg.n_cycles < 1 or seg.grid_points < 2:
            raise ConfigError("n_cycles >= 1 and grid_points >= 2 required", field="segmentation")
        if not 0 < seg.duration_low_frac < seg.duration_high_frac:
            raise ConfigError("duration gate must satisfy 0 < low < high", field="segmentation")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(value: str, typ, path: str):
    origin = typing.get_origin(typ)
    if origin is typing.Union or origin is types.UnionType:
        args = [a for a in typing.get_args(typ) if a is not type(None)]
        if value.strip().lower() in ("", "none"):
            return None
        typ = args[0]
    try:
        if typ is int:
            return int(value, 0)
        if typ is float:
            return float(value)
        if typ is bool:
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        return value.strip()
    except ValueError:
        raise ConfigError(f"cannot parse {value!r} as {typ.__name__}", field=path) from None


def _section(cls, items: dict, name: str):
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError("unknown key", field=f"{name}.{key}")
        kwargs[key] = _coerce(raw, hints[key], f"{name}.{key}")
    return cls(**kwargs)


def _read(text: str, source: str = "<string>") -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    return parser


SECTIONS = {"daq": DaqSection, "signal": SignalSection,
            "segmentation": SegmentationSection, "output": OutputSection}


def _read_file(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def parse_config(text: str, source: str = "<string>") -> ToolkitConfig:
    parser = _read(text, source)
    sections = {}
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError("unknown section", field=name)
        sections[name] = _section(SECTIONS[name], dict(parser[name]), name)
    return ToolkitConfig(**sections).validate()


def load_config(path=None) -> ToolkitConfig:
    """Config from a file; ``None`` gives the defaults."""
    if path is None:
        return ToolkitConfig().validate()
    return parse_config(_read_file(path), str(path))


def dump_config(cfg: ToolkitConfig) -> str:
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for key, value in dataclasses.asdict(getattr(cfg, name)).items():
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def parse_session_spec(text: str, seed: int | None = None, source: str = "<string>") -> SessionSpec:
    """Read a ``[session]`` spec; ``seed`` overrides the file value."""
    parser = _read(text, source)
    for name in parser.sections():
        if name != "session":
            raise ConfigError("unknown section", field=name)
    items = dict(parser["session"]) if parser.has_section("session") else {}
    hints = typing.get_type_hints(SessionSpec)
    known = {f.name for f in fields(SessionSpec)}
    kwargs = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError("unknown key", field=f"session.{key}")
        kwargs[key] = _coerce(raw, hints[key], f"session.{key}")
    if seed is not None:
        kwargs["seed"] = seed
    return SessionSpec(**kwargs)


def load_session_spec(path=None, seed: int | None = None) -> SessionSpec:
    text = "" if path is None else _read_file(path)
    return parse_session_spec(text, seed, str(path))


def dump_session_spec(spec: SessionSpec) -> str:
    lines = ["[session]"]
    for key, value in spec.to_dict().items():
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
