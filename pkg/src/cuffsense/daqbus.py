"""Message-level simulation of the cuff acquisition chain.

Two FX29 cells share one I2C address and sit on separate TCA9548A channels.
The IMU board reads them, forwards force and trunk-IMU values as CAN frames,
and the main board polls at 500 Hz and streams records over serial.
Time is virtual: every read is stamped by the caller, never the wall clock.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, NamedTuple

import numpy as np

from .errors import (
    BudgetExceededError,
    FrameFormatError,
    NackError,
    ParseError,
    StaleDataError,
)
from .fx29 import LoadCellConfig

FX29_DEFAULT_ADDRESS = 0x28
TCA9548A_DEFAULT_ADDRESS = 0x70

STATUS_VALID = 0b00
STATUS_STALE = 0b10
STATUS_DIAGNOSTIC = 0b11
DATA_MASK = 0x3FFF

POLL_RATE_HZ = 500
SERIAL_BAUD = 500_000
BITS_PER_CHAR = 10  # 8N1 framing

FORCE_FRAME_ID = 0x101
IMU_FRAME_ID = 0x102
TICK_US = 100

FLAG_LEFT_MISSING = 0x1
FLAG_RIGHT_MISSING = 0x2
FLAG_IMU_MISSING = 0x4


# --------------------------------------------------------------------------
# I2C devices

def encode_load_cell_word(counts: int, status: int = STATUS_VALID) -> bytes:
    if not 0 <= counts <= DATA_MASK:
        raise ValueError(f"counts {counts} do not fit 14 data bits")
    return ((status & 0b11) << 14 | counts).to_bytes(2, "big")


def decode_load_cell_word(data: bytes) -> int:
    """Return the 14-bit count field; non-zero status raises StaleDataError."""
    if len(data) < 2:
        raise ValueError("load cell word needs 2 bytes")
    word = int.from_bytes(data[:2], "big")
    status = word >> 14
    if status != STATUS_VALID:
        raise StaleDataError(f"load cell status bits {status:02b}", status=status)
    return word & DATA_MASK


class LoadCellDevice:
    """FX29 model; ``force_source(t_us)`` gives the applied force in newtons.

    Args:
        noise_sigma_counts: Gaussian noise added before integer rounding.
        bit_error_prob: per-read probability of flipping one word bit.
        nack_reads: read ordinals (0-based) that fail to acknowledge.
    """

    def __init__(self, address: int, cfg: LoadCellConfig,
                 force_source: Callable[[int], float],
                 noise_sigma_counts: float = 0.0, seed: int = 0,
                 bit_error_prob: float = 0.0, nack_reads: Iterable[int] = ()):
        if not 0 <= address < 0x80:
            raise ValueError("I2C address must be 7-bit")
        self.address = address
        self.cfg = cfg
        self.force_source = force_source
        self.noise_sigma_counts = float(noise_sigma_counts)
        self.bit_error_prob = float(bit_error_prob)
        self.nack_reads = frozenset(nack_reads)
        self._rng = np.random.default_rng(seed)
        self._bit_rng = np.random.default_rng([seed, 1])
        self._inv_npc = 1.0 / cfg.newtons_per_count
        self._noise = []
        self.reads = 0

    def _next_noise(self) -> float:
        if not self._noise:
            block = self._rng.normal(0.0, self.noise_sigma_counts, 4096)
            self._noise = block[::-1].tolist()
        return self._noise.pop()

    def acknowledges(self) -> bool:
        return self.reads not in self.nack_reads

    def sample_counts(self, t_us: int) -> tuple[int, int]:
        cfg = self.cfg
        value = self.force_source(t_us) * self._inv_npc
        if self.noise_sigma_counts:
            value += self._next_noise()
        counts = cfg.zero_offset_counts + int(round(value))
        status = STATUS_VALID
        top = cfg.zero_offset_counts + cfg.counts_span
        if counts > top:
            counts, status = top, STATUS_DIAGNOSTIC
        elif counts < 0:
            counts, status = 0, STATUS_DIAGNOSTIC
        return counts, status

    def read(self, n_bytes: int, t_us: int) -> bytes:
        self.reads += 1
        counts, status = self.sample_counts(t_us)
        word = (status << 14) | counts
        if self.bit_error_prob and self._bit_rng.random() < self.bit_error_prob:
            word ^= 1 << int(self._bit_rng.integers(0, 16))
        return word.to_bytes(2, "big")[:n_bytes].ljust(n_bytes, b"\xff")

    def write(self, data: bytes) -> None:
        pass


class Tca9548a:
    """8-channel mux: one control byte, bit i enables downstream channel i."""

    def __init__(self, address: int = TCA9548A_DEFAULT_ADDRESS):
        self.address = address
        self.control = 0x00
        self.enabled_channels: tuple[int, ...] = ()

    def acknowledges(self) -> bool:
        return True

    def write(self, data: bytes) -> None:
        if data:
            self.control = data[-1] & 0xFF
            self.enabled_channels = tuple(ch for ch in range(8) if self.control >> ch & 1)

    def read(self, n_bytes: int, t_us: int) -> bytes:
        return bytes([self.control]) * n_bytes


@dataclass
class I2cBus:
    """Upstream I2C segment with at most one TCA9548A fan-out."""

    upstream: dict = field(default_factory=dict)
    channels: dict = field(default_factory=lambda: {ch: {} for ch in range(8)})
    mux: Tca9548a | None = None

    def attach(self, device, channel: int | None = None) -> None:
        if channel is None:
            segment = self.upstream
        else:
            if self.mux is None:
                raise ValueError("attach a Tca9548a before using mux channels")
            if not 0 <= channel <= 7:
                raise ValueError("mux channel must be 0-7")
            segment = self.channels[channel]
        if device.address in segment:
            raise ValueError(
                f"address 0x{device.address:02X} already used on "
                f"{'upstream' if channel is None else f'channel {channel}'}"
            )
        if isinstance(device, Tca9548a):
            if channel is not None or self.mux is not None:
                raise ValueError("only one upstream mux is modelled")
            self.mux = device
        segment[device.address] = device

    def _resolve(self, address: int):
        dev = self.upstream.get(address)
        if dev is not None:
            return dev
        found = []
        if self.mux is not None:
            for ch in self.mux.enabled_channels:
                d = self.channels[ch].get(address)
                if d is not None:
                    found.append(d)
        if not found:
            raise NackError(f"no device acknowledged address 0x{address:02X}")
        if len(found) > 1:
            raise NackError(f"address 0x{address:02X} answered on several enabled channels")
        return found[0]

    def write(self, address: int, data: bytes) -> None:
        dev = self._resolve(address)
        if not dev.acknowledges():
            raise NackError(f"0x{address:02X} did not acknowledge write")
        dev.write(data)

    def read(self, address: int, n_bytes: int, t_us: int = 0) -> bytes:
        dev = self._resolve(address)
        if not dev.acknowledges():
            dev.reads = getattr(dev, "reads", 0) + 1
            raise NackError(f"0x{address:02X} did not acknowledge read")
        return dev.read(n_bytes, t_us)


def mux_select(bus: I2cBus, channel: int | None) -> bool:
    """Enable a single downstream channel (``None`` disables all)."""
    if bus.mux is None:
        raise NackError("no multiplexer on bus")
    if channel is None:
        mask = 0
    elif not 0 <= channel <= 7:
        raise ValueError("channel must be 0-7")
    else:
        mask = 1 << channel
    bus.write(bus.mux.address, bytes([mask]))
    return True


# --------------------------------------------------------------------------
# CAN frames

class CanFrame(NamedTuple):
    """Standard (11-bit id) data frame; dlc is the payload length."""

    id: int
    data: bytes

    @classmethod
    def make(cls, frame_id: int, data) -> "CanFrame":
        if not 0 <= frame_id < 2048:
            raise FrameFormatError(f"CAN id 0x{frame_id:X} exceeds 11 bits")
        if len(data) > 8:
            raise FrameFormatError("CAN payload exceeds 8 bytes")
        return cls(frame_id, bytes(data))

    @property
    def dlc(self) -> int:
        return len(self.data)


class PolledRecord(NamedTuple):
    timestamp_us: int
    left_counts: int
    right_counts: int
    trunk_angle_deg: float
    trunk_velocity_dps: float
    flags: int = 0


class ForceFields(NamedTuple):
    timestamp_us: int
    left_counts: int
    right_counts: int


class ImuFields(NamedTuple):
    timestamp_us: int
    trunk_angle_deg: float
    trunk_velocity_dps: float


_FORCE = struct.Struct("<HHI")
_IMU = struct.Struct("<hhI")


def _ticks(t_us: int) -> int:
    if t_us < 0 or t_us % TICK_US:
        raise FrameFormatError(f"timestamp {t_us} us is not a non-negative multiple of {TICK_US} us")
    return (t_us // TICK_US) & 0xFFFFFFFF


def _fixed(value: float, scale: int, name: str) -> int:
    q = int(round(value * scale))
    if not -32768 <= q <= 32767:
        raise FrameFormatError(f"{name} {value} does not fit i16 at scale 1/{scale}")
    return q


def encode_force_frame(rec) -> CanFrame:
    """id 0x101: u16 left, u16 right, u32 timestamp in 100 us ticks (LE)."""
    for name in ("left_counts", "right_counts"):
        if not 0 <= getattr(rec, name) <= 0xFFFF:
            raise FrameFormatError(f"{name} does not fit u16")
    return CanFrame.make(FORCE_FRAME_ID, _FORCE.pack(rec.left_counts, rec.right_counts,
                                                _ticks(rec.timestamp_us)))


def encode_imu_frame(rec) -> CanFrame:
    """id 0x102: i16 angle [0.01 deg], i16 velocity [0.1 deg/s], u32 ticks (LE)."""
    return CanFrame.make(IMU_FRAME_ID, _IMU.pack(
        _fixed(rec.trunk_angle_deg, 100, "trunk angle"),
        _fixed(rec.trunk_velocity_dps, 10, "trunk velocity"),
        _ticks(rec.timestamp_us),
    ))


def _check(frame: CanFrame, frame_id: int) -> None:
    if not 0 <= frame.id < 2048:
        raise FrameFormatError(f"CAN id 0x{frame.id:X} exceeds 11 bits")
    if frame.id != frame_id:
        raise FrameFormatError(f"expected id 0x{frame_id:X}, got 0x{frame.id:X}")
    if frame.dlc != 8:
        raise FrameFormatError(f"expected dlc 8, got {frame.dlc}")


def decode_force_frame(frame: CanFrame) -> ForceFields:
    _check(frame, FORCE_FRAME_ID)
    left, right, ticks = _FORCE.unpack(frame.data)
    return ForceFields(ticks * TICK_US, left, right)


def decode_imu_frame(frame: CanFrame) -> ImuFields:
    _check(frame, IMU_FRAME_ID)
    angle, vel, ticks = _IMU.unpack(frame.data)
    return ImuFields(ticks * TICK_US, angle / 100, vel / 10)


# --------------------------------------------------------------------------
# polling

@dataclass(frozen=True)
class Topology:
    mux_address: int = TCA9548A_DEFAULT_ADDRESS
    left_address: int = FX29_DEFAULT_ADDRESS
    right_address: int = FX29_DEFAULT_ADDRESS
    left_channel: int = 0
    right_channel: int = 1


def build_bus(left: LoadCellDevice, right: LoadCellDevice,
              topology: Topology = Topology()) -> I2cBus:
    bus = I2cBus()
    bus.attach(Tca9548a(topology.mux_address))
    bus.attach(left, topology.left_channel)
    bus.attach(right, topology.right_channel)
    return bus


class Poller:
    """500 Hz main-board query loop.

    Each tick reads both cells through the mux and the trunk IMU at the same
    virtual instant, then passes the values through the CAN codec.  A failed
    read holds the last good value and sets the matching flag bit.
    """

    def __init__(self, bus: I2cBus, imu_source: Callable[[int], tuple[float, float]],
                 topology: Topology = Topology(), rate_hz: int = POLL_RATE_HZ):
        if 1_000_000 % rate_hz:
            raise ValueError("poll period must be a whole number of microseconds")
        self.bus = bus
        self.imu_source = imu_source
        self.topology = topology
        self.period_us = 1_000_000 // rate_hz
        self.rate_hz = rate_hz
        self.gaps = 0

    def _read_cell(self, channel: int, address: int, t_us: int):
        mux_select(self.bus, channel)
        return decode_load_cell_word(self.bus.read(address, 2, t_us))

    def run(self, duration_s: float) -> Iterator[PolledRecord]:
        topo = self.topology
        n = int(round(duration_s * self.rate_hz))
        last = [0, 0, 0.0, 0.0]
        for k in range(n):
            t_us = k * self.period_us
            flags = 0
            try:
                last[0] = self._read_cell(topo.left_channel, topo.left_address, t_us)
            except (NackError, StaleDataError):
                flags |= FLAG_LEFT_MISSING
            try:
                last[1] = self._read_cell(topo.right_channel, topo.right_address, t_us)
            except (NackError, StaleDataError):
                flags |= FLAG_RIGHT_MISSING
            try:
                last[2], last[3] = self.imu_source(t_us)
            except NackError:
                flags |= FLAG_IMU_MISSING
            if flags:
                self.gaps += 1
            raw = PolledRecord(t_us, last[0], last[1], last[2], last[3], flags)
            force = decode_force_frame(encode_force_frame(raw))
            imu = decode_imu_frame(encode_imu_frame(raw))
            yield PolledRecord(force.timestamp_us, force.left_counts, force.right_counts,
                               imu.trunk_angle_deg, imu.trunk_velocity_dps, flags)


class PollResult(NamedTuple):
    records: list
    gaps: int


def run_poller(duration_s: float, bus: I2cBus, imu_source,
               topology: Topology = Topology(), rate_hz: int = POLL_RATE_HZ) -> PollResult:
    poller = Poller(bus, imu_source, topology, rate_hz)
    records = list(poller.run(duration_s))
    return PollResult(records, poller.gaps)


# --------------------------------------------------------------------------
# serial log

SERIAL_FIELDS = ("t_us", "left_counts", "right_counts", "trunk_angle_cdeg",
                 "trunk_vel_ddps", "flags")


def format_serial_line(rec: PolledRecord) -> str:
    return (f"{rec.timestamp_us},{rec.left_counts},{rec.right_counts},"
            f"{int(round(rec.trunk_angle_deg * 100))},"
            f"{int(round(rec.trunk_velocity_dps * 10))},{rec.flags}\n")


def max_line_chars(rate_hz: int = POLL_RATE_HZ, baud: int = SERIAL_BAUD) -> int:
    return baud // (BITS_PER_CHAR * rate_hz)


def export_serial_log(records: Iterable[PolledRecord], rate_hz: int = POLL_RATE_HZ,
                      baud: int = SERIAL_BAUD) -> list[str]:
    """Render records as newline-terminated integer CSV lines (no header)."""
    limit = max_line_chars(rate_hz, baud)
    lines = []
    prev = None
    for i, rec in enumerate(records):
        if prev is not None and rec.timestamp_us <= prev:
            raise ValueError(f"record {i}: timestamps must strictly increase")
        prev = rec.timestamp_us
        line = format_serial_line(rec)
        if len(line) > limit:
            raise BudgetExceededError(
                f"record {i}: {len(line)} chars x {BITS_PER_CHAR} bits x {rate_hz} Hz "
                f"exceeds {baud} baud"
            )
        lines.append(line)
    return lines


def parse_serial_log(lines: Iterable[str], path=None) -> list[PolledRecord]:
    out = []
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(SERIAL_FIELDS):
            raise ParseError(f"expected {len(SERIAL_FIELDS)} fields, got {len(parts)}", path, lineno)
        try:
            t, left, right, cdeg, ddps, flags = (int(p) for p in parts)
        except ValueError:
            raise ParseError(f"non-integer field in {line!r}", path, lineno) from None
        out.append(PolledRecord(t, left, right, cdeg / 100, ddps / 10, flags))
    return out
