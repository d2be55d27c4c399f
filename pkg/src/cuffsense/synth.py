"""Synthetic lifting sessions with known ground truth.

Every signal is a function of the cycle phase ``phi`` (0 at peak trunk
flexion, 0.5 upright).  Interface force is mixed from the standardized EMG
activation shape and an independent shape orthogonalized against it on the
analysis grid, so the analytic IF/EMG correlation equals the target exactly
on that grid.  Robot assistance is mixed from the IF shape the same way.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import signal

from .daqbus import (
    STATUS_DIAGNOSTIC,
    STATUS_VALID,
    LoadCellDevice,
    PollResult,
    Topology,
    build_bus,
    run_poller,
)
from .errors import ConfigError
from .fx29 import STANDARD_GRAVITY, LoadCellConfig, RawSample
from .segmentation import GRID_POINTS
from .trace import SignalTrace, Unit

EXO_RATE_HZ = 500
EMG_RATE_HZ = 2000
FLEXION_AMPLITUDE_DEG = 70.0
IMPACT_DELAY_S = 0.3
IMPACT_PEAK_G = 5.0
IMPACT_TAU_S = 0.008
EMG_CARRIER_BAND_HZ = (20.0, 350.0)
EMG_PEAK_MV = 0.3
ESI_GAIN = 0.8
IF_RANGE_N = (5.0, 200.0)
HARMONICS = 4
EMG_COLUMNS = ("esl_l", "esl_r", "esi_l", "esi_r")
ACCEL_COLUMNS = ("box_ax", "box_ay", "box_az")


@dataclass(frozen=True)
class SessionSpec:
    cadence_cpm: float = 6.0
    duration_s: float = 300.0
    load_kg: float = 10.0
    target_rho_if_emg: float = 0.6
    target_rho_if_ra: float = 0.8
    counts_sigma: float = 3.0
    emg_snr_db: float | None = 20.0
    trunk_noise_frac: float = 0.01
    accel_noise_frac: float = 0.05
    subject: str = "S1"
    seed: int = 0

    def __post_init__(self):
        for name in ("target_rho_if_emg", "target_rho_if_ra"):
            if not -1.0 <= getattr(self, name) <= 1.0:
                raise ConfigError("must lie in [-1, 1]", field=f"session.{name}")
        if not self.cadence_cpm > 0:
            raise ConfigError("must be positive", field="session.cadence_cpm")
        if self.duration_s < 2 * self.period_s:
            raise ConfigError("must cover at least two cycles", field="session.duration_s")
        if self.load_kg not in (0, 10):
            raise ConfigError("must be 0 or 10", field="session.load_kg")
        if self.counts_sigma < 0 or self.trunk_noise_frac < 0 or self.accel_noise_frac < 0:
            raise ConfigError("noise levels must be non-negative", field="session")

    @property
    def period_s(self) -> float:
        return 60.0 / self.cadence_cpm

    @property
    def n_cycles(self) -> int:
        return int(np.floor(self.cadence_cpm * self.duration_s / 60.0 + 1e-9))

    def to_dict(self) -> dict:
        return asdict(self)


def _standardize(v: np.ndarray) -> tuple[float, float]:
    return float(v.mean()), float(v.std())


@dataclass(frozen=True)
class PhaseShape:
    """Periodic shape: offset + scale * (cosine series), evaluated at any phase."""

    cos: np.ndarray
    sin: np.ndarray
    offset: float = 0.0
    scale: float = 1.0
    power_base: tuple | None = None  # (base, amp, exponent) for the activation bump

    def raw(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        h = np.arange(1, self.cos.size + 1)
        ang = 2 * np.pi * np.multiply.outer(phi, h)
        out = np.cos(ang) @ self.cos + np.sin(ang) @ self.sin
        if self.power_base is not None:
            base, amp, p = self.power_base
            out = out + base + amp * ((1 + np.cos(2 * np.pi * phi)) / 2) ** p
        return out

    def __call__(self, phi) -> np.ndarray:
        return self.offset + self.scale * self.raw(phi)


class Mix:
    """Linear combination of shapes: sum(w_i * shape_i(phi)) + c."""

    def __init__(self, terms, const=0.0):
        self.terms = list(terms)
        self.const = const

    def __call__(self, phi):
        out = np.full(np.shape(phi), self.const, dtype=float)
        for w, s in self.terms:
            out = out + w * s(phi)
        return out


def _orthogonal_z(shape, against, grid) -> Mix:
    """Standardized version of ``shape`` with zero grid covariance to each of ``against``."""
    terms = [(1.0, shape)]
    basis = []
    for g in against:
        v = g(grid)
        basis.append(v - v.mean())
    y = shape(grid)
    y = y - y.mean()
    if basis:
        coef, *_ = np.linalg.lstsq(np.stack(basis, axis=1), y, rcond=None)
        terms.extend((-c, g) for c, g in zip(coef, against))
    resid = Mix(terms)
    mu, sd = _standardize(resid(grid))
    return Mix([(1.0 / sd, resid)], -mu / sd)


def _z(shape, grid) -> Mix:
    mu, sd = _standardize(shape(grid))
    return Mix([(1.0 / sd, shape)], -mu / sd)


@dataclass
class GroundTruth:
    peak_times_s: list
    impact_times_s: list
    rho_if_emg: float
    rho_if_ra: float
    grid_pct: list
    if_profile_n: list
    ra_profile_nm: list
    esl_envelope_mv: list
    esi_envelope_mv: list
    trunk_profile_deg: list
    commanded_assistance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(vars(self))


class Session:
    """Lazily generated synthetic session; all randomness derives from the seed."""

    def __init__(self, spec: SessionSpec, left_cfg: LoadCellConfig = LoadCellConfig(),
                 right_cfg: LoadCellConfig = LoadCellConfig()):
        self.spec = spec
        self.left_cfg = left_cfg
        self.right_cfg = right_cfg
        seeds = np.random.SeedSequence(spec.seed).spawn(8)
        (self._s_shape, self._s_trunk, self._s_accel, self._s_carrier,
         self._s_emg_noise, self._s_left, self._s_right, self._s_spare) = seeds
        self.grid = np.linspace(0.0, 1.0, GRID_POINTS)
        self._build_shapes()

    # ---- phase model -----------------------------------------------------
    def phase(self, t_s) -> np.ndarray:
        """Cycle phase; the subject stands still after the last full cycle."""
        t = np.asarray(t_s, dtype=float)
        T = self.spec.period_s
        phi = np.mod((t - T / 2) / T, 1.0)
        return np.where(t >= self.spec.n_cycles * T, 0.5, phi)

    def _build_shapes(self):
        rng = np.random.default_rng(self._s_shape)
        spec = self.spec
        g = self.grid

        def random_series(scale):
            return PhaseShape(rng.normal(0, scale, HARMONICS), rng.normal(0, scale, HARMONICS))

        act = PhaseShape(rng.normal(0, 0.02, HARMONICS), np.zeros(HARMONICS),
                         power_base=(0.08, 0.5, 1.5))
        lo = float(act.raw(np.linspace(0, 1, 2001)).min())
        if lo < 0.02:
            act = PhaseShape(act.cos, act.sin, offset=0.02 - lo, power_base=act.power_base)
        self.activation = act
        z_act = _z(act, g)
        z_indep = _orthogonal_z(random_series(1.0), [act], g)
        rho = spec.target_rho_if_emg
        if_unit = Mix([(rho, z_act), (np.sqrt(1 - rho * rho), z_indep)])

        mean_if = 60.0 + 4.0 * spec.load_kg
        fine = if_unit(np.linspace(0, 1, 4001))
        lo_n, hi_n = IF_RANGE_N
        scale = min(30.0, (mean_if - lo_n) / max(-fine.min(), 1e-9),
                    (hi_n - mean_if) / max(fine.max(), 1e-9))
        self.if_shape = Mix([(scale, if_unit)], mean_if)

        rho_ra = spec.target_rho_if_ra
        z_if = _z(if_unit, g)
        z_ra_indep = _orthogonal_z(random_series(1.0), [if_unit], g)
        self.ra_shape = Mix([(4.0 * rho_ra, z_if), (4.0 * np.sqrt(1 - rho_ra ** 2), z_ra_indep)],
                            12.0 + 0.3 * spec.load_kg)

    # ---- kinematics --------------------------------------------------------
    def trunk_angle(self, t_s) -> np.ndarray:
        return FLEXION_AMPLITUDE_DEG / 2 * (1 + np.cos(2 * np.pi * self.phase(t_s)))

    def trunk_velocity(self, t_s) -> np.ndarray:
        t = np.asarray(t_s, dtype=float)
        phi = self.phase(t)
        w = 2 * np.pi / self.spec.period_s
        v = -FLEXION_AMPLITUDE_DEG / 2 * w * np.sin(2 * np.pi * phi)
        return np.where(t >= self.spec.n_cycles * self.spec.period_s, 0.0, v)

    @cached_property
    def peak_times_s(self) -> np.ndarray:
        T = self.spec.period_s
        return T / 2 + T * np.arange(self.spec.n_cycles)

    @cached_property
    def impact_times_s(self) -> np.ndarray:
        # snapped to the EMG sample clock the box IMU shares
        t = self.peak_times_s + IMPACT_DELAY_S
        t = t[t < self.spec.duration_s]
        return np.round(t * EMG_RATE_HZ) / EMG_RATE_HZ

    @property
    def n_exo(self) -> int:
        return int(round(self.spec.duration_s * EXO_RATE_HZ))

    @property
    def n_emg(self) -> int:
        return int(round(self.spec.duration_s * EMG_RATE_HZ))

    @cached_property
    def exo_times(self) -> np.ndarray:
        return np.arange(self.n_exo) / EXO_RATE_HZ

    @cached_property
    def trunk_measured(self) -> tuple[np.ndarray, np.ndarray]:
        """IMU angle and velocity at the poll instants, with sensor noise."""
        rng = np.random.default_rng(self._s_trunk)
        t = self.exo_times
        sigma = self.spec.trunk_noise_frac * FLEXION_AMPLITUDE_DEG
        angle = self.trunk_angle(t) + rng.normal(0.0, sigma, t.size)
        vel_sigma = sigma * 2 * np.pi / self.spec.period_s
        vel = self.trunk_velocity(t) + rng.normal(0.0, vel_sigma, t.size)
        return angle, vel

    def trunk_trace(self) -> SignalTrace:
        return SignalTrace(self.trunk_measured[0], EXO_RATE_HZ, Unit.DEGREE, "trunk")

    # ---- forces ---------------------------------------------------------------
    def interface_force(self, t_s) -> np.ndarray:
        return self.if_shape(self.phase(t_s))

    def assistance(self, t_s) -> np.ndarray:
        return self.ra_shape(self.phase(t_s))

    @cached_property
    def cuff_forces(self) -> tuple[np.ndarray, np.ndarray]:
        """Left/right cuff forces at the poll instants; their mean is the IF."""
        f = self.interface_force(self.exo_times)
        return f * 1.04, f * 0.96

    def force_source(self, side: str) -> Callable[[int], float]:
        values = self.cuff_forces[0 if side == "left" else 1].tolist()
        gain = 1.04 if side == "left" else 0.96
        period = 1_000_000 // EXO_RATE_HZ

        def source(t_us: int) -> float:
            k, rem = divmod(t_us, period)
            if rem == 0 and k < len(values):
                return values[k]
            return float(self.interface_force(t_us / 1e6)) * gain

        return source

    def imu_source(self) -> Callable[[int], tuple[float, float]]:
        angle, vel = (a.tolist() for a in self.trunk_measured)
        period = 1_000_000 // EXO_RATE_HZ

        def source(t_us: int) -> tuple[float, float]:
            k, rem = divmod(t_us, period)
            if rem == 0 and k < len(angle):
                return angle[k], vel[k]
            t = t_us / 1e6
            return float(self.trunk_angle(t)), float(self.trunk_velocity(t))

        return source

    def devices(self, topology: Topology = Topology(), **kwargs):
        left = LoadCellDevice(topology.left_address, self.left_cfg, self.force_source("left"),
                              self.spec.counts_sigma, seed=int(self._s_left.generate_state(1)[0]),
                              **kwargs)
        right = LoadCellDevice(topology.right_address, self.right_cfg, self.force_source("right"),
                               self.spec.counts_sigma, seed=int(self._s_right.generate_state(1)[0]),
                               **kwargs)
        return left, right

    def poll(self, topology: Topology = Topology()) -> PollResult:
        left, right = self.devices(topology)
        bus = build_bus(left, right, topology)
        return run_poller(self.spec.duration_s, bus, self.imu_source(), topology, EXO_RATE_HZ)

    def assistance_trace(self) -> SignalTrace:
        return SignalTrace(self.assistance(self.exo_times), EXO_RATE_HZ, Unit.NEWTON_METER, "ra")

    # ---- EMG and box IMU -----------------------------------------------------
    @cached_property
    def emg_times(self) -> np.ndarray:
        return np.arange(self.n_emg) / EMG_RATE_HZ

    @cached_property
    def emg(self) -> dict[str, np.ndarray]:
        """Raw EMG in millivolts: band-limited carrier times activation envelope."""
        t = self.emg_times
        env = self.activation(self.phase(t)) * (1 + 0.02 * self.spec.load_kg)
        sos = signal.butter(4, EMG_CARRIER_BAND_HZ, btype="bandpass", fs=EMG_RATE_HZ, output="sos")
        rng_c = np.random.default_rng(self._s_carrier)
        rng_n = np.random.default_rng(self._s_emg_noise)
        out = {}
        for name in EMG_COLUMNS:
            carrier = signal.sosfilt(sos, rng_c.standard_normal(t.size))
            carrier /= np.sqrt(np.mean(carrier ** 2))
            gain = ESI_GAIN if name.startswith("esi") else 1.0
            x = EMG_PEAK_MV * gain * env * carrier
            if self.spec.emg_snr_db is not None:
                noise_rms = np.sqrt(np.mean(x ** 2)) / 10 ** (self.spec.emg_snr_db / 20)
                x = x + rng_n.normal(0.0, noise_rms, t.size)
            out[name] = x
        return out

    @cached_property
    def box_accel(self) -> dict[str, np.ndarray]:
        t = self.emg_times
        rng = np.random.default_rng(self._s_accel)
        g = STANDARD_GRAVITY
        sigma = self.spec.accel_noise_frac * g
        motion = 0.05 * g * np.sin(2 * np.pi * self.phase(t))
        az = g + motion
        for t0 in self.impact_times_s:
            k0 = int(round(t0 * EMG_RATE_HZ))
            k1 = min(k0 + int(10 * IMPACT_TAU_S * EMG_RATE_HZ), t.size)
            dt = (np.arange(k0, k1) - k0) / EMG_RATE_HZ
            az[k0:k1] += (IMPACT_PEAK_G - 1.0) * g * np.exp(-dt / IMPACT_TAU_S)
        return {
            "box_ax": rng.normal(0.0, sigma, t.size),
            "box_ay": rng.normal(0.0, sigma, t.size),
            "box_az": az + rng.normal(0.0, sigma, t.size),
        }

    def box_magnitude_trace(self) -> SignalTrace:
        a = self.box_accel
        mag = np.sqrt(a["box_ax"] ** 2 + a["box_ay"] ** 2 + a["box_az"] ** 2)
        return SignalTrace(mag, EMG_RATE_HZ, Unit.METERS_PER_SECOND2, "box")

    # ---- ground truth -----------------------------------------------------------
    def ground_truth(self, include_assistance: bool = True) -> GroundTruth:
        g = self.grid
        env = self.activation(g) * (1 + 0.02 * self.spec.load_kg) * EMG_PEAK_MV
        assist = {}
        if include_assistance:
            assist = {
                "rate_hz": EXO_RATE_HZ, "t0_s": 0.0, "unit": Unit.NEWTON_METER.value,
                "values": [round(v, 5) for v in self.assistance(self.exo_times).tolist()],
            }
        return GroundTruth(
            peak_times_s=self.peak_times_s.tolist(),
            impact_times_s=self.impact_times_s.tolist(),
            rho_if_emg=self.spec.target_rho_if_emg,
            rho_if_ra=self.spec.target_rho_if_ra,
            grid_pct=(100 * g).tolist(),
            if_profile_n=self.if_shape(g).tolist(),
            ra_profile_nm=self.ra_shape(g).tolist(),
            esl_envelope_mv=env.tolist(),
            esi_envelope_mv=(ESI_GAIN * env).tolist(),
            trunk_profile_deg=self.trunk_angle(g * self.spec.period_s + self.spec.period_s / 2).tolist(),
            commanded_assistance=assist,
        )


def generate_session(spec: SessionSpec, left_cfg: LoadCellConfig = LoadCellConfig(),
                     right_cfg: LoadCellConfig = LoadCellConfig()) -> Session:
    return Session(spec, left_cfg, right_cfg)


class StaticWeightSource:
    """Dead weight on a cell: counts = Z + round(m*g / N-per-count + noise)."""

    def __init__(self, mass_kg: float, cfg: LoadCellConfig, noise_sigma_counts: float = 0.0,
                 seed=0, rate_hz: float = EXO_RATE_HZ, channel: int = 0):
        if mass_kg < 0:
            raise ValueError("mass must be non-negative")
        self.mass_kg = mass_kg
        self.cfg = cfg
        self.noise_sigma_counts = noise_sigma_counts
        self.rate_hz = rate_hz
        self.channel = channel
        self._rng = np.random.default_rng(seed)

    def samples(self, n: int) -> list[RawSample]:
        cfg = self.cfg
        ideal = self.mass_kg * STANDARD_GRAVITY / cfg.newtons_per_count
        noise = self._rng.normal(0.0, self.noise_sigma_counts, n) if self.noise_sigma_counts else np.zeros(n)
        counts = cfg.zero_offset_counts + np.rint(ideal + noise).astype(np.int64)
        top = cfg.zero_offset_counts + cfg.counts_span
        out = []
        for k, c in enumerate(counts.tolist()):
            status = STATUS_VALID
            if c > top:
                c, status = top, STATUS_DIAGNOSTIC
            elif c < 0:
                c, status = 0, STATUS_DIAGNOSTIC
            out.append(RawSample(self.channel, int(round(k * 1e6 / self.rate_hz)), c, status))
        return out


def make_static_weight_source(mass_kg: float, cfg: LoadCellConfig, noise_sigma_counts: float = 0.0,
                              seed=0, rate_hz: float = EXO_RATE_HZ) -> StaticWeightSource:
    return StaticWeightSource(mass_kg, cfg, noise_sigma_counts, seed, rate_hz)


def static_weight_bench(cfg: LoadCellConfig, noise_sigma_counts: float = 0.0, seed: int = 0,
                        rate_hz: float = EXO_RATE_HZ, trial_s: float = 10.0):
    """Source callable for :func:`cuffsense.fx29.run_verification`."""
    n = int(round(trial_s * rate_hz))

    def source(mass_kg: float, trial: int):
        ss = np.random.SeedSequence([seed, int(round(mass_kg * 1000)), trial])
        return make_static_weight_source(mass_kg, cfg, noise_sigma_counts, ss, rate_hz).samples(n)

    return source
