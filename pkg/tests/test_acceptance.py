"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line (also collected into the terminal summary)
and enforces its runtime budget.
"""
import contextlib
import hashlib
import time

import numpy as np
import pytest
from scipy import signal

from cuffsense import cli
from cuffsense.daqbus import (
    I2cBus,
    LoadCellDevice,
    PolledRecord,
    Tca9548a,
    decode_force_frame,
    decode_imu_frame,
    encode_force_frame,
    encode_imu_frame,
    export_serial_log,
    mux_select,
    parse_serial_log,
)
from cuffsense.errors import NackError
from cuffsense.fx29 import STANDARD_WEIGHTS_KG, PUBLISHED_CALIBRATION, LoadCellConfig, counts_to_force, error_percent, run_verification
from cuffsense.metrics import correlate_ensemble, pearson_p, pearson_r, strength_band
from cuffsense.pipeline import analyze_session
from cuffsense.segmentation import detect_box_impacts, detect_trunk_peaks
from cuffsense.signals import FilterSpec
from cuffsense.synth import SessionSpec, generate_session, static_weight_bench

from oracles import butterworth_bandpass_gain, exact_correlated_pair, pearson_two_pass, permutation_p

CFG = LoadCellConfig(100.0, 1000)


@contextlib.contextmanager
def criterion(log, number, title, budget_s):
    start = time.perf_counter()
    status, detail = "FAIL", ""
    try:
        yield
        status = "PASS"
    except AssertionError as exc:
        detail = f" ({str(exc).splitlines()[0][:120]})"
        raise
    finally:
        elapsed = time.perf_counter() - start
        if status == "PASS" and elapsed > budget_s:
            status, detail = "FAIL", f" (over budget {budget_s:g} s)"
        line = f"criterion {number} {title}: {status} [{elapsed:.1f} s]{detail}"
        print(line)
        log.append(line)
    assert elapsed <= budget_s, f"took {elapsed:.1f} s, budget {budget_s} s"


def test_criterion_1_count_conversion(acceptance_log):
    with criterion(acceptance_log, 1, "count-to-force exactness", 1.0):
        assert abs(counts_to_force(1000 + 14000, CFG) - 444.822) <= 1e-9
        assert counts_to_force(1000, CFG) == 0.0


def test_criterion_2_table1_errors(acceptance_log):
    with criterion(acceptance_log, 2, "calibration table error column", 1.0):
        assert len(PUBLISHED_CALIBRATION) == 12
        worst = max(abs(error_percent(mean, mass) - err) for mass, _c, mean, _s, err in PUBLISHED_CALIBRATION)
        assert worst <= 0.1, f"worst deviation {worst:.3f} pp"


def test_criterion_3_verification_harness(acceptance_log):
    with criterion(acceptance_log, 3, "static-weight verification harness", 5.0):
        ideal = run_verification(STANDARD_WEIGHTS_KG, 5, 10.0, CFG, static_weight_bench(CFG))
        assert all(abs(s.error_percent) < 0.25 for s in ideal.per_load)
        noisy = run_verification(STANDARD_WEIGHTS_KG, 5, 10.0, CFG, static_weight_bench(CFG, 3.0, seed=11))
        assert all(s.std_force_n < 0.1 for s in noisy.per_load), [s.std_force_n for s in noisy.per_load]


def test_criterion_4_filter_contract(acceptance_log):
    with criterion(acceptance_log, 4, "band-pass filter response", 1.0):
        fs = 2000.0
        spec = FilterSpec()
        freqs = np.array([1.0, 10.0, 50.0, 400.0, 900.0])
        _, h = signal.sosfreqz(spec.design(fs), worN=freqs, fs=fs)
        got = 20 * np.log10(np.abs(h))
        ref = 20 * np.log10(butterworth_bandpass_gain(freqs, spec.band_low_hz, spec.band_high_hz, spec.order, fs))
        assert np.allclose(got, ref, atol=1e-6), (got, ref)
        assert abs(got[1] + 3) <= 0.5 and abs(got[3] + 3) <= 0.5
        assert got[0] <= -40 and got[4] <= -40, got


@pytest.mark.slow
def test_criterion_5_cycle_counting(acceptance_log):
    with criterion(acceptance_log, 5, "trunk peaks and box impacts over 100 seeds", 30.0):
        for seed in range(100):
            s = generate_session(SessionSpec(seed=seed, trunk_noise_frac=0.05, accel_noise_frac=0.05))
            # the wire carries the angle in centidegrees
            trunk = s.trunk_trace()
            trunk = trunk.with_samples(np.round(trunk.samples * 100) / 100)
            peaks = detect_trunk_peaks(trunk, 6.0)
            impacts = detect_box_impacts(s.box_magnitude_trace())
            assert len(peaks) == 30, f"seed {seed}: {len(peaks)} peaks"
            assert len(impacts) == 30, f"seed {seed}: {len(impacts)} impacts"


@pytest.mark.slow
def test_criterion_6_correlation_recovery(acceptance_log):
    with criterion(acceptance_log, 6, "end-to-end correlation recovery", 300.0):
        worst = {}
        for rho in (0.0, 0.3, 0.6, 0.8):
            for seed in range(50):
                spec = SessionSpec(duration_s=120.0, target_rho_if_emg=rho, seed=seed)
                ens = analyze_session(generate_session(spec)).ensemble
                for muscle in ("esl", "esi"):
                    r = correlate_ensemble(ens, muscle).r
                    worst[rho] = max(worst.get(rho, 0.0), abs(r - rho))
                    assert abs(r - rho) <= 0.05, f"rho {rho} seed {seed} {muscle}: r = {r:.3f}"
        print("worst |r - rho| per target:", {k: round(v, 4) for k, v in worst.items()})
        assert strength_band(0.33) == "moderate"
        assert strength_band(0.18) == "weak"
        assert strength_band(0.80) == "strong"


def test_criterion_7_protocol_round_trips(acceptance_log):
    with criterion(acceptance_log, 7, "frame, log and mux round-trips", 5.0):
        rng = np.random.default_rng(7)
        n = 10_000
        ticks = rng.integers(0, 2**32, n)
        counts = rng.integers(0, 2**16, (n, 2))
        fixed = rng.integers(-(2**15), 2**15, (n, 2))
        records = []
        for i in range(n):
            rec = PolledRecord(int(ticks[i]) * 100, int(counts[i, 0]), int(counts[i, 1]),
                               int(fixed[i, 0]) / 100, int(fixed[i, 1]) / 10)
            f = decode_force_frame(encode_force_frame(rec))
            m = decode_imu_frame(encode_imu_frame(rec))
            back = PolledRecord(f.timestamp_us, f.left_counts, f.right_counts,
                                m.trunk_angle_deg, m.trunk_velocity_dps)
            assert back == rec, (rec, back)
            records.append(rec)
        records.sort(key=lambda r: r.timestamp_us)
        records = [r for i, r in enumerate(records) if i == 0 or r.timestamp_us != records[i - 1].timestamp_us]
        assert parse_serial_log(export_serial_log(records)) == records

        for ch in range(8):
            bus = I2cBus()
            bus.attach(Tca9548a())
            bus.attach(LoadCellDevice(0x28, CFG, lambda t: 0.0), ch)
            for sel in [None, *range(8)]:
                mux_select(bus, sel)
                if sel == ch:
                    bus.read(0x28, 2)
                else:
                    with pytest.raises(NackError):
                        bus.read(0x28, 2)


def test_criterion_8_statistics_oracles(acceptance_log):
    with criterion(acceptance_log, 8, "correlation and p-value oracles", 120.0):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            size = int(rng.integers(3, 200))
            x = rng.normal(size=size) * rng.uniform(0.01, 100) + rng.uniform(-50, 50)
            y = rng.uniform(-1, 1) * x + rng.normal(size=size)
            assert abs(pearson_r(x, y) - pearson_two_pass(x.tolist(), y.tolist())) <= 1e-12
        for r in (0.1, 0.3, 0.5):
            x, y = exact_correlated_pair(r, 100, seed=int(r * 10))
            assert pearson_r(x, y) == pytest.approx(r, abs=1e-12)
            p = pearson_p(r, 100)
            ref = permutation_p(x, y, 100_000, seed=int(r * 100))
            print(f"r={r}: t-test p={p:.4g}, permutation p={ref:.4g}")
            assert abs(p / ref - 1) <= 0.2, (r, p, ref)


def test_criterion_9_determinism(acceptance_log, tmp_path):
    with criterion(acceptance_log, 9, "simulate determinism", 10.0):
        digests = []
        for run in ("a", "b"):
            out = tmp_path / run
            assert cli.main(["simulate", "--seed", "42", "--out", str(out)]) == 0
            digests.append({p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                            for p in sorted(out.iterdir())})
        assert digests[0] == digests[1]
        assert len(digests[0]) == 4
