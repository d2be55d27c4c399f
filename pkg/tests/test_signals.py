import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal

from cuffsense.errors import InvalidBandError, InvalidMVCError, OutOfRangeError, ShapeMismatchError
from cuffsense.fx29 import LoadCellConfig, force_to_counts
from cuffsense.signals import (
    FilterSpec,
    average_bilateral,
    build_interface_force,
    butterworth_bandpass,
    detrend_rectify,
    moving_average,
    mvc_normalize,
    process_muscle,
    window_samples,
)
from cuffsense.trace import SignalTrace, Unit

from oracles import butterworth_bandpass_gain

FS = 2000.0
CFG = LoadCellConfig()


def mv(x, rate=FS):
    return SignalTrace(np.asarray(x, dtype=float), rate, Unit.MILLIVOLT, label="emg")


def tone(f, seconds=4.0):
    t = np.arange(int(seconds * FS)) / FS
    return np.sin(2 * np.pi * f * t)


class TestBandpass:
    def test_dc_rejected(self):
        y = butterworth_bandpass(mv(np.full(8000, 5.0))).samples
        assert np.max(np.abs(y[2000:-2000])) < 1e-6

    def test_passband_tone(self):
        y = butterworth_bandpass(mv(tone(50))).samples[2000:-2000]
        assert 20 * np.log10(np.max(np.abs(y))) == pytest.approx(0.0, abs=0.1)

    @pytest.mark.parametrize("edge", [10.0, 400.0])
    def test_edges_single_pass(self, edge):
        sos = FilterSpec().design(FS)
        _, h = signal.sosfreqz(sos, worN=[edge], fs=FS)
        db = 20 * np.log10(abs(h[0]))
        assert db == pytest.approx(-3.0, abs=0.5)
        assert db == pytest.approx(20 * np.log10(butterworth_bandpass_gain(edge, 10, 400, 4, FS)), abs=1e-6)

    @pytest.mark.parametrize("edge", [10.0, 400.0])
    def test_edges_forward_backward(self, edge):
        y = butterworth_bandpass(mv(tone(edge, 8.0))).samples[4000:-4000]
        assert 20 * np.log10(np.max(np.abs(y))) == pytest.approx(-6.0, abs=0.5)

    @pytest.mark.parametrize("band", [(10, 1000), (10, 1200), (400, 10), (0, 400)])
    def test_invalid_band(self, band):
        with pytest.raises(InvalidBandError):
            butterworth_bandpass(mv(np.zeros(100)), FilterSpec(4, *band))

    def test_preserves_length_rate_unit(self):
        tr = mv(np.random.default_rng(0).normal(size=777))
        out = butterworth_bandpass(tr)
        assert (len(out), out.rate_hz, out.unit) == (777, FS, Unit.MILLIVOLT)

    def test_short_trace(self):
        assert len(butterworth_bandpass(mv(np.ones(5)))) == 5

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 2**31))
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=(2, 2000))
        f = lambda v: butterworth_bandpass(mv(v)).samples
        lhs = f(a * x + b * y)
        rhs = a * f(x) + b * f(y)
        scale = max(np.max(np.abs(rhs)), 1e-12)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * scale + 1e-12

    def test_zero_phase(self):
        rng = np.random.default_rng(5)
        x = butterworth_bandpass(mv(rng.normal(size=8000)), FilterSpec(4, 30, 200)).samples
        y = butterworth_bandpass(mv(x)).samples
        lags = signal.correlation_lags(x.size, y.size)
        assert lags[np.argmax(signal.correlate(y, x))] == 0


class TestDetrendRectify:
    def test_ramp(self):
        t = np.arange(1000) / FS
        assert np.max(detrend_rectify(mv(3.0 * t - 2.0)).samples) < 1e-9

    def test_sine(self):
        # the residual trend of a whole-period sine shrinks as 1/length
        x = tone(20, 60.0)
        out = detrend_rectify(mv(x))
        assert out.rectified
        assert np.allclose(out.samples, np.abs(x), atol=1e-3)

    def test_residual_orthogonal_to_line(self):
        # oracle: least-squares fit by the normal equations
        rng = np.random.default_rng(2)
        x = rng.normal(size=3001) + np.linspace(0, 5, 3001)
        A = np.column_stack([np.ones(x.size), np.arange(x.size)])
        resid = x - A @ np.linalg.solve(A.T @ A, A.T @ x)
        assert abs(resid.mean()) < 1e-9
        assert np.allclose(detrend_rectify(mv(x)).samples, np.abs(resid), atol=1e-9)


class TestMovingAverage:
    def test_window_is_odd(self):
        assert window_samples(0.2, 2000) == 401
        assert window_samples(0.2, 500) == 101

    def test_constant(self):
        assert np.allclose(moving_average(mv(np.full(3000, 2.5))).samples, 2.5)

    def test_impulse_plateau(self):
        x = np.zeros(2001)
        x[1000] = 1.0
        y = moving_average(mv(x)).samples
        assert np.allclose(y[800:1201], 1 / 401)
        assert np.all(y[:800] == 0) and np.all(y[1201:] == 0)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=600))
    def test_bounded_by_input(self, values):
        x = np.asarray(values)
        y = moving_average(mv(x)).samples
        assert y.min() >= x.min() and y.max() <= x.max()
        assert y.size == x.size


class TestNormalizeAverage:
    def test_mvc_ones(self):
        out = mvc_normalize(mv(np.full(10, 0.25)), 0.25)
        assert np.allclose(out.samples, 1.0) and out.unit is Unit.NORMALIZED_MVC

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_invalid_mvc(self, bad):
        with pytest.raises(InvalidMVCError):
            mvc_normalize(mv(np.ones(3)), bad)

    def test_bilateral(self):
        out = average_bilateral(mv([1, 2, 3]), mv([3, 2, 1]))
        assert np.allclose(out.samples, 2.0)

    def test_bilateral_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            average_bilateral(mv([1, 2, 3]), mv([1, 2]))
        with pytest.raises(ShapeMismatchError):
            average_bilateral(mv([1, 2]), mv([1, 2], rate=500))

    def test_chain_on_constant_is_zero(self):
        out = process_muscle(mv(np.full(4000, 0.7)), mv(np.full(4000, -0.2)), 0.25, 0.25)
        assert np.max(np.abs(out.samples)) < 1e-9


def counts(values):
    return SignalTrace(np.asarray(values, dtype=float), 500.0, Unit.COUNTS)


class TestInterfaceForce:
    def test_zero(self):
        out = build_interface_force(counts([1000] * 5), counts([1000] * 5), CFG, CFG)
        assert np.all(out.samples == 0) and out.unit is Unit.NEWTON

    def test_mean_of_sides(self):
        l = counts([force_to_counts(100.0, CFG)])
        r = counts([force_to_counts(200.0, CFG)])
        assert build_interface_force(l, r, CFG, CFG).samples[0] == pytest.approx(150.0, abs=0.0318)

    def test_known_profile_within_one_count(self):
        t = np.arange(5000) / 500
        truth = 100 + 80 * np.sin(2 * np.pi * 0.1 * t)
        raw = counts(force_to_counts(truth, CFG))
        out = build_interface_force(raw, raw, CFG, CFG)
        assert np.max(np.abs(out.samples - truth)) <= 0.0318

    def test_out_of_range_names_side(self):
        with pytest.raises(OutOfRangeError, match="right"):
            build_interface_force(counts([1000]), counts([0]), CFG, CFG)
