import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cuffsense.errors import DegenerateInputError, ParseError, ShapeMismatchError
from cuffsense.metrics import (
    CorrelationReport,
    correlate_all,
    correlate_ensemble,
    format_report_table,
    load_fixture,
    pearson_p,
    pearson_r,
    reports_from_csv,
    reports_to_csv,
    strength_band,
    t_statistic,
)
from cuffsense.segmentation import CycleEnsemble, LiftCycle, SessionCondition

from oracles import pearson_two_pass

vectors = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=5, max_size=60)


class TestPearsonR:
    def test_exact_relations(self):
        assert pearson_r([1, 2, 3], [2, 4, 6]) == 1.0
        assert pearson_r([1, 2, 3], [3, 2, 1]) == -1.0

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(3, 300))
            x = rng.normal(size=n) * rng.uniform(0.1, 100)
            y = 0.3 * x + rng.normal(size=n)
            assert abs(pearson_r(x, y) - pearson_two_pass(x.tolist(), y.tolist())) < 1e-12

    def test_errors(self):
        with pytest.raises(ShapeMismatchError):
            pearson_r([1, 2, 3], [1, 2])
        with pytest.raises(DegenerateInputError):
            pearson_r([1, 1, 1], [1, 2, 3])
        with pytest.raises(DegenerateInputError):
            pearson_r([1, 2], [1, 2])

    @given(st.integers(0, 2**31), st.floats(0.01, 100), st.floats(-100, 100))
    def test_affine_invariance(self, seed, a, b):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=(2, 50))
        r = pearson_r(x, y)
        assert pearson_r(a * x + b, y) == pytest.approx(r, abs=1e-12)
        assert pearson_r(-a * x + b, y) == pytest.approx(-r, abs=1e-12)

    @given(vectors, st.integers(0, 2**31))
    def test_symmetry(self, xs, seed):
        x = np.asarray(xs)
        y = np.random.default_rng(seed).normal(size=x.size)
        try:
            r = pearson_r(x, y)
        except DegenerateInputError:
            return
        assert pearson_r(y, x) == r


class TestPearsonP:
    def test_null(self):
        for n in (3, 10, 1000):
            assert pearson_p(0.0, n) == pytest.approx(1.0)

    def test_t_value(self):
        assert t_statistic(0.5, 100) == pytest.approx(5.715, abs=5e-4)

    def test_exact_fit_is_zero(self):
        assert pearson_p(1.0, 10) == 0.0
        assert pearson_p(-1.0, 10) == 0.0

    def test_never_underflows(self):
        assert pearson_p(0.9999, 1010) > 0.0

    @given(st.floats(0.0, 0.98), st.floats(0.0, 0.98), st.integers(5, 500))
    def test_monotone_in_r(self, a, b, n):
        lo, hi = sorted((a, b))
        assert pearson_p(hi, n) <= pearson_p(lo, n)

    @given(st.floats(0.05, 0.9), st.integers(5, 300), st.integers(1, 300))
    def test_monotone_in_n(self, r, n, extra):
        assert pearson_p(r, n + extra) <= pearson_p(r, n)


class TestBands:
    @pytest.mark.parametrize("r, band", [
        (0.33, "moderate"), (0.18, "weak"), (0.17, "weak"), (0.16, "weak"),
        (0.80, "strong"), (0.2, "moderate"), (0.5, "strong"), (-0.6, "strong"),
    ])
    def test_band(self, r, band):
        assert strength_band(r) == band

    def test_if_ra_fixture(self):
        reps = load_fixture("published_if_ra")
        assert [r.r for r in reps] == [0.80, 0.78, 0.61, 0.58]
        assert [r.band for r in reps] == ["strong"] * 4
        assert all(r.p_text == "<0.0001" and r.n is None for r in reps)

    def test_if_emg_fixture(self):
        bands = {(r.subject, r.load, r.muscle): r.band for r in load_fixture("published_if_emg")}
        assert bands[("2", "w", "ESL")] == "moderate"
        assert bands[("2", "wo", "ESL")] == "weak"
        assert bands[("1", "w", "ESI")] == "strong"


def ensemble_from(if_rows, ra_rows):
    g = np.linspace(0, 100, len(if_rows[0]))
    cycles = tuple(LiftCycle(g, {"if": a, "ra": b, "esl": b ** 2}, (i, i + 1))
                   for i, (a, b) in enumerate(zip(if_rows, ra_rows)))
    return CycleEnsemble(cycles, SessionCondition("S1", True))


class TestReports:
    def test_affine_ra_is_exact(self):
        rows = np.random.default_rng(1).normal(size=(10, 101))
        rep = correlate_ensemble(ensemble_from(rows, 2 * rows + 3), "ra")
        assert rep.r == pytest.approx(1.0) and rep.band == "strong"
        assert rep.n == 1010 and rep.load == "w" and rep.pair == "IF_vs_RA"

    def test_correlate_all_pairs(self):
        rows = np.random.default_rng(2).normal(size=(10, 101))
        reps = correlate_all(ensemble_from(rows, rows))
        assert [(r.pair, r.muscle) for r in reps] == [("IF_vs_RA", None), ("IF_vs_EMG", "ESL")]

    def test_csv_round_trip(self):
        reps = [CorrelationReport(0.61, 3e-5, 1010, "IF_vs_EMG", "ESI", "S1", "wo"),
                CorrelationReport(-0.1, 0.2, 50, "IF_vs_RA")]
        back = reports_from_csv(reports_to_csv(reps))
        assert back == reps

    def test_inconsistent_band_rejected(self):
        text = "subject,load,pair,muscle,r,p,n,band\n1,w,IF_vs_RA,,0.3,0.01,100,strong\n"
        with pytest.raises(ParseError) as info:
            reports_from_csv(text)
        assert info.value.line == 2

    def test_table_rendering(self):
        text = format_report_table(load_fixture("published_if_ra"))
        lines = text.splitlines()
        assert len(lines) == 6
        assert all("strong" in ln and "<0.0001" in ln for ln in lines[2:])
