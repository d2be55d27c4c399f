"""Pearson correlation between interface force and assistance or EMG."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import stats

from .errors import DegenerateInputError, ParseError, ShapeMismatchError
from .segmentation import CycleEnsemble, SessionCondition

WEAK_BELOW = 0.2
STRONG_FROM = 0.5
MUSCLES = ("ESL", "ESI")


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeMismatchError(f"paired series differ in shape: {x.shape} vs {y.shape}")
    if x.size < 3:
        raise DegenerateInputError("need at least 3 paired points")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0 or np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateInputError("zero variance in a paired series")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def t_statistic(r: float, n: int) -> float:
    return r * math.sqrt((n - 2) / (1.0 - r * r))


def pearson_p(r: float, n: int) -> float:
    """Two-tailed p from Student's t with n - 2 degrees of freedom.

    An exact fit (|r| = 1) returns 0.  Otherwise the result is clamped to the
    smallest positive double so it never underflows to zero.
    """
    if n < 3:
        raise DegenerateInputError("need n >= 3")
    if abs(r) >= 1.0:
        return 0.0
    p = 2.0 * stats.t.sf(abs(t_statistic(r, n)), n - 2)
    return float(min(1.0, max(p, np.finfo(float).tiny)))


def strength_band(r: float) -> str:
    a = abs(r)
    if a < WEAK_BELOW:
        return "weak"
    if a < STRONG_FROM:
        return "moderate"
    return "strong"


@dataclass(frozen=True)
class CorrelationReport:
    r: float
    p: float
    n: int | None
    pair: str  # "IF_vs_RA" or "IF_vs_EMG"
    muscle: str | None = None
    subject: str = ""
    load: str = ""  # "w" / "wo"
    exact_fit: bool = False
    p_is_bound: bool = False

    def __post_init__(self):
        if not -1.0 <= self.r <= 1.0:
            raise ValueError("r outside [-1, 1]")
        if self.pair not in ("IF_vs_RA", "IF_vs_EMG"):
            raise ValueError(f"unknown pair {self.pair!r}")
        if self.n is not None and self.n < 3:
            raise ValueError("n must be >= 3")

    @property
    def band(self) -> str:
        return strength_band(self.r)

    @property
    def p_text(self) -> str:
        if self.p_is_bound or self.p < 1e-4:
            return "<0.0001"
        return f"{self.p:.4f}"


REPORT_HEADER = ("subject", "load", "pair", "muscle", "r", "p", "n", "band")


def correlate_ensemble(ensemble: CycleEnsemble, target: str = "ra") -> CorrelationReport:
    """Correlate IF with ``target`` ("ra", "esl" or "esi") over all cycles.

    Series are the concatenated gridded profiles, so n = cycles x grid points.
    """
    key = target.lower()
    x = ensemble.series("if")
    y = ensemble.series(key)
    r = pearson_r(x, y)
    cond = ensemble.condition
    exact = abs(r) >= 1.0
    return CorrelationReport(
        r=r, p=pearson_p(r, x.size), n=int(x.size),
        pair="IF_vs_RA" if key == "ra" else "IF_vs_EMG",
        muscle=None if key == "ra" else key.upper(),
        subject=cond.subject, load=cond.load_label, exact_fit=exact,
    )


def correlate_all(ensemble: CycleEnsemble) -> list[CorrelationReport]:
    keys = ["ra"] + [m.lower() for m in MUSCLES]
    return [correlate_ensemble(ensemble, k) for k in keys
            if all(k in c.profiles for c in ensemble.cycles)]


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for rep in reports:
        p = f"<{1e-4:g}" if rep.p_is_bound else repr(rep.p)
        w.writerow([rep.subject, rep.load, rep.pair, rep.muscle or "", repr(rep.r), p,
                    "" if rep.n is None else rep.n, rep.band])
    return buf.getvalue()


def reports_from_csv(text: str, path=None) -> list[CorrelationReport]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != REPORT_HEADER:
        raise ParseError(f"expected header {','.join(REPORT_HEADER)}", path, 1)
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(REPORT_HEADER):
            raise ParseError(f"expected {len(REPORT_HEADER)} fields, got {len(row)}", path, lineno)
        subject, load, pair, muscle, r, p, n, band = row
        try:
            bound = p.startswith("<")
            rep = CorrelationReport(
                r=float(r), p=float(p.lstrip("<")), n=int(n) if n else None,
                pair=pair, muscle=muscle or None, subject=subject, load=load,
                p_is_bound=bound, exact_fit=abs(float(r)) >= 1.0,
            )
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
        if band and band != rep.band:
            raise ParseError(f"band {band!r} inconsistent with r = {r}", path, lineno)
        out.append(rep)
    return out


def load_fixture(name: str) -> list[CorrelationReport]:
    """Published IF correlations shipped as report CSVs: "published_if_ra" or "published_if_emg"."""
    text = resources.files("cuffsense.data").joinpath(f"{name}.csv").read_text()
    return reports_from_csv(text, path=name)


def format_report_table(reports) -> str:
    """Fixed-width text rendering in the published table layout."""
    head = f"{'Subject':<8}{'Load':<6}{'Pair':<11}{'Muscle':<8}{'r':>7}{'p':>10}{'n':>7}  Band"
    lines = [head, "-" * len(head)]
    for rep in reports:
        n = "-" if rep.n is None else str(rep.n)
        lines.append(
            f"{rep.subject:<8}{rep.load:<6}{rep.pair:<11}{(rep.muscle or '-'):<8}"
            f"{rep.r:>7.2f}{rep.p_text:>10}{n:>7}  {rep.band}"
        )
    return "\n".join(lines) + "\n"
