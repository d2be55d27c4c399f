"""Independent reference computations used by the tests.

None of these call into the package; each recomputes a quantity from
first principles so it can check the production path.
"""
import math

import numpy as np
from scipy.special import gammaln, logsumexp


def butterworth_bandpass_gain(f_hz, low_hz, high_hz, order, fs):
    """|H(f)| of a bilinear-transformed Butterworth band-pass.

    Edges are prewarped, then the analog response of the low-pass
    prototype is evaluated under s -> (s^2 + w0^2) / (B s).
    """
    f = np.asarray(f_hz, dtype=float)
    warp = lambda x: 2 * fs * np.tan(np.pi * x / fs)
    wl, wh, w = warp(low_hz), warp(high_hz), warp(f)
    w0sq = wl * wh
    bw = wh - wl
    with np.errstate(divide="ignore"):
        omega = np.abs((w * w - w0sq) / (bw * w))
    return 1.0 / np.sqrt(1.0 + omega ** (2 * order))


def pearson_two_pass(x, y):
    """Textbook two-pass correlation in plain Python with exact summation."""
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def permutation_p(x, y, shuffles, seed):
    """Two-tailed permutation p-value for |r| by importance-sampled shuffles.

    Plain shuffling cannot resolve tails near 1e-7 with 1e5 draws, so
    pairings are proposed from a defensive mixture of the uniform
    permutation law and Plackett-Luce orderings tilted toward positive and
    negative association.  Plackett-Luce probabilities are exact, so each
    shuffle is reweighted to the uniform law, giving an unbiased estimate.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    xz = (x - x.mean()) / x.std()
    yz = (y - y.mean()) / y.std()
    r_obs = abs(float(np.mean(xz * yz)))
    x_desc = np.sort(xz)[::-1]
    theta = max(r_obs, 0.05)
    thetas = np.array([0.0, theta, -theta])
    est = []
    for start in range(0, shuffles, 20000):
        m = min(20000, shuffles - start)
        comp = rng.integers(0, 3, m)
        keys = np.outer(thetas[comp], yz) + rng.gumbel(size=(m, n))
        order = np.argsort(-keys, axis=1)
        y_ord = yz[order]
        r = (y_ord * x_desc).mean(axis=1)
        log_q = []
        for th in thetas:
            lw = th * y_ord
            tail = np.logaddexp.accumulate(lw[:, ::-1], axis=1)[:, ::-1]
            log_q.append((lw - tail).sum(axis=1))
        log_mix = logsumexp(np.stack(log_q), axis=0) - math.log(3)
        weight = np.exp(-gammaln(n + 1) - log_mix)
        est.append(weight * (np.abs(r) >= r_obs - 1e-12))
    return float(np.concatenate(est).mean())


def exact_correlated_pair(r, n, seed):
    """x, y with sample correlation exactly r."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    e = rng.standard_normal(n)
    x = (x - x.mean()) / x.std()
    e = e - e.mean()
    e = e - (e @ x) / (x @ x) * x
    e = e / e.std()
    return x, r * x + math.sqrt(1 - r * r) * e


def serial_field_widths():
    """Widest decimal rendering of every serial-log field from its wire type."""
    widest_t_us = (2**32 - 1) * 100           # u32 ticks of 100 us
    widest_counts = 2**16 - 1                 # u16 on the CAN frame
    widest_i16 = -(2**15)                     # i16 angle / velocity
    widest_flags = 0b111
    return [len(str(widest_t_us)), len(str(widest_counts)), len(str(widest_counts)),
            len(str(widest_i16)), len(str(widest_i16)), len(str(widest_flags))]
