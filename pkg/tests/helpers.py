"""Shared test utilities: finite differences and independent brute-force oracles.

The oracles here deliberately use plain per-index Python loops so they share
no code path with the library implementations they check.
"""

from __future__ import annotations

import numpy as np

import trits.tensor as tt


def fd_gradient(f, x0: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    flat = grad.ravel()
    for i in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp.ravel()[i] += h
        xm.ravel()[i] -= h
        flat[i] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def rel_err(a, b, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


def gradcheck(make_loss, x0: np.ndarray, h: float = 5e-6) -> float:
    """Max relative error between autodiff and FD gradients of a scalar loss.

    The denominator is floored at 1e-3 so near-zero derivative components are
    compared at an equivalent absolute tolerance (h^2-scale FD noise would
    otherwise dominate a pure ratio).
    """
    x = tt.parameter(np.asarray(x0, dtype=np.float64).copy(), "x")
    make_loss(x).backward()
    analytic = x.grad.copy()

    def f(arr):
        with tt.no_grad():
            return make_loss(tt.Tensor(arr)).item()

    numeric = fd_gradient(f, x0, h)
    return rel_err(analytic, numeric, floor=1e-3)


def mirror_index(i: int, n: int) -> int:
    """Half-sample symmetric reflection of an out-of-range index."""
    while i < 0 or i >= n:
        if i < 0:
            i = -i - 1
        else:
            i = 2 * n - i - 1
    return i


def oracle_dwt_level(x: np.ndarray, dec_lo: np.ndarray,
                     dec_hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force one-level DWT: explicit symmetric indexing, no convolve."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    taps = len(dec_lo)
    out_len = (n + taps - 1) // 2
    lo = np.zeros(out_len)
    hi = np.zeros(out_len)
    for k in range(out_len):
        i = 2 * k + 1  # valid-convolution position after downsampling
        for j in range(taps):
            src = mirror_index(i + taps - 1 - j - (taps - 1), n)
            lo[k] += dec_lo[j] * x[src]
            hi[k] += dec_hi[j] * x[src]
    return lo, hi


def oracle_dwt_multilevel(x: np.ndarray, dec_lo, dec_hi, levels: int):
    """[A_m, D_m, ..., D_1] via the brute-force level transform."""
    approx = np.asarray(x, dtype=np.float64)
    details = []
    for _ in range(levels):
        approx, detail = oracle_dwt_level(approx, dec_lo, dec_hi)
        details.append(detail)
    details.reverse()
    return [approx, *details]


def oracle_selective_scan(u, delta, a_diag, b_in, c_in):
    """Naive per-step recurrence, one batch item and channel at a time.

    Shapes: u/delta (B, N, E); a_diag (E, n); b_in/c_in (B, N, n).
    """
    u = np.asarray(u, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    a_diag = np.asarray(a_diag, dtype=np.float64)
    b_in = np.asarray(b_in, dtype=np.float64)
    c_in = np.asarray(c_in, dtype=np.float64)
    batch, tokens, width = u.shape
    n_state = a_diag.shape[1]
    y = np.zeros((batch, tokens, width))
    for b in range(batch):
        for e in range(width):
            h = np.zeros(n_state)
            for t in range(tokens):
                a_bar = np.exp(delta[b, t, e] * a_diag[e])
                b_bar = (a_bar - 1.0) / a_diag[e] * b_in[b, t]
                h = a_bar * h + b_bar * u[b, t, e]
                y[b, t, e] = float(np.dot(c_in[b, t], h))
    return y


def oracle_acf(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Per-lag normalized autocorrelation of one 1-D series, plain loops."""
    series = np.asarray(series, dtype=np.float64)
    n = len(series)
    mean = sum(series) / n
    centered = [v - mean for v in series]
    var = sum(v * v for v in centered) / n
    acf = np.zeros(max_lag + 1)
    for k in range(max_lag + 1):
        total = 0.0
        for t in range(n - k):
            total += centered[t] * centered[t + k]
        acf[k] = (total / (n - k)) / var
    return acf


def oracle_detect_period(x: np.ndarray, tie_tol: float = 1e-9) -> int:
    """Brute-force period pick: average oracle ACFs, argmax with ties->smallest."""
    x = np.asarray(x, dtype=np.float64)
    batch, length, channels = x.shape
    max_lag = length // 2
    acfs = []
    for b in range(batch):
        for c in range(channels):
            series = x[b, :, c]
            if series.var() > 0:
                acfs.append(oracle_acf(series, max_lag))
    mean_acf = np.mean(acfs, axis=0)
    best = mean_acf[2:].max()
    for lag in range(2, max_lag + 1):
        if mean_acf[lag] >= best - tie_tol:
            return lag
    raise AssertionError("unreachable")


def oracle_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop dense multiply."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out
