"""Multi-level discrete wavelet transform (Mallat cascade).

One analysis level symmetric-extends the signal by ``taps - 1`` samples on
each side, convolves with the decomposition filter pair and keeps every
second sample, so a length-n level yields ``floor((n + taps - 1) / 2)``
coefficients. Synthesis upsamples, convolves with the reconstruction pair
and crops; the pair is exact-inverse for the supported filter banks.

Because every stage is linear, each level is also exposed as a dense
matrix so batched (and differentiable) transforms reduce to matmuls.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ShapeError

_SQRT3 = np.sqrt(3.0)
_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class WaveletFilter:
    """Orthonormal analysis/synthesis filter bank."""

    name: str
    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray

    @property
    def taps(self) -> int:
        return len(self.dec_lo)


def _bank_from_scaling(name: str, h: np.ndarray) -> WaveletFilter:
    h = np.asarray(h, dtype=np.float64)
    taps = len(h)
    rec_lo = h
    dec_lo = h[::-1].copy()
    rec_hi = np.array([(-1.0) ** k * h[taps - 1 - k] for k in range(taps)])
    dec_hi = rec_hi[::-1].copy()
    return WaveletFilter(name, dec_lo, dec_hi, rec_lo, rec_hi)


_FAMILIES = {
    "haar": np.array([1.0, 1.0]) / _SQRT2,
    "db2": np.array(
        [1.0 + _SQRT3, 3.0 + _SQRT3, 3.0 - _SQRT3, 1.0 - _SQRT3]
    ) / (4.0 * _SQRT2),
}
_FAMILIES["db1"] = _FAMILIES["haar"]


def get_filter(name: str) -> WaveletFilter:
    key = name.lower()
    if key not in _FAMILIES:
        raise ConfigError(
            f"unknown wavelet family {name!r}; available: {sorted(_FAMILIES)}"
        )
    return _bank_from_scaling(key, _FAMILIES[key])


def level_length(n: int, taps: int) -> int:
    return (n + taps - 1) // 2


def coeff_lengths(n: int, taps: int, levels: int) -> list[int]:
    """[n, l_1, ..., l_m] under the analysis length recursion."""
    out = [n]
    for _ in range(levels):
        out.append(level_length(out[-1], taps))
    return out


def max_levels(n: int, taps: int) -> int:
    """Deepest m such that the level-m approximation still spans the filter."""
    m = 0
    length = n
    while level_length(length, taps) >= taps:
        length = level_length(length, taps)
        m += 1
    return m


def _symmetric_ext(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    if len(x) < pad:
        # fold repeatedly for very short signals
        left, right = [], []
        src = x
        while len(left) < pad:
            left = list(src[::-1]) + left
            right = right + list(src[::-1])
            src = src[::-1]
        return np.concatenate([np.array(left[-pad:]), x, np.array(right[:pad])])
    return np.concatenate([x[pad - 1::-1], x, x[:-pad - 1:-1]])


def dwt_level_1d(x: np.ndarray, filt: WaveletFilter) -> tuple[np.ndarray, np.ndarray]:
    """One analysis level on a 1-D signal."""
    pad = filt.taps - 1
    ext = _symmetric_ext(np.asarray(x, dtype=np.float64), pad)
    lo = np.convolve(ext, filt.dec_lo, mode="valid")[1::2]
    hi = np.convolve(ext, filt.dec_hi, mode="valid")[1::2]
    return lo, hi


def idwt_level_1d(a: np.ndarray, d: np.ndarray, filt: WaveletFilter,
                  out_len: int) -> np.ndarray:
    """One synthesis level; output cropped to ``out_len``."""
    a = np.asarray(a, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if a.shape != d.shape:
        raise ShapeError(f"idwt level: approx {a.shape} vs detail {d.shape}")
    up_a = np.zeros(2 * len(a))
    up_d = np.zeros(2 * len(d))
    up_a[0::2] = a
    up_d[0::2] = d
    rec = np.convolve(up_a, filt.rec_lo) + np.convolve(up_d, filt.rec_hi)
    start = filt.taps - 2
    available = 2 * len(a) - filt.taps + 2
    if out_len > available:
        raise ShapeError(
            f"idwt level: cannot produce {out_len} samples from {len(a)} coefficients"
        )
    return rec[start:start + out_len]


@lru_cache(maxsize=None)
def _analysis_matrices(n: int, family: str) -> tuple[np.ndarray, np.ndarray]:
    filt = get_filter(family)
    length = level_length(n, filt.taps)
    m_lo = np.empty((length, n))
    m_hi = np.empty((length, n))
    basis = np.zeros(n)
    for j in range(n):
        basis[j] = 1.0
        lo, hi = dwt_level_1d(basis, filt)
        m_lo[:, j] = lo
        m_hi[:, j] = hi
        basis[j] = 0.0
    return m_lo, m_hi


@lru_cache(maxsize=None)
def _synthesis_matrices(length: int, family: str,
                        out_len: int) -> tuple[np.ndarray, np.ndarray]:
    filt = get_filter(family)
    s_lo = np.empty((out_len, length))
    s_hi = np.empty((out_len, length))
    basis = np.zeros(length)
    zero = np.zeros(length)
    for j in range(length):
        basis[j] = 1.0
        s_lo[:, j] = idwt_level_1d(basis, zero, filt, out_len)
        s_hi[:, j] = idwt_level_1d(zero, basis, filt, out_len)
        basis[j] = 0.0
    return s_lo, s_hi


def analysis_matrices(n: int, filt: WaveletFilter) -> tuple[np.ndarray, np.ndarray]:
    return _analysis_matrices(n, filt.name)


def synthesis_matrices(length: int, filt: WaveletFilter,
                       out_len: int) -> tuple[np.ndarray, np.ndarray]:
    return _synthesis_matrices(length, filt.name, out_len)


@dataclass
class WaveletPyramid:
    """Top-level approximation plus per-level details (deepest first).

    ``approx`` has length ``lengths[-1]``; ``details[i]`` is the level
    ``levels - i`` detail, so ``details[0]`` is the deepest and
    ``details[-1]`` the level-1 detail. ``lengths`` stores
    ``[l_0, l_1, ..., l_m]`` for exact-length reconstruction.
    """

    approx: np.ndarray
    details: list[np.ndarray]
    lengths: list[int]
    family: str

    @property
    def levels(self) -> int:
        return len(self.details)

    def components(self) -> list[np.ndarray]:
        """[A_m, D_m, ..., D_1]."""
        return [self.approx, *self.details]


def _apply_along(matrix: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    moved = np.tensordot(matrix, x, axes=(1, axis))
    return np.moveaxis(moved, 0, axis)


def dwt_multilevel(x: np.ndarray, filt: WaveletFilter, levels: int,
                   axis: int = -2) -> WaveletPyramid:
    """m-level analysis along ``axis`` (default: the length axis of B x L x C)."""
    x = np.asarray(x, dtype=np.float64)
    axis = axis % x.ndim
    n = x.shape[axis]
    if levels < 1:
        raise ConfigError(f"levels must be >= 1, got {levels}")
    feasible = max_levels(n, filt.taps)
    if levels > feasible:
        raise ConfigError(
            f"length {n} supports at most {feasible} {filt.name} levels, got {levels}"
        )
    lengths = coeff_lengths(n, filt.taps, levels)
    approx = x
    details: list[np.ndarray] = []
    for i in range(levels):
        m_lo, m_hi = analysis_matrices(lengths[i], filt)
        details.append(_apply_along(m_hi, approx, axis))
        approx = _apply_along(m_lo, approx, axis)
    details.reverse()
    return WaveletPyramid(approx, details, lengths, filt.name)


def idwt_multilevel(pyr: WaveletPyramid, filt: WaveletFilter,
                    target_length: int, axis: int = -2) -> np.ndarray:
    """Inverse cascade; final level cropped to ``target_length``."""
    approx = np.asarray(pyr.approx, dtype=np.float64)
    axis = axis % approx.ndim
    lengths = pyr.lengths
    for i, detail in enumerate(pyr.details):
        level = pyr.levels - i  # current level being undone
        if detail.shape[axis] != approx.shape[axis]:
            raise ShapeError(
                f"pyramid level {level}: approx length {approx.shape[axis]} "
                f"vs detail length {detail.shape[axis]}"
            )
        out_len = lengths[level - 1] if level > 1 else target_length
        s_lo, s_hi = synthesis_matrices(approx.shape[axis], filt, out_len)
        approx = _apply_along(s_lo, approx, axis) + _apply_along(s_hi, detail, axis)
    return approx
