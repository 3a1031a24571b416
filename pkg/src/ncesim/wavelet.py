"""Orthonormal discrete wavelet transform on plain arrays.

Daubechies filters with 4 vanishing moments (8 taps), periodized at the
signal boundary, so the analysis operator is exactly orthonormal: energy is
preserved and synthesis is the transpose, giving perfect reconstruction to
machine precision. Odd-length stages are extended by repeating the final
sample; the pre-extension length is recorded so reconstruction can truncate
back (a repeated edge sample keeps constant signals exactly constant, which
zero padding would not).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

# Daubechies scaling filter, 4 vanishing moments. Sum = sqrt(2), unit energy,
# orthogonal to its own even shifts.
DEC_LO = np.array([
    0.230377813308855230,
    0.714846570552541500,
    0.630880767929590400,
    -0.027983769416983850,
    -0.187034811718881140,
    0.030841381835986965,
    0.032883011666982945,
    -0.010597401784997278,
])
# Quadrature mirror: g[m] = (-1)^m * h[L-1-m]
DEC_HI = (DEC_LO[::-1] * np.where(np.arange(DEC_LO.size) % 2 == 0, 1.0, -1.0))


@dataclass(frozen=True)
class WaveletPyramid:
    """Decimated DWT coefficients.

    ``details[0]`` is the finest scale. ``stage_lengths[k]`` is the input
    length seen by analysis stage ``k`` (needed to undo edge extension).
    """

    approx: np.ndarray
    details: tuple
    stage_lengths: tuple

    @property
    def levels(self) -> int:
        return len(self.details)

    def energy(self) -> float:
        return float(sum(np.sum(d * d) for d in self.details) + np.sum(self.approx ** 2))


def _analyze(x, filt):
    # circular correlation followed by downsampling by 2; x has even length
    # (deep stages can be shorter than the filter, so wrap as often as needed)
    n = x.size
    reps = -(-(n + filt.size - 1) // n)
    ext = np.tile(x, reps)[: n + filt.size - 1]
    out = np.zeros(n // 2)
    for m, c in enumerate(filt):
        out += c * ext[m: m + n: 2]
    return out


def _synthesize(approx, detail, n):
    # transpose of the analysis operator; n is the (even) padded stage length
    y = np.zeros(n + DEC_LO.size - 1)
    for m, (lo, hi) in enumerate(zip(DEC_LO, DEC_HI)):
        y[m: m + n: 2] += lo * approx + hi * detail
    for p in range(n, y.size):
        y[p % n] += y[p]
    return y[:n]


def wavedec(x, levels: int) -> WaveletPyramid:
    """Multi-level analysis of a 1-D array."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ParameterError("wavedec expects a 1-D array")
    if levels < 1:
        raise ParameterError(f"levels must be >= 1, got {levels}")
    if 2 ** levels > x.size:
        raise ParameterError(
            f"{levels} levels need at least {2 ** levels} samples, record has {x.size}")
    details = []
    lengths = []
    approx = x
    for _ in range(levels):
        lengths.append(approx.size)
        if approx.size % 2:
            approx = np.append(approx, approx[-1])
        details.append(_analyze(approx, DEC_HI))
        approx = _analyze(approx, DEC_LO)
    return WaveletPyramid(approx, tuple(details), tuple(lengths))


def waverec(pyramid: WaveletPyramid) -> np.ndarray:
    """Inverse of :func:`wavedec`."""
    approx = pyramid.approx
    for detail, length in zip(reversed(pyramid.details), reversed(pyramid.stage_lengths)):
        approx = _synthesize(approx, detail, 2 * detail.size)[:length]
    return approx


def detail_band(x, levels: int, keep) -> np.ndarray:
    """Reconstruction using only the detail scales listed in ``keep`` (1-based)."""
    keep = set(keep)
    if not keep or any(k < 1 or k > levels for k in keep):
        raise ParameterError(f"keep levels must be within 1..{levels}, got {sorted(keep)}")
    pyr = wavedec(x, levels)
    details = tuple(
        d if (i + 1) in keep else np.zeros_like(d) for i, d in enumerate(pyr.details))
    return waverec(WaveletPyramid(np.zeros_like(pyr.approx), details, pyr.stage_lengths))
