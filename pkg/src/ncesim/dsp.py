"""Digital processing pipeline for mixed maternal/fetal ECG records.

Band-pass conditioning, wavelet decomposition, maternal R-peak detection and
template cancellation, fetal R-peak detection on the residual, Welch PSD
estimation, input-referred noise and windowed SNR.

Detectors share one mechanism: reconstruct the wavelet detail scales that
carry QRS energy, square and smooth into an energy envelope, threshold it
adaptively (running median times 2.5, floored at a fraction of the upper
candidate-peak amplitude cluster), then snap each detection to the nearest
local extremum of the signal itself. Maternal detection uses 250 ms
refractory and detail scales 4-5 at 500 Hz; the fetal pass uses 200 ms and
scales 3-4 (narrower complexes, 100-200 bpm rates).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.signal

from . import wavelet
from .circuit import RationalTransferFunction
from .errors import (
    DivisionValidityError,
    InsufficientDataError,
    ParameterError,
    TemplateQualityError,
)
from .signals import AnnotationSet, Waveform

log = logging.getLogger(__name__)

MATERNAL_REFRACTORY_S = 0.250
FETAL_REFRACTORY_S = 0.200
_THRESHOLD_FACTOR = 2.5
_MEDIAN_BLOCK_S = 2.0
_TEMPLATE_HALF_S = 0.300
_SNAP_HALF_S = 0.050


@dataclass(frozen=True)
class FilterSpec:
    """Digital filter request: kind, corner(s), order, design family."""

    kind: str                  # "band-pass" | "high-pass" | "low-pass"
    corners_hz: tuple
    order: int = 4
    family: str = "butterworth"

    def __post_init__(self):
        if self.kind not in ("band-pass", "high-pass", "low-pass"):
            raise ParameterError(f"unknown filter kind {self.kind!r}")
        corners = tuple(float(c) for c in (
            self.corners_hz if isinstance(self.corners_hz, (tuple, list))
            else (self.corners_hz,)))
        expected = 2 if self.kind == "band-pass" else 1
        if len(corners) != expected:
            raise ParameterError(
                f"{self.kind} filter needs {expected} corner(s), got {corners}")
        if any(c <= 0.0 for c in corners):
            raise ParameterError(f"corner frequencies must be positive, got {corners}")
        if expected == 2 and corners[0] >= corners[1]:
            raise ParameterError(f"corners must be ascending, got {corners}")
        if self.order < 1:
            raise ParameterError(f"order must be >= 1, got {self.order}")
        if self.family != "butterworth":
            raise ParameterError(f"unsupported design family {self.family!r}")
        object.__setattr__(self, "corners_hz", corners)


def default_bandpass_spec() -> FilterSpec:
    """Processing band used ahead of QRS detection: 3-250 Hz, 4th order."""
    return FilterSpec("band-pass", (3.0, 250.0), 4)


@dataclass(frozen=True)
class PsdEstimate:
    """One-sided Welch estimate plus the settings that produced it."""

    frequencies: np.ndarray     # Hz
    density: np.ndarray         # V^2/Hz
    segment_samples: int
    overlap: float
    window: str

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if f.shape != d.shape:
            raise ParameterError("frequency and density arrays must match")
        if d.size and np.any(d < 0.0):
            raise ParameterError("spectral density must be nonnegative")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "density", d)

    def total_power(self) -> float:
        """Integral of the density over the estimated band (Parseval check)."""
        df = self.frequencies[1] - self.frequencies[0]
        return float(np.sum(self.density) * df)

    def band_power(self, f_lo: float, f_hi: float) -> float:
        """Integral of the density over [f_lo, f_hi]."""
        df = self.frequencies[1] - self.frequencies[0]
        mask = (self.frequencies >= f_lo) & (self.frequencies <= f_hi)
        return float(np.sum(self.density[mask]) * df)

    def band_rms(self, centre_hz: float) -> float:
        """RMS amplitude in the octave band centred (geometrically) on ``centre_hz``."""
        return math.sqrt(self.band_power(centre_hz / math.sqrt(2.0),
                                         centre_hz * math.sqrt(2.0)))

    def amplitude_density(self) -> np.ndarray:
        """Amplitude spectral density, V/sqrt(Hz)."""
        return np.sqrt(self.density)


def bandpass(w: Waveform, spec: FilterSpec | None = None) -> Waveform:
    """Zero-phase (forward-backward) filtering with the requested design.

    An upper corner at or above the Nyquist frequency is clamped to 0.98 of
    it with a logged note, matching the 250 Hz processing corner at a 500 Hz
    sample rate; a lower corner past Nyquist is a hard error.
    """
    if spec is None:
        spec = default_bandpass_spec()
    nyquist = w.sample_rate / 2.0
    corners = list(spec.corners_hz)
    if corners[0] >= nyquist:
        raise ParameterError(
            f"corner {corners[0]} Hz is not below the Nyquist frequency {nyquist} Hz")
    if corners[-1] >= nyquist:
        clamped = 0.98 * nyquist
        log.info("clamping %g Hz corner to %g Hz (fs = %g Hz)",
                 corners[-1], clamped, w.sample_rate)
        corners[-1] = clamped
    btype = {"band-pass": "bandpass", "high-pass": "highpass", "low-pass": "lowpass"}[spec.kind]
    wn = corners if len(corners) > 1 else corners[0]
    sos = scipy.signal.butter(spec.order, wn, btype=btype, fs=w.sample_rate, output="sos")
    filtered = scipy.signal.sosfiltfilt(sos, w.samples)
    return Waveform(w.sample_rate, filtered, w.label)


def dwt(w: Waveform, levels: int = 4) -> wavelet.WaveletPyramid:
    """Forward wavelet decomposition of a waveform."""
    return wavelet.wavedec(w.samples, levels)


def idwt(pyramid: wavelet.WaveletPyramid, sample_rate: float, label: str = "ch0") -> Waveform:
    """Inverse wavelet reconstruction back to a waveform."""
    return Waveform(sample_rate, wavelet.waverec(pyramid), label)


def _moving_mean(x, win):
    kernel = np.ones(win) / win
    return np.convolve(x, kernel, mode="same")


def _block_median(x, block):
    # coarse running median: median per block, linearly interpolated
    n = x.size
    edges = np.arange(0, n, block)
    centres = np.minimum(edges + block // 2, n - 1)
    meds = np.array([np.median(x[e: min(e + block, n)]) for e in edges])
    if meds.size == 1:
        return np.full(n, meds[0])
    return np.interp(np.arange(n), centres, meds)


def _detect_qrs(w: Waveform, refractory_s: float, detail_scales, envelope_win_s: float,
                cluster_fraction: float) -> AnnotationSet:
    if w.duration < 2.0:
        raise InsufficientDataError(
            f"record is {w.duration:.3g} s long; at least 2 s are needed for detection")
    x = w.samples
    if not np.any(x):
        return AnnotationSet(np.array([]))
    fs = w.sample_rate

    band = wavelet.detail_band(x, max(detail_scales), detail_scales)
    env = np.sqrt(_moving_mean(band * band, max(1, int(round(envelope_win_s * fs)))))

    distance = max(1, int(round(refractory_s * fs)))
    candidates, _ = scipy.signal.find_peaks(env, distance=distance)
    if candidates.size == 0:
        return AnnotationSet(np.array([]))

    # two threshold terms: the running median tracks the noise floor, and a
    # fraction of the upper candidate-height cluster separates the QRS
    # population from smaller rhythmic activity (the other heart, debris)
    med = _block_median(env, max(1, int(round(_MEDIAN_BLOCK_S * fs))))
    cluster = cluster_fraction * np.quantile(env[candidates], 0.80)
    threshold = np.maximum(_THRESHOLD_FACTOR * med, cluster)
    peaks = candidates[env[candidates] > threshold[candidates]]

    # snap each envelope peak to the local extremum of the signal itself
    snap = int(round(_SNAP_HALF_S * fs))
    refined = []
    for p in peaks:
        lo, hi = max(0, p - snap), min(x.size, p + snap + 1)
        refined.append(lo + int(np.argmax(np.abs(x[lo:hi]))))

    # snapping can pull neighbours inside the refractory window; keep the stronger
    kept = []
    for idx in sorted(set(refined)):
        if kept and idx - kept[-1] < distance:
            if env[idx] > env[kept[-1]]:
                kept[-1] = idx
        else:
            kept.append(idx)
    return AnnotationSet(np.array(kept, dtype=float) / fs)


def detect_maternal_qrs(w: Waveform) -> AnnotationSet:
    """Maternal R-peak times on a band-passed record.

    Detail scales 4-5 (7.8-31 Hz at 500 Hz sampling) carry the wide maternal
    complexes; the fetal complexes are both smaller and higher in frequency,
    so the amplitude-cluster threshold rejects them cleanly.
    """
    return _detect_qrs(w, MATERNAL_REFRACTORY_S, (4, 5),
                       envelope_win_s=0.08, cluster_fraction=0.45)


def detect_fetal_qrs(residual: Waveform) -> AnnotationSet:
    """Fetal R-peak times on a maternal-cancelled record.

    Detail scales 3-4 (15.6-62.5 Hz) match the narrower fetal complexes and
    suppress what is left of the maternal baseline after cancellation.
    """
    return _detect_qrs(residual, FETAL_REFRACTORY_S, (3, 4),
                       envelope_win_s=0.04, cluster_fraction=0.40)


def cancel_maternal(w: Waveform, m: AnnotationSet) -> Waveform:
    """Subtract a per-beat least-squares-fitted average template at each R time.

    The template is the mean of +-300 ms segments around beats that fit
    entirely inside the record. Each occurrence (including edge-clipped
    ones) is removed with its own least-squares fit over the template and
    its derivative; the derivative term absorbs the sub-sample misalignment
    between the annotation grid and the true beat position, which would
    otherwise dominate the residual at QRS slopes.
    """
    if len(m) < 3:
        raise TemplateQualityError(
            f"need at least 3 maternal beats to build a template, got {len(m)}")
    fs = w.sample_rate
    half = int(round(_TEMPLATE_HALF_S * fs))
    centres = np.rint(m.times * fs).astype(int)

    full = [c for c in centres if c - half >= 0 and c + half + 1 <= w.samples.size]
    if len(full) < 3:
        raise TemplateQualityError(
            f"only {len(full)} beats fit a +-{_TEMPLATE_HALF_S * 1e3:.0f} ms window; need 3")
    template = np.mean([w.samples[c - half: c + half + 1] for c in full], axis=0)
    slope = np.gradient(template)

    residual = w.samples.copy()
    for c in centres:
        lo, hi = max(0, c - half), min(w.samples.size, c + half + 1)
        window = slice(lo - (c - half), hi - (c - half))
        basis = np.stack([template[window], slope[window]])
        gram = basis @ basis.T
        if gram[0, 0] == 0.0:
            continue
        coeffs, *_ = np.linalg.lstsq(gram, basis @ residual[lo:hi], rcond=None)
        residual[lo:hi] -= coeffs @ basis
    return Waveform(fs, residual, w.label)


def welch_psd(w: Waveform, segment_samples: int | None = None, overlap: float = 0.5,
              window: str = "hann") -> PsdEstimate:
    """One-sided Welch periodogram with the given segmentation."""
    if segment_samples is None:
        segment_samples = int(round(4.0 * w.sample_rate))
    if segment_samples < 2:
        raise ParameterError(f"segment must be at least 2 samples, got {segment_samples}")
    if segment_samples > w.samples.size:
        raise ParameterError(
            f"segment of {segment_samples} samples exceeds the record "
            f"({w.samples.size} samples)")
    if not 0.0 <= overlap <= 0.9:
        raise ParameterError(f"overlap must be in [0, 0.9], got {overlap!r}")
    freqs, density = scipy.signal.welch(
        w.samples, fs=w.sample_rate, window=window, nperseg=segment_samples,
        noverlap=int(round(overlap * segment_samples)))
    return PsdEstimate(freqs, density, segment_samples, overlap, window)


def input_referred_noise(output: Waveform, tf: RationalTransferFunction,
                         segment_samples: int | None = None) -> PsdEstimate:
    """Output PSD divided by |H|^2 per bin, expressed at the electrode input.

    The DC bin is dropped (the front end blocks DC, so |H(0)| = 0 carries no
    information); a transfer magnitude that collapses anywhere else in the
    estimated band makes the division meaningless and raises.
    """
    psd = welch_psd(output, segment_samples)
    freqs = psd.frequencies[1:]
    density = psd.density[1:]
    h = np.abs(tf.at_frequency(freqs))
    if np.any(h < 1e-12):
        worst = freqs[np.argmin(h)]
        raise DivisionValidityError(
            f"|H| < 1e-12 at {worst:.4g} Hz; input-referred division is not valid there")
    return PsdEstimate(freqs, density / h ** 2, psd.segment_samples, psd.overlap, psd.window)


def snr_db(w: Waveform, peaks: AnnotationSet, half_width_s: float = 0.050) -> float:
    """Ratio of mean power inside +-50 ms QRS windows to mean power outside."""
    if len(peaks) == 0:
        raise ParameterError("peak list is empty; SNR needs at least one event window")
    fs = w.sample_rate
    half = int(round(half_width_s * fs))
    inside = np.zeros(w.samples.size, dtype=bool)
    for t in peaks.times:
        c = int(round(t * fs))
        inside[max(0, c - half): min(w.samples.size, c + half + 1)] = True
    if inside.all():
        raise ParameterError(
            "QRS windows cover the entire record; the noise region is empty")
    p_signal = float(np.mean(w.samples[inside] ** 2))
    p_noise = float(np.mean(w.samples[~inside] ** 2))
    if p_noise == 0.0:
        return math.inf
    return 10.0 * math.log10(p_signal / p_noise)
