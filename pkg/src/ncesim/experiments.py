"""Bench-style experiments composed from the lower-level modules.

Each function mirrors one characterization run: the swept frequency
response, the gain-versus-coupling sweep, the face-to-face noise
measurement, and the full record-to-annotations detection pipeline.
The CLI exposes them one-to-one; tests drive them directly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import circuit, dsp
from .circuit import CircuitParams, FrequencyResponse
from .dsp import PsdEstimate
from .signals import AnnotationSet, NoiseConfig, Waveform, apply_frontend, synth_noise


def bode_response(params: CircuitParams, fmin: float = 0.1, fmax: float = 10e3,
                  points: int = 400) -> FrequencyResponse:
    """Frequency response of the front end over a log-spaced sweep."""
    if not 0.0 < fmin < fmax:
        raise ValueError(f"sweep bounds must satisfy 0 < fmin < fmax, got {fmin}, {fmax}")
    if points < 2:
        raise ValueError(f"sweep needs at least 2 points, got {points}")
    freqs = np.logspace(np.log10(fmin), np.log10(fmax), points)
    return circuit.evaluate_response(circuit.build_transfer_function(params), freqs)


def frontend_noise_psd(params: CircuitParams, noise: NoiseConfig,
                       duration_s: float = 300.0, fs: float = 500.0,
                       seed=None) -> PsdEstimate:
    """Face-to-face noise measurement, input-referred.

    With the electrodes facing each other there is no physiological source:
    the record is amplifier noise shaped by the amplifier path. Referring it
    to the input divides by the full uncompensated transfer function, which
    is what makes weak coupling (small Cs) show up as a higher noise floor.
    """
    e_n = synth_noise(noise, duration_s, fs, seed)
    output = apply_frontend(e_n, circuit.amplifier_path_tf(params))
    reference_tf = circuit.build_transfer_function(
        replace(params, neutralization_enabled=False))
    return dsp.input_referred_noise(output, reference_tf)


@dataclass(frozen=True)
class PipelineResult:
    """Everything the detection pipeline produces for one record."""

    bandpassed: Waveform
    maternal: AnnotationSet
    residual: Waveform
    fetal: AnnotationSet
    snr_pre_db: float
    snr_post_db: float


def fqrs_pipeline(record: Waveform) -> PipelineResult:
    """Band-pass, detect maternal beats, cancel them, detect fetal beats.

    SNR is reported twice: around the maternal peaks before cancellation
    and around the fetal peaks on the residual.
    """
    bandpassed = dsp.bandpass(record)
    maternal = dsp.detect_maternal_qrs(bandpassed)
    snr_pre = dsp.snr_db(bandpassed, maternal) if len(maternal) else float("nan")
    residual = dsp.cancel_maternal(bandpassed, maternal)
    fetal = dsp.detect_fetal_qrs(residual)
    snr_post = dsp.snr_db(residual, fetal) if len(fetal) else float("nan")
    return PipelineResult(bandpassed, maternal, residual, fetal, snr_pre, snr_post)
