import math

import numpy as np
import pytest

from ncesim import wavelet
from ncesim.circuit import RationalTransferFunction
from ncesim.dsp import (
    FilterSpec,
    bandpass,
    cancel_maternal,
    default_bandpass_spec,
    detect_fetal_qrs,
    detect_maternal_qrs,
    dwt,
    idwt,
    input_referred_noise,
    snr_db,
    welch_psd,
)
from ncesim.errors import (
    DivisionValidityError,
    InsufficientDataError,
    ParameterError,
    TemplateQualityError,
)
from ncesim.signals import (
    AnnotationSet,
    EcgSourceConfig,
    NoiseConfig,
    SynthesisConfig,
    Waveform,
    synth_ecg,
    synth_fmecg,
    synth_noise,
)

FS = 500.0


def sine(f, duration, fs=FS, amplitude=1.0):
    t = np.arange(int(duration * fs)) / fs
    return Waveform(fs, amplitude * np.sin(2.0 * np.pi * f * t))


def quiet_config(**kwargs):
    return SynthesisConfig(noise=NoiseConfig(0.0, 0.0, 50.0, 0.0), **kwargs)


def detection_errors(truth, detected, tolerance=0.020):
    """Offset of each truth event to its nearest detection (seconds)."""
    det = np.asarray(detected.times)
    return np.array([np.min(np.abs(det - t)) if det.size else np.inf
                     for t in truth.times])


class TestBandpass:
    def test_dc_removed(self):
        w = Waveform(FS, np.full(5000, 1.5))
        out = bandpass(w)
        assert abs(np.mean(out.samples)) < 1e-6

    def test_out_of_band_sine_attenuated(self):
        spec = FilterSpec("band-pass", (3.0, 245.0), 4)
        out = bandpass(sine(1.0, 60.0), spec)
        middle = slice(int(10 * FS), int(50 * FS))
        attenuation_db = -20.0 * math.log10(
            np.abs(out.samples[middle]).max() / 1.0)
        assert attenuation_db > 12.0

    def test_in_band_sine_preserved(self):
        # quadrature projection: a max-of-samples estimate misses the crest
        # at only 10 samples per cycle
        out = bandpass(sine(50.0, 60.0), FilterSpec("band-pass", (3.0, 245.0), 4))
        x = out.samples[int(10 * FS): int(50 * FS)]
        t = np.arange(x.size) / FS
        c = 2.0 * np.mean(x * np.cos(2.0 * np.pi * 50.0 * t))
        s = 2.0 * np.mean(x * np.sin(2.0 * np.pi * 50.0 * t))
        assert math.hypot(c, s) == pytest.approx(1.0, rel=0.01)

    def test_upper_corner_clamped_at_nyquist(self, caplog):
        with caplog.at_level("INFO", logger="ncesim.dsp"):
            out = bandpass(sine(50.0, 10.0), default_bandpass_spec())
        assert out.samples.size == int(10.0 * FS)
        assert any("clamping" in message for message in caplog.messages)

    def test_zero_phase(self):
        w, _ = synth_ecg(80.0, 1e-3, 0.0, 30.0, FS, seed=1)
        out = bandpass(w)
        lags = np.arange(-20, 21)
        xc = [np.dot(w.samples[20:-20], out.samples[20 + k: out.samples.size - 20 + k])
              for k in lags]
        assert lags[int(np.argmax(xc))] == 0

    def test_bad_corners_rejected(self):
        with pytest.raises(ParameterError):
            FilterSpec("band-pass", (245.0, 3.0), 4)
        with pytest.raises(ParameterError):
            bandpass(sine(10.0, 5.0), FilterSpec("high-pass", (300.0,), 4))

    def test_length_preserved(self):
        w = sine(20.0, 7.3)
        assert bandpass(w).samples.size == w.samples.size


class TestWaveletTransform:
    def test_constant_signal_has_no_detail(self):
        pyramid = dwt(Waveform(FS, np.full(4096, 2.5)), levels=4)
        for detail in pyramid.details:
            assert np.max(np.abs(detail)) < 1e-12

    def test_impulse_energy_preserved(self):
        x = np.zeros(4096)
        x[1000] = 1.0
        pyramid = dwt(Waveform(FS, x), levels=4)
        assert pyramid.energy() == pytest.approx(1.0, rel=1e-9)

    def test_energy_preserved_on_random_input(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(4096)
        pyramid = dwt(Waveform(FS, x), levels=4)
        assert pyramid.energy() == pytest.approx(float(np.sum(x * x)), rel=1e-9)

    def test_perfect_reconstruction(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(4096)
        back = idwt(dwt(Waveform(FS, x), levels=4), FS)
        assert np.max(np.abs(back.samples - x)) < 1e-8 * np.max(np.abs(x))

    def test_reconstruction_with_awkward_length(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(1003)
        back = idwt(dwt(Waveform(FS, x), levels=4), FS)
        assert back.samples.size == 1003
        assert np.max(np.abs(back.samples - x)) < 1e-8

    def test_too_many_levels_rejected(self):
        with pytest.raises(ParameterError):
            dwt(Waveform(FS, np.zeros(16)), levels=5)
        with pytest.raises(ParameterError):
            dwt(Waveform(FS, np.zeros(16)), levels=0)


class TestDetectors:
    def test_clean_maternal_detection(self):
        w, truth = synth_ecg(80.0, 0.85e-3, 0.02, 60.0, FS, seed=6)
        detected = detect_maternal_qrs(bandpass(w))
        assert abs(len(detected) - len(truth)) <= 1
        errors = detection_errors(truth, detected)
        assert np.max(errors[:-1]) <= 0.020  # final beat may straddle the edge
        assert np.quantile(errors, 0.95) <= 0.020

    def test_clean_fetal_detection(self):
        w, truth = synth_ecg(140.0, 0.2125e-3, 0.03, 60.0, FS, seed=7)
        detected = detect_fetal_qrs(bandpass(w))
        assert abs(len(detected) - len(truth)) <= 2
        errors = detection_errors(truth, detected)
        assert np.quantile(errors, 0.95) <= 0.020

    def test_all_zero_record_yields_empty_set(self):
        assert len(detect_maternal_qrs(Waveform(FS, np.zeros(5000)))) == 0
        assert len(detect_fetal_qrs(Waveform(FS, np.zeros(5000)))) == 0

    def test_refractory_spacing_always_respected(self):
        cfg = SynthesisConfig(duration_s=30.0,
                              noise=NoiseConfig(2e-6, 5.0, 50.0, 5e-5))
        mixed, _, _ = synth_fmecg(cfg, seed=8)
        m = detect_maternal_qrs(bandpass(mixed))
        if len(m) > 1:
            assert np.min(np.diff(m.times)) >= 0.250 - 1e-9
        f = detect_fetal_qrs(bandpass(mixed))
        if len(f) > 1:
            assert np.min(np.diff(f.times)) >= 0.200 - 1e-9

    def test_short_record_rejected(self):
        with pytest.raises(InsufficientDataError):
            detect_maternal_qrs(Waveform(FS, np.zeros(100)))

    def test_detection_is_deterministic(self):
        cfg = SynthesisConfig(duration_s=30.0)
        mixed, _, _ = synth_fmecg(cfg, seed=9)
        bp = bandpass(mixed)
        first = detect_maternal_qrs(bp)
        second = detect_maternal_qrs(bp)
        assert np.array_equal(first.times, second.times)


class TestCancelMaternal:
    def test_maternal_only_record_mostly_removed(self):
        cfg = quiet_config(duration_s=60.0,
                           fetal=EcgSourceConfig(140.0, 0.0))
        mixed, m_truth, _ = synth_fmecg(cfg, seed=10)
        bp = bandpass(mixed)
        residual = cancel_maternal(bp, m_truth)
        assert np.std(residual.samples) < 0.10 * np.std(bp.samples)

    def test_zero_template_leaves_input_untouched(self):
        # with no maternal component the averaged template is incoherent
        # noise, so subtracting it barely changes the record (the floor is
        # the sqrt(window/record) self-projection of in-sample averaging)
        cfg = SynthesisConfig(duration_s=120.0,
                              maternal=EcgSourceConfig(80.0, 0.0),
                              fetal=EcgSourceConfig(140.0, 0.0),
                              noise=NoiseConfig(2e-7, 0.0, 50.0, 0.0))
        mixed, _, _ = synth_fmecg(cfg, seed=11)
        bp = bandpass(mixed)
        artificial = AnnotationSet(np.arange(0.8, 119.0, 1.5))
        residual = cancel_maternal(bp, artificial)
        assert np.std(residual.samples - bp.samples) < 0.10 * np.std(bp.samples)
        assert np.corrcoef(residual.samples, bp.samples)[0, 1] > 0.99

    def test_fetal_peaks_survive_cancellation(self):
        cfg = quiet_config(duration_s=120.0)
        mixed, m_truth, f_truth = synth_fmecg(cfg, seed=12)
        bp = bandpass(mixed)
        residual = cancel_maternal(bp, m_truth)
        fetal_only, _ = synth_ecg(cfg.fetal.heart_rate_bpm, cfg.fetal.r_amplitude_v,
                                  cfg.fetal.hrv_jitter, cfg.duration_s, FS,
                                  np.random.SeedSequence(12).spawn(3)[1])
        reference = bandpass(fetal_only)
        ratios = []
        for t in f_truth.times:
            if np.min(np.abs(m_truth.times - t)) < 0.12:
                continue  # fetal beat collides with a maternal complex
            i = int(round(t * FS))
            if i < 25 or i > residual.samples.size - 25:
                continue
            got = np.max(np.abs(residual.samples[i - 10: i + 11]))
            want = np.max(np.abs(reference.samples[i - 10: i + 11]))
            ratios.append(got / want)
        ratios = np.array(ratios)
        assert abs(np.median(ratios) - 1.0) <= 0.15
        assert np.quantile(np.abs(ratios - 1.0), 0.9) <= 0.15

    def test_too_few_beats_rejected(self):
        w = Waveform(FS, np.random.default_rng(0).standard_normal(5000))
        with pytest.raises(TemplateQualityError):
            cancel_maternal(w, AnnotationSet(np.array([1.0, 2.0])))

    def test_length_preserved(self):
        cfg = quiet_config(duration_s=20.0)
        mixed, m_truth, _ = synth_fmecg(cfg, seed=13)
        residual = cancel_maternal(bandpass(mixed), m_truth)
        assert residual.samples.size == mixed.samples.size


class TestWelch:
    def test_white_noise_density_and_integral(self):
        rng = np.random.default_rng(14)
        w = Waveform(FS, rng.standard_normal(int(120.0 * FS)))
        psd = welch_psd(w)
        band = (psd.frequencies >= 10.0) & (psd.frequencies <= 100.0)
        assert np.mean(psd.density[band]) == pytest.approx(2.0 / FS, rel=0.05)
        assert psd.total_power() == pytest.approx(1.0, rel=0.05)

    def test_tone_power_recovered(self):
        amplitude = 3.7e-3
        w = sine(50.0, 120.0, amplitude=amplitude)
        psd = welch_psd(w)
        assert psd.band_power(48.0, 52.0) == pytest.approx(amplitude ** 2 / 2.0, rel=0.05)

    def test_zero_signal_gives_zero_density(self):
        psd = welch_psd(Waveform(FS, np.zeros(4000)))
        assert not np.any(psd.density)

    def test_segment_longer_than_record_rejected(self):
        with pytest.raises(ParameterError):
            welch_psd(Waveform(FS, np.zeros(1000)), segment_samples=2000)

    def test_overlap_range_checked(self):
        with pytest.raises(ParameterError):
            welch_psd(Waveform(FS, np.zeros(4000)), segment_samples=500, overlap=0.95)

    def test_halving_segment_halves_estimator_variance(self):
        # per-bin variance across 50 trials roughly doubles with segment length
        rng = np.random.default_rng(15)
        long_bins, short_bins = [], []
        for _ in range(50):
            w = Waveform(FS, rng.standard_normal(int(60.0 * FS)))
            long_bins.append(welch_psd(w, segment_samples=2000).density)
            short_bins.append(welch_psd(w, segment_samples=1000).density)
        var_long = np.var(np.array(long_bins), axis=0)[10:-10]
        var_short = np.var(np.array(short_bins), axis=0)[10:-10:2][: var_long.size]
        ratio = np.mean(var_long) / np.mean(var_short)
        assert 1.5 <= ratio <= 2.5


class TestInputReferredNoise:
    def test_flat_gain_division(self):
        rng = np.random.default_rng(16)
        w = Waveform(FS, rng.standard_normal(int(60.0 * FS)))
        tf = RationalTransferFunction((11.0,), (1.0,))
        out_psd = welch_psd(w)
        in_psd = input_referred_noise(w, tf)
        assert np.allclose(in_psd.density, out_psd.density[1:] / 121.0)

    def test_collapsed_transfer_magnitude_rejected(self):
        w = Waveform(FS, np.random.default_rng(17).standard_normal(4000))
        nearly_zero = RationalTransferFunction((1e-20,), (1.0, 1e-6))
        with pytest.raises(DivisionValidityError):
            input_referred_noise(w, nearly_zero)


class TestSnr:
    def test_clean_synthetic_has_high_snr(self):
        # the noise-free floor is the P and T waves outside the QRS windows;
        # with this morphology that leaves roughly 15 dB
        w, truth = synth_ecg(80.0, 1e-3, 0.02, 60.0, FS, seed=18)
        assert snr_db(bandpass(w), truth) > 12.0

    def test_pure_noise_with_artificial_peaks_is_near_zero(self):
        rng = np.random.default_rng(19)
        w = Waveform(FS, rng.standard_normal(int(60.0 * FS)))
        peaks = AnnotationSet(np.arange(1.0, 59.0, 0.7))
        assert abs(snr_db(w, peaks)) < 1.0

    def test_added_noise_decreases_snr(self):
        w, truth = synth_ecg(80.0, 1e-3, 0.02, 60.0, FS, seed=20)
        rng = np.random.default_rng(21)
        noise = rng.standard_normal(w.samples.size)
        values = []
        for sigma in (1e-5, 3e-5, 1e-4):
            noisy = Waveform(FS, w.samples + sigma * noise)
            values.append(snr_db(bandpass(noisy), truth))
        assert values[0] > values[1] > values[2]

    def test_windows_covering_record_rejected(self):
        w = Waveform(FS, np.ones(int(2.0 * FS)))
        peaks = AnnotationSet(np.arange(0.04, 1.99, 0.08))
        with pytest.raises(ParameterError):
            snr_db(w, peaks)

    def test_empty_peaks_rejected(self):
        with pytest.raises(ParameterError):
            snr_db(Waveform(FS, np.ones(1000)), AnnotationSet(np.array([])))


class TestPipelineMonotonicity:
    def test_fetal_f1_non_increasing_in_noise(self):
        from ncesim.eval import f1, match_annotations
        from ncesim.experiments import fqrs_pipeline

        scores = []
        for sigma in (2.31e-7, 2e-6, 8e-6):
            per_seed = []
            for seed in (0, 1, 2):
                cfg = SynthesisConfig(
                    duration_s=60.0,
                    noise=NoiseConfig(sigma, 5.0, 50.0, 1.2e-5))
                mixed, _, f_truth = synth_fmecg(cfg, seed=seed)
                result = fqrs_pipeline(mixed)
                per_seed.append(f1(match_annotations(f_truth, result.fetal)))
            scores.append(np.mean(per_seed))
        assert scores[0] >= scores[1] >= scores[2]
        assert scores[0] > scores[2]
