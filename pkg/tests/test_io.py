import math

import numpy as np
import pytest

from ncesim.circuit import CircuitParams
from ncesim.errors import (
    AnnotationParseError,
    BadMagicError,
    FormatError,
    ParameterError,
    TruncatedRecordError,
    UnsupportedVersionError,
)
from ncesim.io import (
    load_config,
    read_annotations,
    read_record,
    read_waveform_csv,
    save_config,
    write_annotations,
    write_gain_sweep_csv,
    write_psd_csv,
    write_record,
    write_response_csv,
    write_waveform_csv,
)
from ncesim.signals import AdcConfig, AnnotationSet, SynthesisConfig, Waveform, adc_quantize

FS = 500.0
HEADER_BYTES = 52


def small_waveform(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    return Waveform(FS, rng.uniform(-1e-3, 1e-3, n))


class TestBinaryRecord:
    def test_codes_round_trip_bit_exactly(self, tmp_path):
        cfg = AdcConfig()
        w = small_waveform()
        path = tmp_path / "a.bin"
        write_record(path, w, cfg)
        back, cfg_back = read_record(path)
        assert cfg_back == cfg
        assert np.array_equal(adc_quantize(back, cfg), adc_quantize(w, cfg))
        lsb = cfg.vref / (2 ** 23 * cfg.pga_gain * cfg.afe_gain)
        assert np.max(np.abs(back.samples - w.samples)) <= 0.5 * lsb

    def test_byte_length_is_header_plus_three_per_sample(self, tmp_path):
        path = tmp_path / "b.bin"
        write_record(path, small_waveform(1000), AdcConfig())
        assert path.stat().st_size == HEADER_BYTES + 3 * 1000

    def test_empty_record_is_header_only(self, tmp_path):
        path = tmp_path / "empty.bin"
        write_record(path, Waveform(FS, np.array([])), AdcConfig())
        assert path.stat().st_size == HEADER_BYTES
        back, _ = read_record(path)
        assert back.samples.size == 0

    def test_write_read_write_is_idempotent(self, tmp_path):
        cfg = AdcConfig()
        first = tmp_path / "c1.bin"
        second = tmp_path / "c2.bin"
        write_record(first, small_waveform(seed=3), cfg)
        w_back, cfg_back = read_record(first)
        write_record(second, w_back, cfg_back)
        assert first.read_bytes() == second.read_bytes()

    def test_truncated_payload_names_counts(self, tmp_path):
        path = tmp_path / "d.bin"
        write_record(path, small_waveform(100), AdcConfig())
        blob = path.read_bytes()
        path.write_bytes(blob[:-1])
        with pytest.raises(TruncatedRecordError, match="299.*300|300.*299"):
            read_record(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "e.bin"
        write_record(path, small_waveform(100), AdcConfig())
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError, match="trailing"):
            read_record(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "f.bin"
        write_record(path, small_waveform(10), AdcConfig())
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(BadMagicError):
            read_record(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "g.bin"
        write_record(path, small_waveform(10), AdcConfig())
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(UnsupportedVersionError):
            read_record(path)

    def test_negative_codes_survive_three_byte_encoding(self, tmp_path):
        cfg = AdcConfig()
        lsb = cfg.vref / (2 ** 23 * cfg.pga_gain * cfg.afe_gain)
        w = Waveform(FS, np.array([-5.0, -1.0, 0.0, 1.0, 5.0]) * 1000.5 * lsb)
        path = tmp_path / "h.bin"
        write_record(path, w, cfg)
        back, _ = read_record(path)
        assert np.array_equal(adc_quantize(back, cfg), adc_quantize(w, cfg))

    def test_sample_rate_mismatch_rejected(self, tmp_path):
        with pytest.raises(ParameterError):
            write_record(tmp_path / "i.bin", Waveform(250.0, np.zeros(10)), AdcConfig())


class TestAnnotations:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.ann"
        write_annotations(path, AnnotationSet(np.array([])))
        assert len(read_annotations(path)) == 0

    def test_round_trip(self, tmp_path):
        path = tmp_path / "a.ann"
        times = AnnotationSet(np.array([0.5, 1.5]))
        write_annotations(path, times)
        assert np.array_equal(read_annotations(path).times, [0.5, 1.5])

    def test_microsecond_resolution(self, tmp_path):
        path = tmp_path / "b.ann"
        times = np.array([0.123456, 7.654321, 100.000001])
        write_annotations(path, AnnotationSet(times))
        assert np.max(np.abs(read_annotations(path).times - times)) < 1e-9

    def test_write_read_write_idempotent(self, tmp_path):
        a, b = tmp_path / "c1.ann", tmp_path / "c2.ann"
        times = AnnotationSet(np.array([0.2004, 1.33333333, 2.5]))
        write_annotations(a, times)
        write_annotations(b, read_annotations(a))
        assert a.read_bytes() == b.read_bytes()

    def test_non_monotonic_file_names_line(self, tmp_path):
        path = tmp_path / "bad.ann"
        path.write_text("1.000000\n2.000000\n1.500000\n")
        with pytest.raises(AnnotationParseError, match="line 3"):
            read_annotations(path)

    def test_garbage_line_names_line(self, tmp_path):
        path = tmp_path / "bad2.ann"
        path.write_text("1.000000\nnot-a-number\n")
        with pytest.raises(AnnotationParseError, match="line 2"):
            read_annotations(path)

    def test_collision_at_microsecond_resolution_rejected(self, tmp_path):
        with pytest.raises(ParameterError):
            write_annotations(tmp_path / "d.ann",
                              AnnotationSet(np.array([1.0000001, 1.0000004])))


class TestConfigFiles:
    def test_empty_file_yields_defaults(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("")
        assert load_config(path, "circuit") == CircuitParams()
        assert load_config(path, "adc") == AdcConfig()
        assert load_config(path, "synthesis") == SynthesisConfig()

    def test_bare_designator_alias(self, tmp_path):
        path = tmp_path / "a.cfg"
        path.write_text("rf1 = 1e6\n")
        assert load_config(path, "circuit").rf1 == 1e6

    def test_unit_bearing_key(self, tmp_path):
        path = tmp_path / "b.cfg"
        path.write_text("rf1_ohm = 2.2e6\ncs_farad = 30e-12\n")
        params = load_config(path, "circuit")
        assert params.rf1 == 2.2e6
        assert params.cs == 30e-12

    def test_invariant_violation_names_field(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("cs = -1e-12\n")
        with pytest.raises(ParameterError, match="cs"):
            load_config(path, "circuit")

    def test_unknown_key_rejected_by_name(self, tmp_path):
        path = tmp_path / "d.cfg"
        path.write_text("warp_drive = 9\n")
        with pytest.raises(ParameterError, match="warp_drive"):
            load_config(path, "circuit")

    def test_kind_mismatch_rejected(self, tmp_path):
        path = tmp_path / "e.cfg"
        path.write_text("kind = adc\n")
        with pytest.raises(ParameterError, match="kind"):
            load_config(path, "circuit")

    def test_kind_line_selects_type(self, tmp_path):
        path = tmp_path / "f.cfg"
        path.write_text("kind = adc\npga_gain = 12\n")
        cfg = load_config(path)
        assert isinstance(cfg, AdcConfig)
        assert cfg.pga_gain == 12.0

    def test_missing_kind_is_ambiguous(self, tmp_path):
        path = tmp_path / "g.cfg"
        path.write_text("")
        with pytest.raises(ParameterError, match="ambiguous"):
            load_config(path)

    def test_synthesis_keys(self, tmp_path):
        path = tmp_path / "h.cfg"
        path.write_text("maternal_rate_bpm = 90\nfetal_attenuation = 0.5\n"
                        "noise_mains_hz = 60\nduration_s = 30\n")
        cfg = load_config(path, "synthesis")
        assert cfg.maternal.heart_rate_bpm == 90.0
        assert cfg.fetal.attenuation == 0.5
        assert cfg.noise.mains_hz == 60.0
        assert cfg.duration_s == 30.0

    @pytest.mark.parametrize("config", [
        CircuitParams(), AdcConfig(), SynthesisConfig(),
        CircuitParams(rin=math.inf, neutralization_enabled=False),
    ])
    def test_save_load_save_idempotent(self, tmp_path, config):
        first, second = tmp_path / "c1.cfg", tmp_path / "c2.cfg"
        save_config(first, config)
        loaded = load_config(first)
        assert loaded == config
        save_config(second, loaded)
        assert first.read_bytes() == second.read_bytes()

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        path = tmp_path / "i.cfg"
        path.write_text("# a comment\n\nrf1 = 5e5  # trailing comment\n")
        assert load_config(path, "circuit").rf1 == 5e5

    def test_duplicate_key_rejected(self, tmp_path):
        path = tmp_path / "j.cfg"
        path.write_text("rf1 = 1\nrf1 = 2\n")
        with pytest.raises(FormatError, match="duplicate"):
            load_config(path, "circuit")


class TestCsvTables:
    def test_waveform_round_trip(self, tmp_path):
        path = tmp_path / "w.csv"
        w = small_waveform(200)
        write_waveform_csv(path, w)
        back = read_waveform_csv(path)
        assert back.sample_rate == pytest.approx(FS)
        assert np.allclose(back.samples, w.samples)

    def test_response_header(self, tmp_path):
        from ncesim.circuit import RationalTransferFunction, evaluate_response
        path = tmp_path / "r.csv"
        fr = evaluate_response(RationalTransferFunction((2.0,), (1.0,)), [1.0, 10.0])
        write_response_csv(path, fr)
        lines = path.read_text().splitlines()
        assert lines[0] == "frequency_hz,gain_db,phase_deg"
        assert len(lines) == 3

    def test_gain_sweep_header(self, tmp_path):
        path = tmp_path / "g.csv"
        write_gain_sweep_csv(path, [(5e-12, 11.0)])
        assert path.read_text().splitlines()[0] == "cs_farad,gain_vv"

    def test_psd_header(self, tmp_path):
        from ncesim.dsp import welch_psd
        path = tmp_path / "p.csv"
        psd = welch_psd(Waveform(FS, np.zeros(2000)), segment_samples=500)
        write_psd_csv(path, psd)
        assert path.read_text().splitlines()[0] == "frequency_hz,density_v2_per_hz"
