"""File formats: binary records, annotation lists, config files, CSV tables.

All formats are documented byte-by-byte / line-by-line in docs/formats.md.
Readers never repair: any inconsistency (magic, version, payload length,
ordering, unknown keys) raises a named error instead of guessing.
"""

from __future__ import annotations

import dataclasses
import decimal
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circuit import CircuitParams
from .errors import (
    AnnotationParseError,
    BadMagicError,
    FormatError,
    ParameterError,
    TruncatedRecordError,
    UnsupportedVersionError,
)
from .signals import (
    AdcConfig,
    AnnotationSet,
    SynthesisConfig,
    Waveform,
    adc_decode,
    adc_quantize,
)

RECORD_MAGIC = b"NCER"
RECORD_VERSION = 1
# little-endian: magic, version, channels, resolution bits, reserved,
# sample rate, vref, pga gain, afe gain, sample count
_HEADER = struct.Struct("<4sHHHHddddQ")


@dataclass(frozen=True)
class RecordHeader:
    magic: bytes
    version: int
    channels: int
    resolution_bits: int
    sample_rate_hz: float
    vref: float
    pga_gain: float
    afe_gain: float
    sample_count: int

    def adc_config(self) -> AdcConfig:
        return AdcConfig(self.vref, self.resolution_bits, self.pga_gain,
                         self.afe_gain, self.sample_rate_hz)


def _encode_codes(codes: np.ndarray) -> bytes:
    """Signed codes to 3-byte big-endian two's complement."""
    u = codes.astype(np.int64) & 0xFFFFFF
    out = np.empty((codes.size, 3), dtype=np.uint8)
    out[:, 0] = (u >> 16) & 0xFF
    out[:, 1] = (u >> 8) & 0xFF
    out[:, 2] = u & 0xFF
    return out.tobytes()


def _decode_codes(payload: bytes) -> np.ndarray:
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3).astype(np.int64)
    u = (raw[:, 0] << 16) | (raw[:, 1] << 8) | raw[:, 2]
    return np.where(u >= 1 << 23, u - (1 << 24), u).astype(np.int32)


def write_record(path, w: Waveform, cfg: AdcConfig) -> None:
    """Quantize a waveform and store it with its acquisition settings."""
    if w.sample_rate != cfg.sample_rate_hz:
        raise ParameterError(
            f"waveform sample rate {w.sample_rate} Hz does not match the ADC "
            f"configuration ({cfg.sample_rate_hz} Hz)")
    codes = adc_quantize(w, cfg)  # 16-bit codes also fit the 3-byte sample slots
    header = _HEADER.pack(RECORD_MAGIC, RECORD_VERSION, 1, cfg.resolution_bits, 0,
                          cfg.sample_rate_hz, cfg.vref, cfg.pga_gain, cfg.afe_gain,
                          codes.size)
    Path(path).write_bytes(header + _encode_codes(codes))


def read_record_header(path) -> RecordHeader:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise TruncatedRecordError(
            f"file is {len(blob)} bytes; the header alone needs {_HEADER.size}")
    magic, version, channels, bits, _, fs, vref, pga, afe, count = \
        _HEADER.unpack_from(blob)
    if magic != RECORD_MAGIC:
        raise BadMagicError(f"expected magic {RECORD_MAGIC!r}, found {magic!r}")
    if version != RECORD_VERSION:
        raise UnsupportedVersionError(f"record version {version} is not supported")
    if channels != 1:
        raise FormatError(f"only single-channel records are supported, found {channels}")
    return RecordHeader(magic, version, channels, bits, fs, vref, pga, afe, count)


def read_record(path) -> tuple[Waveform, AdcConfig]:
    """Load a record; voltages are input-referred per the stored gains."""
    header = read_record_header(path)
    blob = Path(path).read_bytes()
    payload = blob[_HEADER.size:]
    expected = 3 * header.sample_count * header.channels
    if len(payload) < expected:
        raise TruncatedRecordError(
            f"payload holds {len(payload)} bytes but the header promises {expected}")
    if len(payload) > expected:
        raise FormatError(
            f"{len(payload) - expected} trailing bytes after the declared payload")
    cfg = header.adc_config()
    codes = _decode_codes(payload) if expected else np.array([], dtype=np.int32)
    return adc_decode(codes, cfg), cfg


def write_annotations(path, annotations: AnnotationSet) -> None:
    """One event time per line, seconds with 6 decimals."""
    rendered = [f"{t:.6f}" for t in annotations.times]
    for i in range(1, len(rendered)):
        if float(rendered[i]) <= float(rendered[i - 1]):
            raise ParameterError(
                f"events {i} and {i + 1} collide at 1 us resolution "
                f"({rendered[i - 1]} vs {rendered[i]})")
    Path(path).write_text("".join(line + "\n" for line in rendered), encoding="ascii")


def read_annotations(path) -> AnnotationSet:
    times = []
    with open(path, "r", encoding="ascii") as handle:
        for number, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                value = float(text)
            except ValueError:
                raise AnnotationParseError(number, f"not a number: {text!r}") from None
            if times and value <= times[-1]:
                raise AnnotationParseError(
                    number, f"time {value} is not after the previous event {times[-1]}")
            times.append(value)
    return AnnotationSet(np.array(times))


# --- flat key = value config files -----------------------------------------

_CIRCUIT_KEYS = {
    "cs_farad": "cs", "rs_ohm": "rs", "rin_ohm": "rin", "cin_farad": "cin",
    "rd_ohm": "rd", "rb_ohm": "rb", "rc_ohm": "rc", "rf1_ohm": "rf1",
    "rf2_ohm": "rf2", "cf1_farad": "cf1", "rn1_ohm": "rn1", "rn2_ohm": "rn2",
    "cn_farad": "cn", "r2_ohm": "r2", "c2_farad": "c2", "r3_ohm": "r3",
    "c3_farad": "c3", "neutralization_enabled": "neutralization_enabled",
}
_SYNTH_KEYS = {
    "maternal_rate_bpm": ("maternal", "heart_rate_bpm"),
    "maternal_r_amplitude_volt": ("maternal", "r_amplitude_v"),
    "maternal_hrv_jitter": ("maternal", "hrv_jitter"),
    "fetal_rate_bpm": ("fetal", "heart_rate_bpm"),
    "fetal_r_amplitude_volt": ("fetal", "r_amplitude_v"),
    "fetal_hrv_jitter": ("fetal", "hrv_jitter"),
    "fetal_attenuation": ("fetal", "attenuation"),
    "noise_white_v_per_rthz": ("noise", "white_density_v_rthz"),
    "noise_flicker_corner_hz": ("noise", "flicker_corner_hz"),
    "noise_mains_hz": ("noise", "mains_hz"),
    "noise_mains_amplitude_volt": ("noise", "mains_amplitude_v"),
    "duration_s": (None, "duration_s"),
    "sample_rate_hz": (None, "sample_rate_hz"),
}
_ADC_KEYS = {
    "vref_volt": "vref", "resolution_bits": "resolution_bits",
    "pga_gain": "pga_gain", "afe_gain": "afe_gain", "sample_rate_hz": "sample_rate_hz",
}
# bare component designators are accepted as shorthand for the unit-bearing names
_CIRCUIT_ALIASES = {field: key for key, field in _CIRCUIT_KEYS.items()}

_KINDS = ("circuit", "synthesis", "adc")


def _parse_flat(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise FormatError(f"{path}: line {number}: expected 'key = value'")
            key, _, raw = text.partition("=")
            key = key.strip().lower()
            if key in values:
                raise FormatError(f"{path}: line {number}: duplicate key {key!r}")
            values[key] = raw.strip()
    return values


def _parse_bool(raw, key):
    lowered = raw.lower()
    if lowered in ("true", "on", "yes", "1"):
        return True
    if lowered in ("false", "off", "no", "0"):
        return False
    raise ParameterError(f"{key} must be a boolean, got {raw!r}")


def _parse_float(raw, key):
    try:
        return float(raw)
    except ValueError:
        raise ParameterError(f"{key} must be a number, got {raw!r}") from None


def load_config(path, kind: str | None = None):
    """Load a flat ``key = value`` file into the matching config object.

    The file may carry ``kind = circuit|synthesis|adc``; otherwise the
    caller must say what it expects. Unknown keys are rejected by name,
    missing keys fall back to the documented defaults, and the resulting
    object re-validates every invariant.
    """
    values = _parse_flat(path)
    file_kind = values.pop("kind", None)
    if file_kind is not None and file_kind not in _KINDS:
        raise ParameterError(f"kind must be one of {_KINDS}, got {file_kind!r}")
    if kind is not None and file_kind is not None and kind != file_kind:
        raise ParameterError(
            f"config file declares kind = {file_kind!r} but {kind!r} was requested")
    kind = kind or file_kind
    if kind is None:
        raise ParameterError(
            "config kind is ambiguous: add a 'kind = ...' line or pass one explicitly")

    if kind == "circuit":
        overrides = {}
        for key, raw in values.items():
            canonical = key if key in _CIRCUIT_KEYS else _CIRCUIT_ALIASES.get(key)
            if canonical is None:
                raise ParameterError(f"unknown circuit config key {key!r}")
            field = _CIRCUIT_KEYS[canonical]
            if field == "neutralization_enabled":
                overrides[field] = _parse_bool(raw, key)
            else:
                overrides[field] = _parse_float(raw, key)
        return dataclasses.replace(CircuitParams(), **overrides)

    if kind == "adc":
        overrides = {}
        for key, raw in values.items():
            field = _ADC_KEYS.get(key)
            if field is None:
                raise ParameterError(f"unknown adc config key {key!r}")
            value = _parse_float(raw, key)
            overrides[field] = int(value) if field == "resolution_bits" else value
        return dataclasses.replace(AdcConfig(), **overrides)

    groups = {"maternal": {}, "fetal": {}, "noise": {}, None: {}}
    for key, raw in values.items():
        target = _SYNTH_KEYS.get(key)
        if target is None:
            raise ParameterError(f"unknown synthesis config key {key!r}")
        group, field = target
        groups[group][field] = _parse_float(raw, key)
    base = SynthesisConfig()
    return SynthesisConfig(
        maternal=dataclasses.replace(base.maternal, **groups["maternal"]),
        fetal=dataclasses.replace(base.fetal, **groups["fetal"]),
        noise=dataclasses.replace(base.noise, **groups["noise"]),
        **{field: value for field, value in groups[None].items()},
    )


def _render_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return repr(value)


def save_config(path, config) -> None:
    """Echo a config object back to its flat file form (round-trip stable)."""
    lines = []
    if isinstance(config, CircuitParams):
        lines.append("kind = circuit")
        for key, field in _CIRCUIT_KEYS.items():
            lines.append(f"{key} = {_render_value(getattr(config, field))}")
    elif isinstance(config, AdcConfig):
        lines.append("kind = adc")
        for key, field in _ADC_KEYS.items():
            lines.append(f"{key} = {_render_value(getattr(config, field))}")
    elif isinstance(config, SynthesisConfig):
        lines.append("kind = synthesis")
        for key, (group, field) in _SYNTH_KEYS.items():
            owner = config if group is None else getattr(config, group)
            lines.append(f"{key} = {_render_value(getattr(owner, field))}")
    else:
        raise ParameterError(f"cannot serialize a {type(config).__name__}")
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


# --- CSV tables --------------------------------------------------------------

def write_waveform_csv(path, w: Waveform) -> None:
    with open(path, "w", encoding="ascii") as handle:
        handle.write("time_s,volts\n")
        for t, v in zip(w.times(), w.samples):
            handle.write(f"{t:.6f},{v!r}\n")


def read_waveform_csv(path, sample_rate: float | None = None) -> Waveform:
    with open(path, "r", encoding="ascii") as handle:
        header = handle.readline().strip()
        if header != "time_s,volts":
            raise FormatError(f"expected 'time_s,volts' header, found {header!r}")
        times, volts = [], []
        for line in handle:
            t, _, v = line.strip().partition(",")
            times.append(float(t))
            volts.append(float(v))
    if len(times) < 2 and sample_rate is None:
        raise FormatError("cannot infer the sample rate from fewer than 2 rows")
    if sample_rate is None:
        sample_rate = 1.0 / (times[1] - times[0])
    return Waveform(sample_rate, np.array(volts), "csv")


def write_response_csv(path, response) -> None:
    with open(path, "w", encoding="ascii") as handle:
        handle.write("frequency_hz,gain_db,phase_deg\n")
        for f, g, p in zip(response.frequencies, response.gain_db, response.phase_deg):
            handle.write(f"{f!r},{g!r},{p!r}\n")


def write_gain_sweep_csv(path, rows) -> None:
    with open(path, "w", encoding="ascii") as handle:
        handle.write("cs_farad,gain_vv\n")
        for cs, gain in rows:
            handle.write(f"{cs!r},{gain!r}\n")


def write_psd_csv(path, psd) -> None:
    with open(path, "w", encoding="ascii") as handle:
        handle.write("frequency_hz,density_v2_per_hz\n")
        for f, d in zip(psd.frequencies, psd.density):
            handle.write(f"{f!r},{d!r}\n")


def _round2(value) -> str:
    # decimal half-up on a 6-decimal pre-render, so values that are exactly
    # halfway in decimal terms (e.g. 95.825) do not fall to binary dust
    quantized = decimal.Decimal(f"{value:.6f}").quantize(
        decimal.Decimal("0.01"), rounding=decimal.ROUND_HALF_UP)
    return f"{quantized:.2f}"


def render_percent(value) -> str:
    return "" if value is None else _round2(100.0 * value)


def render_db(value) -> str:
    return "" if value is None else _round2(value)


COMPARE_CSV_HEADER = ("subject,snr_ref_db,snr_nce_db,se_ref,se_nce,ppv_ref,"
                      "ppv_nce,acc_ref,acc_nce,f1_ref,f1_nce")


def write_compare_csv(path, table) -> None:
    """Electrode-comparison table, metric columns as percentages (2 decimals)."""
    with open(path, "w", encoding="ascii") as handle:
        handle.write(COMPARE_CSV_HEADER + "\n")
        for row in table:
            handle.write(",".join([
                row["subject"],
                render_db(row["snr_ref_db"]), render_db(row["snr_nce_db"]),
                render_percent(row["se_ref"]), render_percent(row["se_nce"]),
                render_percent(row["ppv_ref"]), render_percent(row["ppv_nce"]),
                render_percent(row["acc_ref"]), render_percent(row["acc_nce"]),
                render_percent(row["f1_ref"]), render_percent(row["f1_nce"]),
            ]) + "\n")


def compare_table_json(table) -> list[dict]:
    """JSON variant of the comparison table with the same field names."""
    rendered = []
    for row in table:
        entry = {"subject": row["subject"]}
        for key, value in row.items():
            if key == "subject":
                continue
            if value is None:
                entry[key] = None
            elif key.startswith("snr"):
                entry[key] = float(render_db(value))
            else:
                entry[key] = float(render_percent(value))
        rendered.append(entry)
    return rendered
