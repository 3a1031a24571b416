"""Command-line interface: every characterization run as one subcommand.

Commands write data to files and print a single-line JSON summary on stdout
listing every file written plus the headline numbers. Exit codes partition
the failure classes:

* 0  success
* 2  usage error (bad flags, bad sweep bounds)
* 3  parameter/config validation error
* 4  file I/O or format error
* 5  numeric/model error (instability, missing cutoff, undefined metric)
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

from . import circuit, experiments
from . import eval as scoring
from . import io as storage
from .errors import (
    CutoffNotFoundError,
    DivisionValidityError,
    FormatError,
    InsufficientDataError,
    ModelValidityError,
    NcesimError,
    ParameterError,
    TemplateQualityError,
    UndefinedMetricError,
    UnstableFilterError,
    UsageError,
)
from .signals import (
    AdcConfig,
    NoiseConfig,
    SynthesisConfig,
    acquire,
    adc_sensitivity,
    synth_fmecg,
)

EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4
EXIT_NUMERIC = 5

_NUMERIC_ERRORS = (ModelValidityError, UnstableFilterError, CutoffNotFoundError,
                   InsufficientDataError, TemplateQualityError, UndefinedMetricError,
                   DivisionValidityError)


def _emit(summary: dict) -> None:
    print(json.dumps(summary, separators=(",", ":"), sort_keys=True))


def _cs_list(raw: str) -> list[float]:
    try:
        values = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise UsageError(f"could not parse capacitance list {raw!r}") from exc
    if not values:
        raise UsageError("capacitance list is empty")
    if any(v <= 0.0 for v in values):
        raise UsageError("capacitances must be positive")
    return values


def _load_circuit(path: str | None, cs: float | None, neutralization: str | None):
    params = storage.load_config(path, "circuit") if path else circuit.default_params()
    overrides = {}
    if cs is not None:
        overrides["cs"] = cs
    if neutralization is not None:
        overrides["neutralization_enabled"] = neutralization == "on"
    return dataclasses.replace(params, **overrides) if overrides else params


def _cmd_bode(args) -> dict:
    if not args.fmin < args.fmax:
        raise UsageError(f"--fmin must be below --fmax (got {args.fmin}, {args.fmax})")
    if args.points < 2:
        raise UsageError("--points must be at least 2")
    cs_values = _cs_list(args.cs)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs, runs = [], []
    for cs in cs_values:
        params = _load_circuit(args.config, cs, args.neutralization)
        response = experiments.bode_response(params, args.fmin, args.fmax, args.points)
        path = out_dir / f"bode_cs{cs:.4g}.csv"
        storage.write_response_csv(path, response)
        outputs.append(str(path))
        tf = circuit.build_transfer_function(params)
        entry = {"cs_farad": cs, "midband_gain_vv": circuit.midband_gain(tf)}
        try:
            f_low, f_high = circuit.cutoff_frequencies(response)
            entry.update(f_low_hz=f_low, f_high_hz=f_high)
        except (CutoffNotFoundError, ParameterError) as exc:
            entry["cutoff_note"] = str(exc)
        runs.append(entry)
    return {"command": "bode", "outputs": outputs, "runs": runs}


def _cmd_gain_sweep(args) -> dict:
    cs_values = _cs_list(args.cs_list)
    params = _load_circuit(args.config, None, None)
    rows = circuit.gain_sweep(params, cs_values, args.neutralization)
    storage.write_gain_sweep_csv(args.out, rows)
    return {
        "command": "gain-sweep",
        "outputs": [args.out],
        "neutralization": args.neutralization,
        "rows": [{"cs_farad": cs, "gain_vv": gain} for cs, gain in rows],
    }


def _cmd_noise(args) -> dict:
    if args.duration <= 0.0:
        raise UsageError(f"--duration must be positive, got {args.duration}")
    params = _load_circuit(args.config, args.cs, None)
    noise = (storage.load_config(args.noise_config, "synthesis").noise
             if args.noise_config else NoiseConfig())
    psd = experiments.frontend_noise_psd(params, noise, args.duration, seed=args.seed)
    storage.write_psd_csv(args.out, psd)
    return {
        "command": "noise",
        "outputs": [args.out],
        "cs_farad": params.cs,
        "inband_rms_10hz_vrms": psd.band_rms(10.0),
    }


def _cmd_synth(args) -> dict:
    cfg = (storage.load_config(args.config, "synthesis") if args.config
           else SynthesisConfig())
    params = _load_circuit(args.circuit_config, args.cs, args.neutralization)
    adc = storage.load_config(args.adc_config, "adc") if args.adc_config else AdcConfig()
    source, maternal, fetal = synth_fmecg(cfg, seed=args.seed)
    record, _ = acquire(source, params, adc, amplifier_noise=cfg.noise,
                        seed=None if args.seed is None else args.seed + 1)
    out = Path(args.out)
    maternal_path = out.with_suffix(out.suffix + ".maternal.ann")
    fetal_path = out.with_suffix(out.suffix + ".fetal.ann")
    storage.write_record(out, record, adc)
    storage.write_annotations(maternal_path, maternal)
    storage.write_annotations(fetal_path, fetal)
    return {
        "command": "synth",
        "outputs": [str(out), str(maternal_path), str(fetal_path)],
        "duration_s": cfg.duration_s,
        "maternal_beats": len(maternal),
        "fetal_beats": len(fetal),
    }


def _cmd_process(args) -> dict:
    record, _ = storage.read_record(args.infile)
    result = experiments.fqrs_pipeline(record)
    storage.write_annotations(args.out_annotations, result.fetal)
    outputs = [args.out_annotations]
    if args.maternal_out:
        storage.write_annotations(args.maternal_out, result.maternal)
        outputs.append(args.maternal_out)
    if args.residual_out:
        storage.write_waveform_csv(args.residual_out, result.residual)
        outputs.append(args.residual_out)
    def _finite(value):
        return value if math.isfinite(value) else None

    return {
        "command": "process",
        "outputs": outputs,
        "maternal_beats": len(result.maternal),
        "fetal_beats": len(result.fetal),
        "snr_pre_cancel_db": _finite(result.snr_pre_db),
        "snr_post_cancel_db": _finite(result.snr_post_db),
    }


def _cmd_eval(args) -> dict:
    if (args.paired_ref is None) != (args.paired_det is None):
        raise UsageError("--paired-ref and --paired-det must be given together")
    reference = storage.read_annotations(args.ref)
    detections = storage.read_annotations(args.det)
    match = scoring.match_annotations(reference, detections, args.window)
    report = scoring.report_from_match(match, record_id=args.subject,
                                       electrode_label="nce")
    summary = {
        "command": "eval",
        "outputs": [],
        "tp": match.tp, "fp": match.fp, "fn": match.fn,
        "se": report.se, "ppv": report.ppv, "acc": report.acc, "f1": report.f1,
    }
    if args.paired_ref is not None:
        paired_match = scoring.match_annotations(
            storage.read_annotations(args.paired_ref),
            storage.read_annotations(args.paired_det), args.window)
        paired = scoring.report_from_match(paired_match, record_id=args.subject,
                                           electrode_label="reference")
        table = scoring.compare_report([(args.subject, report, paired)])
        if args.out_csv:
            storage.write_compare_csv(args.out_csv, table)
            summary["outputs"].append(args.out_csv)
        summary["compare"] = storage.compare_table_json(table)
    if args.out_json:
        Path(args.out_json).write_text(json.dumps(summary, indent=2), encoding="ascii")
        summary["outputs"].append(args.out_json)
    return summary


def _cmd_sensitivity(args) -> dict:
    cfg = storage.load_config(args.adc_config, "adc") if args.adc_config else AdcConfig()
    overrides = {}
    if args.vref is not None:
        overrides["vref"] = args.vref
    if args.bits is not None:
        overrides["resolution_bits"] = args.bits
    if args.pga is not None:
        overrides["pga_gain"] = args.pga
    if args.afe is not None:
        overrides["afe_gain"] = args.afe
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    lsb = adc_sensitivity(cfg)
    return {
        "command": "sensitivity",
        "outputs": [],
        "volts_per_lsb": lsb,
        "microvolts_per_lsb": lsb * 1e6,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncesim",
        description="Non-contact electrode front-end simulator and fetal ECG toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bode", help="frequency response sweep, one CSV per Cs")
    p.add_argument("--config", help="circuit config file")
    p.add_argument("--fmin", type=float, default=0.1)
    p.add_argument("--fmax", type=float, default=10e3)
    p.add_argument("--points", type=int, default=400)
    p.add_argument("--cs", default="100e-12", help="comma-separated list, farads")
    p.add_argument("--neutralization", choices=("on", "off"))
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=_cmd_bode)

    p = sub.add_parser("gain-sweep", help="mid-band gain versus source capacitance")
    p.add_argument("--config", help="circuit config file")
    p.add_argument("--cs-list", required=True, help="comma-separated list, farads")
    p.add_argument("--neutralization", choices=("on", "off"), default="on")
    p.add_argument("--out", default="gain_sweep.csv")
    p.set_defaults(func=_cmd_gain_sweep)

    p = sub.add_parser("noise", help="face-to-face input-referred noise PSD")
    p.add_argument("--config", help="circuit config file")
    p.add_argument("--noise-config", help="synthesis config supplying the noise model")
    p.add_argument("--cs", type=float, help="source capacitance, farads")
    p.add_argument("--duration", type=float, default=300.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="noise_psd.csv")
    p.set_defaults(func=_cmd_noise)

    p = sub.add_parser("synth", help="synthesize a record plus truth annotations")
    p.add_argument("--config", help="synthesis config file")
    p.add_argument("--circuit-config", help="circuit config file")
    p.add_argument("--adc-config", help="adc config file")
    p.add_argument("--cs", type=float, help="source capacitance override, farads")
    p.add_argument("--neutralization", choices=("on", "off"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output record path")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("process", help="detect fetal beats in a record")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out-annotations", required=True)
    p.add_argument("--maternal-out")
    p.add_argument("--residual-out")
    p.set_defaults(func=_cmd_process)

    p = sub.add_parser("eval", help="score detections against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--det", required=True)
    p.add_argument("--window", type=float, default=scoring.MATCH_HALF_WIDTH_S)
    p.add_argument("--subject", default="1")
    p.add_argument("--paired-ref", help="reference-electrode truth annotations")
    p.add_argument("--paired-det", help="reference-electrode detections")
    p.add_argument("--out-csv")
    p.add_argument("--out-json")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sensitivity", help="input-referred LSB size of the digitizer")
    p.add_argument("--adc-config")
    p.add_argument("--vref", type=float)
    p.add_argument("--bits", type=int)
    p.add_argument("--pga", type=float)
    p.add_argument("--afe", type=float)
    p.set_defaults(func=_cmd_sensitivity)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = args.func(args)
    except UsageError as exc:
        _emit({"status": "error", "category": "usage", "message": str(exc)})
        return EXIT_USAGE
    except _NUMERIC_ERRORS as exc:
        _emit({"status": "error", "category": "numeric", "message": str(exc)})
        return EXIT_NUMERIC
    except FormatError as exc:
        _emit({"status": "error", "category": "format", "message": str(exc)})
        return EXIT_IO
    except OSError as exc:
        _emit({"status": "error", "category": "io", "message": str(exc)})
        return EXIT_IO
    except (ParameterError, NcesimError) as exc:
        _emit({"status": "error", "category": "validation", "message": str(exc)})
        return EXIT_VALIDATION
    summary.setdefault("status", "ok")
    _emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
