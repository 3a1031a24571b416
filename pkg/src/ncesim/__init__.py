"""Simulator and analysis toolkit for capacitively coupled ECG electrodes.

Modules:

* ``circuit``     analog front-end model (bias bootstrap, input-capacitance
                  neutralization, full transfer function, sweeps)
* ``signals``     maternal/fetal ECG synthesis, noise model, acquisition
                  chain and 24-bit digitizer
* ``dsp``         filtering, wavelet transform, QRS detection, maternal
                  cancellation, Welch PSD, input-referred noise, SNR
* ``eval``        annotation matching and Se/PPV/Acc/F1 scoring
* ``io``          record/annotation/config/CSV persistence
* ``experiments`` bench-style characterization runs
* ``cli``         command-line interface (``ncesim <command>``)
"""

from .circuit import (
    CircuitParams,
    FrequencyResponse,
    RationalTransferFunction,
    bias_resistance,
    build_transfer_function,
    cutoff_frequencies,
    default_params,
    evaluate_response,
    gain_sweep,
    input_divider,
    midband_gain,
    neutralized_input_capacitance,
    solve_neutralization_cn,
)
from .errors import NcesimError
from .eval import (
    MatchResult,
    MetricsReport,
    accuracy,
    compare_report,
    f1,
    match_annotations,
    ppv,
    report_from_match,
    sensitivity,
)
from .signals import (
    AdcConfig,
    AnnotationSet,
    NoiseConfig,
    SynthesisConfig,
    Waveform,
    acquire,
    adc_decode,
    adc_quantize,
    adc_sensitivity,
    apply_frontend,
    insulation_to_capacitance,
    synth_ecg,
    synth_fmecg,
)

__version__ = "0.1.0"
