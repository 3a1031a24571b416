"""Analog front-end model of a capacitively coupled biopotential electrode.

The electrode is a conducting plate separated from the skin by an insulator,
so the signal reaches the amplifier through a small source capacitance Cs
(order of pF). The front end modelled here consists of:

* a bootstrapped anti-parallel diode pair that supplies the amplifier bias
  current through a very large equivalent resistance (``bias_resistance``),
* a non-inverting first stage with nominal mid-band gain 1 + Rf1/Rf2,
* a positive-feedback neutralization network (Rn1, Rn2, Cn) that subtracts
  an equivalent capacitance from the amplifier input so the gain stops
  depending on Cs (``neutralized_input_capacitance``),
* a first-order high-pass / low-pass filter pair ahead of the digitizer.

``build_transfer_function`` assembles the whole chain into a rational
function of the Laplace variable s; everything else evaluates or sweeps it.
All values are plain SI units (farads, ohms, hertz, V/V).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import CutoffNotFoundError, ModelValidityError, ParameterError

MIDBAND_HZ = 10.0
"""Reference frequency for mid-band gain, sweeps and flatness checks."""

_PLATEAU_BAND_HZ = (1.0, 100.0)
_HALF_POWER_DB = 10.0 * math.log10(2.0)  # 3.0103 dB, exact half-power drop


@dataclass(frozen=True)
class CircuitParams:
    """Component values of the front-end schematic.

    ``rin`` may be ``math.inf`` (ideal amplifier input resistance, the
    default); every other value must be strictly positive. ``cn`` is the
    neutralization capacitor; whether it acts at all is controlled by
    ``neutralization_enabled``.
    """

    cs: float = 100e-12       # source (electrode-skin) capacitance, F
    rs: float = 1e3           # skin series resistance, ohm
    rin: float = math.inf     # amplifier input resistance, ohm
    cin: float = 10e-12       # amplifier input capacitance, F
    rd: float = 50e9          # anti-parallel diode pair small-signal resistance, ohm
    rb: float = 1e6           # bootstrap resistor, ohm
    rc: float = 10e3          # bootstrap resistor, ohm (rb/rc = 100)
    rf1: float = 1e6          # feedback resistor, ohm
    rf2: float = 100e3        # feedback resistor, ohm
    cf1: float = 100e-6       # feedback capacitor, F
    rn1: float = 400e3        # neutralization divider, ohm
    rn2: float = 100e3        # neutralization divider, ohm
    cn: float = 10e-12 / 1.2  # neutralization capacitor, F (cancels cin exactly)
    r2: float = 10e6          # high-pass filter resistor, ohm
    c2: float = 2.3919901416e-07  # high-pass filter capacitor, F
    r3: float = 10e3          # low-pass filter resistor, ohm
    c3: float = 6.366197723675814e-08  # low-pass filter capacitor, F
    neutralization_enabled: bool = True

    def __post_init__(self):
        for name in ("cs", "rs", "cin", "rd", "rb", "rc", "rf1", "rf2",
                     "cf1", "rn1", "rn2", "cn", "r2", "c2", "r3", "c3"):
            value = getattr(self, name)
            if not (value > 0.0) or not math.isfinite(value):
                raise ParameterError(f"{name} must be a positive finite value, got {value!r}")
        if not (self.rin > 0.0):
            raise ParameterError(f"rin must be positive (may be inf), got {self.rin!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ParameterError(f"neutralization divider ratio must be in (0, 1], got {self.alpha!r}")

    @property
    def alpha(self) -> float:
        """Positive-feedback divider ratio Rn2/(Rn1+Rn2)."""
        return self.rn2 / (self.rn1 + self.rn2)

    @property
    def midband_stage_gain(self) -> float:
        """Nominal first-stage mid-band gain 1 + Rf1/Rf2."""
        return 1.0 + self.rf1 / self.rf2


def default_params(**overrides) -> CircuitParams:
    """Documented default component set.

    Defaults give a first-stage gain of 11, an equivalent bias resistance of
    about 5 TOhm, exact input-capacitance cancellation (effective input
    capacitance 0), and -3 dB corners of the full cascade at 0.07 Hz and
    250 Hz. The high-pass RC product is sized so the *cascaded* low corner
    lands at 0.07 Hz; the first-stage feedback shelf (pole at 16 mHz) would
    otherwise push it about 5 % high.
    """
    return replace(CircuitParams(), **overrides) if overrides else CircuitParams()


class BiasResistance(NamedTuple):
    exact: float
    approximate: float


@dataclass(frozen=True)
class RationalTransferFunction:
    """Ratio of polynomials in s, coefficients in ascending powers."""

    num: tuple
    den: tuple

    def __post_init__(self):
        num = tuple(float(c) for c in self.num)
        den = tuple(float(c) for c in self.den)
        while len(den) > 1 and den[-1] == 0.0:
            den = den[:-1]
        while len(num) > 1 and num[-1] == 0.0:
            num = num[:-1]
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        if not any(den):
            raise ParameterError("denominator is identically zero")
        if den[-1] == 0.0:
            raise ParameterError("leading denominator coefficient must be nonzero")
        if len(num) - 1 > len(den) - 1:
            raise ParameterError("numerator degree exceeds denominator degree")

    def __call__(self, s):
        """Evaluate H(s) for scalar or array complex s."""
        return npoly.polyval(s, self.num) / npoly.polyval(s, self.den)

    def at_frequency(self, f):
        """Evaluate H(j 2*pi*f) for frequency in Hz."""
        return self(2j * np.pi * np.asarray(f, dtype=float))

    def poles(self) -> np.ndarray:
        return npoly.polyroots(self.den)

    def cascade(self, other: "RationalTransferFunction") -> "RationalTransferFunction":
        return RationalTransferFunction(
            tuple(npoly.polymul(self.num, other.num)),
            tuple(npoly.polymul(self.den, other.den)),
        )


@dataclass(frozen=True)
class FrequencyResponse:
    """Gain/phase samples over a strictly increasing positive frequency grid."""

    frequencies: np.ndarray  # Hz
    gain_db: np.ndarray
    phase_deg: np.ndarray    # unwrapped

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        g = np.asarray(self.gain_db, dtype=float)
        p = np.asarray(self.phase_deg, dtype=float)
        if not (len(f) == len(g) == len(p)):
            raise ParameterError("frequency, gain and phase arrays must have equal length")
        if len(f) == 0:
            raise ParameterError("frequency grid is empty")
        if np.any(f <= 0.0) or np.any(np.diff(f) <= 0.0):
            raise ParameterError("frequencies must be positive and strictly increasing")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "gain_db", g)
        object.__setattr__(self, "phase_deg", p)


def input_divider(p: CircuitParams, f: float) -> complex:
    """Source-to-amplifier attenuation of the passive input network.

    Product of the resistive divider (Rin || Rbias against Rs) and the
    capacitive divider Cs/(Cs+Cin). The result is returned as a complex
    factor for interface uniformity; in this lumped model it is real and
    its magnitude lies in (0, 1].
    """
    if not f > 0.0:
        raise ParameterError(f"frequency must be positive, got {f!r}")
    rbias = bias_resistance(p.rb, p.rc, p.rd).exact
    if math.isinf(p.rin):
        shunt = rbias
    else:
        shunt = p.rin * rbias / (p.rin + rbias)
    return complex((shunt / (shunt + p.rs)) * (p.cs / (p.cs + p.cin)))


def diode_pair_resistance(v1: float, v2: float, id1: float, id2: float) -> float:
    """Small-signal resistance of the anti-parallel diode pair, (V1-V2)/(ID1+ID2)."""
    total = id1 + id2
    if total == 0.0:
        raise ParameterError("total diode current is zero; resistance is undefined")
    return (v1 - v2) / total


def bias_resistance(rb: float, rc: float, rd: float) -> BiasResistance:
    """Equivalent bias-path resistance of the bootstrapped diode pair.

    exact = Rb + Rd + Rd*Rb/Rc; the bootstrap multiplies the diode
    resistance by Rb/Rc, which dominates for practical ratios, so
    approximate = Rd*Rb/Rc.
    """
    for name, value in (("rb", rb), ("rc", rc)):
        if not value > 0.0:
            raise ParameterError(f"{name} must be positive, got {value!r}")
    if rd < 0.0:
        raise ParameterError(f"rd must be nonnegative, got {rd!r}")
    approx = rd * rb / rc
    return BiasResistance(rb + rd + approx, approx)


def first_stage_gain(rf1: float, rf2: float, cf1: float, f: float) -> float:
    """Magnitude of the non-inverting stage gain 1 + Rf1/(Rf2 + Z_Cf1).

    At DC the capacitor impedance is infinite and the stage degenerates to
    a follower (gain 1); in the mid-band it approaches 1 + Rf1/Rf2.
    """
    if f < 0.0:
        raise ParameterError(f"frequency must be nonnegative, got {f!r}")
    if f == 0.0:
        return 1.0
    z_cf1 = 1.0 / (2j * math.pi * f * cf1)
    return abs(1.0 + rf1 / (rf2 + z_cf1))


def neutralized_input_capacitance(cin: float, av: float, rn1: float, rn2: float,
                                  cn: float) -> float:
    """Effective input capacitance after Miller neutralization.

    C'in = Cin - (Av*alpha - 1)*Cn with alpha = Rn2/(Rn1+Rn2). A negative
    result means over-neutralization; it is returned as-is and the caller
    decides whether the operating point is acceptable.
    """
    if not (rn1 + rn2) > 0.0:
        raise ParameterError("rn1 + rn2 must be positive")
    alpha = rn2 / (rn1 + rn2)
    return cin - (av * alpha - 1.0) * cn


def solve_neutralization_cn(cin: float, av: float, rn1: float, rn2: float) -> float:
    """Cn that makes the effective input capacitance exactly zero."""
    if not (rn1 + rn2) > 0.0:
        raise ParameterError("rn1 + rn2 must be positive")
    alpha = rn2 / (rn1 + rn2)
    loop = av * alpha - 1.0
    if loop <= 0.0:
        raise ParameterError(
            f"cancellation impossible: Av*alpha = {av * alpha:.4g} must exceed 1")
    return cin / loop


def effective_input_capacitance(p: CircuitParams) -> float:
    """C'in actually used by the transfer function for these parameters."""
    if not p.neutralization_enabled:
        return p.cin
    return neutralized_input_capacitance(p.cin, p.midband_stage_gain, p.rn1, p.rn2, p.cn)


def build_transfer_function(p: CircuitParams) -> RationalTransferFunction:
    """Full front-end transfer function V_out/V_s as polynomial ratio.

    First stage (source capacitance against the neutralized input
    capacitance, bootstrapped bias path, feedback shelf):

        s*Cs*(s*Cf1*(Rf1+Rf2) + 1)
        --------------------------------------------------
        s*(Cs+C'in)*(s*Cf1*Rf2 + 1) + (s*Cf1*Rf2 + 1)/Rbias

    cascaded with the output high-pass s/(s + 1/(R2*C2)) and low-pass
    1/(1 + s*R3*C3). The exact (not approximate) bias resistance is used.
    """
    rbias = bias_resistance(p.rb, p.rc, p.rd).exact
    cin_eff = effective_input_capacitance(p)
    if p.cs + cin_eff <= 0.0:
        raise ModelValidityError(
            f"Cs + C'in = {p.cs + cin_eff:.4g} F is not positive; "
            "the over-neutralized model has no physical solution")
    # rounding in the cancellation arithmetic can leave C'in at -1e-27 F;
    # only meaningfully negative values deserve the over-neutralization flag
    if cin_eff < -1e-6 * p.cin:
        warnings.warn(
            f"effective input capacitance is negative ({cin_eff:.4g} F): over-neutralized",
            RuntimeWarning, stacklevel=2)

    csum = p.cs + cin_eff
    num = [0.0, p.cs, p.cs * p.cf1 * (p.rf1 + p.rf2)]
    den = [1.0 / rbias, csum + p.cf1 * p.rf2 / rbias, csum * p.cf1 * p.rf2]

    stage = RationalTransferFunction(tuple(num), tuple(den))
    hpf = RationalTransferFunction((0.0, 1.0), (1.0 / (p.r2 * p.c2), 1.0))
    lpf = RationalTransferFunction((1.0,), (1.0, p.r3 * p.c3))
    return stage.cascade(hpf).cascade(lpf)


def amplifier_path_tf(p: CircuitParams) -> RationalTransferFunction:
    """Forward path from the amplifier input node to the output.

    This is the transfer seen by noise injected at the amplifier input: the
    feedback shelf (1 + s*Cf1*(Rf1+Rf2)) / (1 + s*Cf1*Rf2) followed by the
    output filters, i.e. the full chain without the source divider.
    """
    shelf = RationalTransferFunction(
        (1.0, p.cf1 * (p.rf1 + p.rf2)), (1.0, p.cf1 * p.rf2))
    hpf = RationalTransferFunction((0.0, 1.0), (1.0 / (p.r2 * p.c2), 1.0))
    lpf = RationalTransferFunction((1.0,), (1.0, p.r3 * p.c3))
    return shelf.cascade(hpf).cascade(lpf)


def evaluate_response(tf: RationalTransferFunction, freqs: Sequence[float]) -> FrequencyResponse:
    """Gain (dB) and unwrapped phase (deg) of H over a positive ascending grid."""
    f = np.asarray(freqs, dtype=float)
    if f.size == 0:
        raise ParameterError("frequency list is empty")
    if np.any(f <= 0.0) or np.any(np.diff(f) <= 0.0):
        raise ParameterError("frequencies must be positive and strictly increasing")
    h = tf.at_frequency(f)
    gain_db = 20.0 * np.log10(np.abs(h))
    phase_deg = np.degrees(np.unwrap(np.angle(h)))
    return FrequencyResponse(f, gain_db, phase_deg)


def midband_gain(tf: RationalTransferFunction, f: float = MIDBAND_HZ) -> float:
    """|H| at the mid-band reference frequency, V/V."""
    return float(abs(tf.at_frequency(f)))


def gain_sweep(p: CircuitParams, cs_values: Sequence[float],
               neutralization: str | bool = "on") -> list[tuple[float, float]]:
    """Mid-band gain (10 Hz) for each source capacitance.

    ``neutralization`` may be "on"/"off" or a bool and overrides the flag in
    ``p``; component values (including Cn) are taken from ``p`` unchanged.
    """
    if isinstance(neutralization, str):
        if neutralization not in ("on", "off"):
            raise ParameterError(f"neutralization must be 'on' or 'off', got {neutralization!r}")
        enabled = neutralization == "on"
    else:
        enabled = bool(neutralization)
    cs_values = [float(c) for c in cs_values]
    if not cs_values:
        raise ParameterError("cs_values is empty")
    if any(c <= 0.0 for c in cs_values):
        raise ParameterError("all source capacitances must be positive")
    rows = []
    for cs in cs_values:
        tf = build_transfer_function(replace(p, cs=cs, neutralization_enabled=enabled))
        rows.append((cs, midband_gain(tf)))
    return rows


def cutoff_frequencies(fr: FrequencyResponse) -> tuple[float, float]:
    """Half-power (-3 dB) corners below and above the mid-band plateau.

    The plateau reference is the maximum sampled gain in the 1-100 Hz band;
    crossings are located by interpolating gain linearly against log
    frequency between adjacent samples. Raises ``CutoffNotFoundError``
    naming the missing side(s) when the sampled range never drops 3 dB
    below the plateau.
    """
    f, g = fr.frequencies, fr.gain_db
    band = (f >= _PLATEAU_BAND_HZ[0]) & (f <= _PLATEAU_BAND_HZ[1])
    if not np.any(band):
        raise ParameterError(
            f"response must sample the {_PLATEAU_BAND_HZ[0]}-{_PLATEAU_BAND_HZ[1]} Hz mid-band")
    band_idx = np.flatnonzero(band)
    i_ref = band_idx[np.argmax(g[band_idx])]
    target = g[i_ref] - _HALF_POWER_DB
    logf = np.log10(f)

    def cross(i_lo, i_hi):
        # interpolate within [i_lo, i_hi] where gain straddles the target
        x = logf[i_lo] + (target - g[i_lo]) * (logf[i_hi] - logf[i_lo]) / (g[i_hi] - g[i_lo])
        return 10.0 ** x

    f_low = f_high = None
    for i in range(i_ref, 0, -1):
        if g[i - 1] < target <= g[i]:
            f_low = cross(i - 1, i)
            break
    for i in range(i_ref, len(f) - 1):
        if g[i + 1] < target <= g[i]:
            f_high = cross(i, i + 1)
            break
    if f_low is None and f_high is None:
        raise CutoffNotFoundError("both")
    if f_low is None:
        raise CutoffNotFoundError("low")
    if f_high is None:
        raise CutoffNotFoundError("high")
    return float(f_low), float(f_high)
