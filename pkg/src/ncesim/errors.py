"""Exception hierarchy shared by all ncesim modules.

The CLI maps these onto distinct exit codes: parameter/config problems,
file-format problems, and numeric/model-validity problems are kept apart
so scripted callers can branch on the failure class.
"""


class NcesimError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(NcesimError):
    """Bad command-line flag combination (CLI layer only)."""


class ParameterError(NcesimError, ValueError):
    """An argument or configuration value violates its documented contract."""


class ModelValidityError(NcesimError, ValueError):
    """Parameters describe a non-physical circuit (e.g. Cs + C'in <= 0)."""


class UnstableFilterError(NcesimError, ValueError):
    """Transfer function has poles outside the left half-plane."""

    def __init__(self, poles):
        self.poles = list(poles)
        super().__init__(f"transfer function is unstable; offending poles: {self.poles}")


class CutoffNotFoundError(NcesimError, ValueError):
    """No -3 dB crossing in the sampled frequency range.

    ``side`` is "low", "high" or "both".
    """

    def __init__(self, side):
        self.side = side
        super().__init__(f"no -3 dB crossing found on the {side} side of the sampled range")


class InsufficientDataError(NcesimError, ValueError):
    """Record too short for the requested analysis."""


class TemplateQualityError(NcesimError, ValueError):
    """Not enough beats to build a usable average-beat template."""


class DivisionValidityError(NcesimError, ValueError):
    """Input-referred division would amplify numerical noise (|H| ~ 0 in band)."""


class UndefinedMetricError(NcesimError, ZeroDivisionError):
    """Metric denominator is zero (empty reference or detection set)."""


class FormatError(NcesimError, ValueError):
    """Base class for file-format problems."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    """Record format version is not supported by this reader."""


class TruncatedRecordError(FormatError):
    """Payload shorter (or longer) than the header promises."""


class AnnotationParseError(FormatError):
    """Malformed annotation file; carries the offending line number."""

    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")
