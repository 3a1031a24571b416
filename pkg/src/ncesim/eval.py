"""Scoring of detected fetal R-peak annotations against a reference.

A detection is correct when it falls within +-50 ms (inclusive) of an
unclaimed reference event; pairing is one-to-one so a burst of detections
cannot claim a single reference twice. From the resulting TP/FP/FN counts
the usual event-detection metrics follow. True negatives are undefined for
event detection and fixed at zero, so accuracy reduces to TP/(TP+FN+FP).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, UndefinedMetricError
from .signals import AnnotationSet

MATCH_HALF_WIDTH_S = 0.050


@dataclass(frozen=True)
class MatchResult:
    """Outcome of one-to-one annotation matching."""

    tp: int
    fp: int
    fn: int
    pairs: tuple             # (reference time, detection time) per true positive
    half_width_s: float
    tn: int = 0              # no true negatives in event detection

    def __post_init__(self):
        if self.tp != len(self.pairs):
            raise ParameterError("tp must equal the number of matched pairs")
        if min(self.tp, self.fp, self.fn) < 0:
            raise ParameterError("counts must be nonnegative")


@dataclass(frozen=True)
class MetricsReport:
    """Per-record summary row: detection metrics as fractions, plus SNR."""

    se: float
    ppv: float
    acc: float
    f1: float
    snr_db: float | None = None
    record_id: str = ""
    electrode_label: str = ""

    def __post_init__(self):
        for name in ("se", "ppv", "acc", "f1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ParameterError(f"{name} must be in [0, 1], got {value!r}")


def _times(annotations) -> np.ndarray:
    if isinstance(annotations, AnnotationSet):
        return annotations.times
    times = np.asarray(annotations, dtype=float)
    if times.ndim != 1:
        raise ParameterError("annotation times must be one-dimensional")
    if times.size and np.any(np.diff(times) <= 0.0):
        raise ParameterError("annotation times must be strictly increasing")
    return times


def match_annotations(ref, det, half_width_s: float = MATCH_HALF_WIDTH_S) -> MatchResult:
    """Greedy chronological one-to-one matching within +-half_width_s.

    Walking the detections in time order, each one claims the nearest
    still-unclaimed reference within the window (earlier reference on a
    tie). With both sets spaced wider than twice the window, as refractory
    periods guarantee here, this equals the optimal bipartite matching.
    """
    ref_t = _times(ref)
    det_t = _times(det)
    if half_width_s < 0.0:
        raise ParameterError(f"half width must be >= 0, got {half_width_s!r}")
    # inclusive boundary; the guard is far below the 1 us annotation
    # resolution and only absorbs binary representation dust at |dt| == 50 ms
    limit = half_width_s + 1e-12
    claimed = np.zeros(ref_t.size, dtype=bool)
    pairs = []
    for d in det_t:
        lo = np.searchsorted(ref_t, d - limit, side="left")
        hi = np.searchsorted(ref_t, d + limit, side="right")
        best = None
        for i in range(lo, hi):
            if claimed[i] or abs(ref_t[i] - d) > limit:
                continue
            key = (abs(ref_t[i] - d), ref_t[i])
            if best is None or key < best[0]:
                best = (key, i)
        if best is not None:
            claimed[best[1]] = True
            pairs.append((float(ref_t[best[1]]), float(d)))
    tp = len(pairs)
    return MatchResult(tp, det_t.size - tp, ref_t.size - tp, tuple(pairs), half_width_s)


def sensitivity(m: MatchResult) -> float:
    """Se = TP/(TP+FN)."""
    if m.tp + m.fn == 0:
        raise UndefinedMetricError("sensitivity is undefined: reference set is empty")
    return m.tp / (m.tp + m.fn)


def ppv(m: MatchResult) -> float:
    """PPV = TP/(TP+FP)."""
    if m.tp + m.fp == 0:
        raise UndefinedMetricError("PPV is undefined: no detections were made")
    return m.tp / (m.tp + m.fp)


def accuracy(m: MatchResult) -> float:
    """Acc = TP/(TP+FN+FP+TN), with TN pinned to zero."""
    denom = m.tp + m.fn + m.fp + m.tn
    if denom == 0:
        raise UndefinedMetricError("accuracy is undefined: no events on either side")
    return m.tp / denom


def f1(m: MatchResult) -> float:
    """F1 = 2TP/(2TP+FN+FP), the harmonic mean of Se and PPV."""
    denom = 2 * m.tp + m.fn + m.fp
    if denom == 0:
        raise UndefinedMetricError("F1 is undefined: no events on either side")
    return 2 * m.tp / denom


def report_from_match(m: MatchResult, snr_db: float | None = None,
                      record_id: str = "", electrode_label: str = "") -> MetricsReport:
    """Bundle the four metrics of a match into a report row."""
    return MetricsReport(sensitivity(m), ppv(m), accuracy(m), f1(m),
                         snr_db, record_id, electrode_label)


_COMPARE_COLUMNS = ("snr_ref_db", "snr_nce_db", "se_ref", "se_nce", "ppv_ref",
                    "ppv_nce", "acc_ref", "acc_nce", "f1_ref", "f1_nce")


def compare_report(rows) -> list[dict]:
    """Electrode-comparison table: one dict per record plus an average row.

    ``rows`` holds (record id, non-contact report, reference-electrode
    report) triples. Metric columns are fractions; rendering to percent is
    left to the writers so the numbers stay exact here.
    """
    rows = list(rows)
    if not rows:
        raise ParameterError("comparison needs at least one record")
    table = []
    for entry in rows:
        try:
            record_id, nce, reference = entry
        except (TypeError, ValueError) as exc:
            raise ParameterError(
                "each row must be (record id, NCE report, reference report)") from exc
        if not isinstance(nce, MetricsReport) or not isinstance(reference, MetricsReport):
            raise ParameterError("paired entries must both be MetricsReport instances")
        table.append({
            "subject": str(record_id),
            "snr_ref_db": reference.snr_db,
            "snr_nce_db": nce.snr_db,
            "se_ref": reference.se, "se_nce": nce.se,
            "ppv_ref": reference.ppv, "ppv_nce": nce.ppv,
            "acc_ref": reference.acc, "acc_nce": nce.acc,
            "f1_ref": reference.f1, "f1_nce": nce.f1,
        })
    average = {"subject": "average"}
    for column in _COMPARE_COLUMNS:
        values = [row[column] for row in table]
        average[column] = None if any(v is None for v in values) else sum(values) / len(values)
    table.append(average)
    return table
