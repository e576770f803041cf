"""Evaluation metrics: endpoint errors, confusion matrices, detection rates.

Adequate is the positive class. Indeterminate verdicts never enter a
confusion matrix; they are counted in ``excluded``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .decision import ADEQUATE, INADEQUATE, INDETERMINATE
from .predictor import EndpointVector

ENDPOINT_NAMES = ("pec_p0", "pec_p1", "pnl_p0", "pnl_p1")
PERCENTILES = (5, 25, 50, 75, 95)


class EvaluationError(ValueError):
    pass


def percent(ratio: float) -> float:
    """Ratio as a percentage rounded to 2 decimals."""
    return round(100.0 * ratio, 2)


# -- endpoint errors ---------------------------------------------------------------

@dataclass(frozen=True)
class ErrorSummary:
    mean: float
    median: float
    percentiles: dict
    max: float

    @classmethod
    def of(cls, errors: np.ndarray) -> "ErrorSummary":
        e = np.asarray(errors, dtype=np.float64)
        if e.size == 0:
            raise EvaluationError("no errors to summarise")
        pct = {p: float(np.percentile(e, p)) for p in PERCENTILES}
        return cls(float(e.mean()), float(np.median(e)), pct, float(e.max()))


@dataclass(frozen=True)
class EndpointErrors:
    errors: np.ndarray  # (n_cases, 4), Euclidean error per endpoint

    def per_endpoint(self) -> dict:
        return {name: ErrorSummary.of(self.errors[:, k]) for k, name in enumerate(ENDPOINT_NAMES)}

    def overall(self) -> ErrorSummary:
        return ErrorSummary.of(self.errors.ravel())

    @property
    def mean(self) -> float:
        return float(self.errors.mean())


def endpoint_errors(preds: Sequence[EndpointVector], truths: Sequence[EndpointVector]) -> EndpointErrors:
    if len(preds) != len(truths):
        raise EvaluationError(f"{len(preds)} predictions for {len(truths)} ground truths")
    if not preds:
        raise EvaluationError("empty evaluation set")
    p = np.array([v.values for v in preds], dtype=np.float64).reshape(-1, 4, 2)
    t = np.array([v.values for v in truths], dtype=np.float64).reshape(-1, 4, 2)
    d = p - t
    return EndpointErrors(np.hypot(d[..., 0], d[..., 1]))


def write_histogram_csv(result: EndpointErrors, path, bin_width: float = 1.0) -> None:
    """One row per bin: lower edge, upper edge, then a count column per endpoint."""
    top = max(float(result.errors.max()), bin_width)
    n = int(np.ceil(top / bin_width)) + 1
    edges = np.arange(n + 1) * bin_width
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin_lo", "bin_hi", *ENDPOINT_NAMES])
        cols = [np.histogram(result.errors[:, k], bins=edges)[0] for k in range(4)]
        for i in range(n):
            w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), *(int(c[i]) for c in cols)])


# -- confusion matrix --------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int
    excluded: int = 0

    def __post_init__(self):
        for name in ("tp", "fn", "fp", "tn", "excluded"):
            if getattr(self, name) < 0:
                raise EvaluationError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @property
    def tpr(self) -> float:
        pos = self.tp + self.fn
        return self.tp / pos if pos else float("nan")

    @property
    def tnr(self) -> float:
        neg = self.tn + self.fp
        return self.tn / neg if neg else float("nan")


def confusion(decisions: Sequence[str], labels: Sequence[str]) -> ConfusionMatrix:
    """Verdict-vs-label matrix. Pairs where either side is Indeterminate are excluded."""
    if len(decisions) != len(labels):
        raise EvaluationError(f"{len(decisions)} decisions for {len(labels)} labels")
    tp = fn = fp = tn = skipped = 0
    for d, y in zip(decisions, labels):
        for v in (d, y):
            if v not in (ADEQUATE, INADEQUATE, INDETERMINATE):
                raise EvaluationError(f"unknown verdict {v!r}")
        if d == INDETERMINATE or y == INDETERMINATE:
            skipped += 1
        elif y == ADEQUATE:
            if d == ADEQUATE:
                tp += 1
            else:
                fn += 1
        elif d == ADEQUATE:
            fp += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fn, fp, tn, skipped)


def detection_rate(detected: int, total: int) -> float:
    if total <= 0:
        raise EvaluationError("detection rate needs at least one case")
    if not 0 <= detected <= total:
        raise EvaluationError(f"detected count {detected} outside [0, {total}]")
    return detected / total


# -- writers -----------------------------------------------------------------------

def _fmt_pct(ratio: float) -> str:
    return "nan" if ratio != ratio else f"{percent(ratio):.2f}%"


def confusion_lines(name: str, cm: ConfusionMatrix) -> list[str]:
    return [
        f"[{name}]",
        f"TP = {cm.tp}  FN = {cm.fn}  FP = {cm.fp}  TN = {cm.tn}  excluded = {cm.excluded}",
        f"TPR = {_fmt_pct(cm.tpr)}",
        f"TNR = {_fmt_pct(cm.tnr)}",
    ]


def write_metrics(path, matrices: dict, rates: dict | None = None, extra: dict | None = None) -> None:
    """Plain-text metrics file: one block per confusion matrix, then rates."""
    lines: list[str] = []
    for name, cm in matrices.items():
        lines += confusion_lines(name, cm)
        lines.append("")
    for name, (det, tot) in (rates or {}).items():
        lines.append(f"{name} = {det}/{tot} = {_fmt_pct(detection_rate(det, tot))}")
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines).rstrip("\n") + "\n")


def write_metrics_csv(path, matrices: dict) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["name", "tp", "fn", "fp", "tn", "excluded", "tpr_pct", "tnr_pct"])
        for name, cm in matrices.items():
            w.writerow([name, cm.tp, cm.fn, cm.fp, cm.tn, cm.excluded,
                        _fmt_pct(cm.tpr).rstrip("%"), _fmt_pct(cm.tnr).rstrip("%")])
