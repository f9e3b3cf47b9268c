"""Structural and temporal accuracy of predicted graphs against ground truth."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .core import TemporalGraph
from .errors import InvalidInputError, UndefinedCorrelationError, UnsupportedMetricError


@dataclass(frozen=True)
class StructuralReport:
    precision: float
    recall: float
    f1: float
    tpr: float
    fdr: float
    tp: int
    fp: int
    fn: int
    shd_raw: int | None = None
    shd_normalized: float | None = None
    pod: float | None = None
    pod_vacuous: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _check_same_n(pred: TemporalGraph, truth: TemporalGraph):
    if pred.n_vars != truth.n_vars:
        raise InvalidInputError(f"graphs differ in size: {pred.n_vars} vs {truth.n_vars}")


def structural_scores(pred: TemporalGraph, truth: TemporalGraph) -> StructuralReport:
    """Precision/recall/F1 over directed ordered pairs; lags are ignored."""
    _check_same_n(pred, truth)
    p, t = pred.pairs(), truth.pairs()
    tp = len(p & t)
    fp = len(p - t)
    fn = len(t - p)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    # kept as the exact complement of precision, including the empty-prediction case
    return StructuralReport(precision, recall, f1, recall, 1.0 - precision, tp, fp, fn)


def shd(pred: TemporalGraph, truth: TemporalGraph) -> int:
    """Hamming distance between directed adjacency matrices.

    A reversed edge differs in two entries and so costs 2.
    """
    _check_same_n(pred, truth)
    return int(np.count_nonzero(pred.adjacency() != truth.adjacency()))


def pod(pred: TemporalGraph, truth: TemporalGraph, has_lags: bool = True) -> tuple[float, bool]:
    """Share of true-positive edges whose lag matches exactly.

    Returns ``(value, vacuous)``; with no true positives the value is 1.0
    and ``vacuous`` is True.
    """
    if not has_lags:
        raise UnsupportedMetricError("ground truth carries no lags; PoD is undefined")
    _check_same_n(pred, truth)
    truth_lags = truth.lag_map()
    hits = [e.lag == truth_lags[e.pair] for e in pred.edges if e.pair in truth_lags]
    if not hits:
        return 1.0, True
    return sum(hits) / len(hits), False


def evaluate(pred: TemporalGraph, truth: TemporalGraph, has_lags: bool = True, self_loops: bool = True) -> StructuralReport:
    if not self_loops:
        pred, truth = pred.without_self_loops(), truth.without_self_loops()
    base = structural_scores(pred, truth)
    raw = shd(pred, truth)
    extra = {"shd_raw": raw, "shd_normalized": raw / max(1, truth.m)}
    if has_lags:
        extra["pod"], extra["pod_vacuous"] = pod(pred, truth)
    return StructuralReport(**{**asdict(base), **extra})


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for constant input")
    return float(np.clip((xc @ yc) / denom, -1.0, 1.0))


def correlation(xs: Sequence[float], ys: Sequence[float], kind: str = "pearson") -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInputError("inputs must be 1-D and of equal length")
    if len(x) < 3:
        raise InvalidInputError("correlation needs at least 3 points")
    kind = kind.lower()
    if kind == "spearman":
        return _pearson(rankdata(x, method="average"), rankdata(y, method="average"))
    if kind == "pearson":
        return _pearson(x, y)
    raise InvalidInputError(f"unknown correlation kind {kind!r}")


REPORT_FIELDS = [
    "precision", "recall", "f1", "tpr", "fdr", "tp", "fp", "fn",
    "shd_raw", "shd_normalized", "pod", "pod_vacuous",
]


def write_report(report: StructuralReport, csv_path, json_path) -> None:
    d = report.to_dict()
    with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        w.writerow(["" if d[k] is None else d[k] for k in REPORT_FIELDS])
    Path(json_path).write_text(json.dumps(d, indent=2) + "\n", encoding="utf-8")
