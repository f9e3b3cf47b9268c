"""From influence tensor to a sparse lagged graph via penalised-fit selection."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import LaggedEdge, MultivariateSeries, TemporalGraph
from .errors import InsufficientDataError, InvalidInputError
from .probing import InfluenceTensor

DEFAULT_LAMBDA = 0.4
DEFAULT_PATIENCE = 5
# scores within this fraction of the trace's range count as comparable
DEFAULT_TOLERANCE = 0.01
MSE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class PeakSummary:
    peak: np.ndarray  # (N, N) max response per ordered pair
    lag: np.ndarray  # (N, N) argmax time relative to t0


def peak_reduce(S: InfluenceTensor) -> PeakSummary:
    region = S.values[:, :, S.valid_from:]
    n = S.n_vars
    if region.shape[2] == 0:
        return PeakSummary(np.zeros((n, n)), np.full((n, n), S.valid_from - S.t0, dtype=int))
    # np.argmax returns the first maximum on ties
    idx = region.argmax(axis=2)
    peak = np.take_along_axis(region, idx[:, :, None], axis=2)[:, :, 0]
    return PeakSummary(peak.copy(), idx + S.valid_from - S.t0)


def rank_candidates(summary: PeakSummary) -> list[LaggedEdge]:
    """Eligible edges sorted by descending peak, then (src, dst).

    For each unordered pair only the stronger direction survives; an exact
    tie goes to the smaller source index. Self-loops compete in the same
    ranking. Edges whose peak is zero never responded to the clamp and are
    not eligible.
    """
    peak, lag = summary.peak, summary.lag
    n = peak.shape[0]
    out = []
    for i in range(n):
        out.append(LaggedEdge(i, i, int(lag[i, i]), float(peak[i, i])))
        for j in range(i + 1, n):
            src, dst = (i, j) if peak[i, j] >= peak[j, i] else (j, i)
            out.append(LaggedEdge(src, dst, int(lag[src, dst]), float(peak[src, dst])))
    out = [e for e in out if e.score > 0]
    out.sort(key=lambda e: (-e.score, e.src, e.dst))
    return out


def qbic_value(mse: Sequence[float], in_degree: Sequence[int], n: int, lam: float) -> float:
    """``sum_j n ln(MSE_j) + lam k_j ln(n)`` with MSE floored at 1e-12."""
    if n <= 0:
        raise InsufficientDataError("no valid prediction time points")
    total = 0.0
    for e, k in zip(mse, in_degree):
        total += n * math.log(max(float(e), MSE_FLOOR)) + lam * k * math.log(n)
    return total


def parent_mse(pred, series: MultivariateSeries, parents) -> np.ndarray:
    """Per-target MSE over valid points when predicting from ``parents`` only."""
    yhat = pred.predict_with_parents(series, parents)
    v0 = pred.valid_from
    resid = yhat[:, v0:] - series.values[:, v0:]
    return np.mean(resid ** 2, axis=1)


def n_valid(pred, series: MultivariateSeries) -> int:
    return series.length - pred.valid_from


def qbic_score(pred, series: MultivariateSeries, graph: TemporalGraph, lam: float = DEFAULT_LAMBDA) -> float:
    if graph.n_vars != series.n_vars:
        raise InvalidInputError(f"graph has {graph.n_vars} nodes, series has {series.n_vars} variables")
    if lam <= 0:
        raise InvalidInputError("lambda must be positive")
    n = n_valid(pred, series)
    if n <= 0:
        raise InsufficientDataError("no valid prediction time points")
    parents = graph.parents()
    mse = parent_mse(pred, series, parents)
    return qbic_value(mse, [len(p) for p in parents], n, lam)


@dataclass
class QbicTrace:
    entries: list[tuple[int, float]] = field(default_factory=list)
    selected_m: int = 0
    lam: float = DEFAULT_LAMBDA
    n_valid: int = 0
    stopped_early: bool = False
    tolerance: float = 0.0

    @property
    def ms(self) -> list[int]:
        return [m for m, _ in self.entries]

    @property
    def values(self) -> list[float]:
        return [q for _, q in self.entries]

    def to_dict(self) -> dict:
        return {
            "entries": [[m, q] for m, q in self.entries],
            "selected_m": self.selected_m,
            "lambda": self.lam,
            "n_valid": self.n_valid,
            "stopped_early": self.stopped_early,
            "tolerance": self.tolerance,
        }


def conservative_argmin(
    values: Sequence[float], patience: int | None = None, tolerance: float = 0.0
) -> tuple[int, int]:
    """Index of the selected point and how many points were consumed.

    Scans in order, stopping once ``patience`` consecutive points fail to
    set a strictly new minimum. Among the scanned points, returns the first
    whose value lies within ``tolerance * (max - min)`` of the minimum, so
    exact ties (and, with a positive tolerance, near-ties) go to the
    sparser graph.
    """
    best, stale = math.inf, 0
    used = 0
    for idx, q in enumerate(values):
        used = idx + 1
        if q < best:
            best, stale = q, 0
        else:
            stale += 1
            if patience is not None and stale >= patience:
                break
    if used == 0:
        return -1, 0
    seen = list(values[:used])
    lo, hi = min(seen), max(seen)
    cutoff = lo + tolerance * (hi - lo)
    return next(i for i, q in enumerate(seen) if q <= cutoff), used


def graph_from_candidates(n_vars: int, candidates: Sequence[LaggedEdge]) -> TemporalGraph:
    return TemporalGraph(n_vars, candidates)


def select_graph(
    pred,
    series: MultivariateSeries,
    S: InfluenceTensor,
    lam: float = DEFAULT_LAMBDA,
    m_max: int | None = None,
    patience: int = DEFAULT_PATIENCE,
    candidates: Sequence[LaggedEdge] | None = None,
    tolerance: float = DEFAULT_TOLERANCE,
):
    """Pick the sparsity level m minimising the score over top-m candidate graphs.

    Returns ``(graph, trace)``. Costs one masked predictor call per
    evaluated m. ``tolerance=0`` selects the exact (first) argmin.
    """
    if tolerance < 0:
        raise InvalidInputError("tolerance must be >= 0")
    if patience < 1:
        raise InvalidInputError("patience must be >= 1")
    if lam <= 0:
        raise InvalidInputError("lambda must be positive")
    n = series.n_vars
    if S.n_vars != n:
        raise InvalidInputError("influence tensor and series disagree on N")
    if candidates is None:
        candidates = rank_candidates(peak_reduce(S))
    n_pts = n_valid(pred, series)
    if not candidates:
        return TemporalGraph(n), QbicTrace(lam=lam, n_valid=n_pts)
    if m_max is None:
        m_max = len(candidates)
    if not 1 <= m_max <= len(candidates):
        raise InvalidInputError(f"m_max={m_max} outside 1..{len(candidates)}")

    trace = QbicTrace(lam=lam, n_valid=n_pts, tolerance=tolerance)
    best, stale = math.inf, 0
    for m in range(1, m_max + 1):
        q = qbic_score(pred, series, graph_from_candidates(n, candidates[:m]), lam)
        trace.entries.append((m, q))
        if q < best:
            best, stale = q, 0
        else:
            stale += 1
            if stale >= patience and m < m_max:
                trace.stopped_early = True
                break
    idx, _ = conservative_argmin(trace.values, tolerance=tolerance)
    trace.selected_m = trace.entries[idx][0]
    return graph_from_candidates(n, candidates[: trace.selected_m]), trace


def save_trace_csv(trace: QbicTrace, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "qbic"])
        for m, q in trace.entries:
            w.writerow([m, repr(q)])
