"""Series and graph types, min-max normalization, CSV/JSON I/O."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GraphInvariantError, InvalidInputError, ParseError

# Rows whose range falls below this are treated as constant.
CONSTANT_RANGE = 1e-12


@dataclass(frozen=True, eq=False)
class MultivariateSeries:
    """An N x T observation matrix, one row per variable.

    ``norm_meta`` holds the per-variable ``(min, max)`` seen at normalization
    time, or None for raw data. The array is stored read-only.
    """

    values: np.ndarray
    var_names: tuple[str, ...] = ()
    norm_meta: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise InvalidInputError(f"series must be 2-D (N x T), got shape {values.shape}")
        n, t = values.shape
        if n < 1 or t < 2:
            raise InvalidInputError(f"series needs N >= 1 and T >= 2, got N={n}, T={t}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise InvalidInputError(f"non-finite value at variable {bad[0]}, time {bad[1]}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

        names = tuple(str(v) for v in self.var_names) or tuple(f"X{i}" for i in range(n))
        if len(names) != n:
            raise InvalidInputError(f"{len(names)} variable names for {n} variables")
        object.__setattr__(self, "var_names", names)

        if self.norm_meta is not None:
            meta = tuple((float(lo), float(hi)) for lo, hi in self.norm_meta)
            if len(meta) != n:
                raise InvalidInputError("norm_meta length does not match N")
            if values.min() < 0.0 or values.max() > 1.0:
                raise InvalidInputError("normalized series has entries outside [0, 1]")
            object.__setattr__(self, "norm_meta", meta)

    @property
    def n_vars(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def replace_values(self, values: np.ndarray) -> "MultivariateSeries":
        """Same names, new values; normalization metadata is dropped."""
        return MultivariateSeries(values, self.var_names, None)

    def __eq__(self, other):
        if not isinstance(other, MultivariateSeries):
            return NotImplemented
        return (
            self.var_names == other.var_names
            and self.norm_meta == other.norm_meta
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def normalize_minmax(series: MultivariateSeries) -> MultivariateSeries:
    """Rescale each variable independently onto [0, 1].

    Constant variables map to all zeros.
    """
    x = series.values
    if x.size == 0:
        raise InvalidInputError("cannot normalize an empty series")
    lo = x.min(axis=1)
    hi = x.max(axis=1)
    span = hi - lo
    out = np.zeros_like(x)
    varying = span >= CONSTANT_RANGE
    out[varying] = (x[varying] - lo[varying, None]) / span[varying, None]
    # guard against 1 + eps from rounding
    np.clip(out, 0.0, 1.0, out=out)
    meta = tuple(zip(lo.tolist(), hi.tolist()))
    return MultivariateSeries(out, series.var_names, meta)


def load_series_csv(path) -> MultivariateSeries:
    """Read a time-major CSV (header of names, one row per time step)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: no header") from None
        header = [h.strip() for h in header]
        if not header or all(h == "" for h in header):
            raise ParseError(f"{path}: no header", row=1)
        try:
            [float(h) for h in header]
        except ValueError:
            pass
        else:
            raise ParseError(f"{path}: no header (first row is numeric)", row=1)

        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: expected {len(header)} fields, got {len(row)}", row=lineno
                )
            parsed = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: non-numeric cell {cell!r}", row=lineno, column=name) from None
                if not math.isfinite(v):
                    raise ParseError(f"{path}: non-finite cell {cell!r}", row=lineno, column=name)
                parsed.append(v)
            rows.append(parsed)
    if len(rows) < 2:
        raise ParseError(f"{path}: need at least 2 time steps, got {len(rows)}")
    return MultivariateSeries(np.asarray(rows, dtype=np.float64).T, tuple(header))


def save_series_csv(series: MultivariateSeries, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(series.var_names)
        for row in series.values.T:
            writer.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True, order=True)
class LaggedEdge:
    """Directed edge ``src -> dst`` acting with delay ``lag``."""

    src: int
    dst: int
    lag: int = 0
    score: float = 0.0

    @property
    def pair(self) -> tuple[int, int]:
        return (self.src, self.dst)


def _edge_sort_key(e: LaggedEdge):
    return (-e.score, e.src, e.dst)


@dataclass(frozen=True)
class TemporalGraph:
    """Directed lagged graph over ``n_vars`` nodes.

    Self-loops and cycles are allowed. Predicted graphs keep a single
    direction per unordered pair; ground-truth graphs of systems with
    genuine two-way coupling (Lorenz-96) set ``single_direction=False``.
    """

    n_vars: int
    edges: frozenset = field(default_factory=frozenset)
    single_direction: bool = True

    def __post_init__(self):
        object.__setattr__(self, "edges", frozenset(self.edges))
        problems = check_graph(self.n_vars, self.edges, self.single_direction)
        if problems:
            msg, offending = problems
            raise GraphInvariantError(msg, offending)

    @property
    def m(self) -> int:
        return len(self.edges)

    def sorted_edges(self) -> list[LaggedEdge]:
        return sorted(self.edges, key=_edge_sort_key)

    def pairs(self) -> set[tuple[int, int]]:
        return {e.pair for e in self.edges}

    def lag_map(self) -> dict[tuple[int, int], int]:
        return {e.pair: e.lag for e in self.edges}

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_vars, self.n_vars), dtype=bool)
        for e in self.edges:
            a[e.src, e.dst] = True
        return a

    def parents(self) -> list[set[int]]:
        pa = [set() for _ in range(self.n_vars)]
        for e in self.edges:
            pa[e.dst].add(e.src)
        return pa

    def without_self_loops(self) -> "TemporalGraph":
        return TemporalGraph(
            self.n_vars, [e for e in self.edges if e.src != e.dst], self.single_direction
        )


def check_graph(n_vars: int, edges: Iterable[LaggedEdge], single_direction: bool = True):
    """Return ``(message, offending_edges)`` for the first violated invariant, or None."""
    if n_vars < 1:
        return ("n_vars must be >= 1", [])
    bad = [
        e for e in edges
        if not (0 <= e.src < n_vars and 0 <= e.dst < n_vars)
        or e.lag < 0
        or not (e.score >= 0.0 and math.isfinite(e.score))
    ]
    if bad:
        return ("edges with out-of-range index, negative lag or invalid score", sorted(bad))
    by_pair: dict[tuple[int, int], list[LaggedEdge]] = {}
    for e in edges:
        by_pair.setdefault(e.pair, []).append(e)
    dup = sorted(e for group in by_pair.values() if len(group) > 1 for e in group)
    if dup:
        return ("more than one edge for the same ordered pair", dup)
    if single_direction:
        both = sorted(
            e for e in edges
            if e.src != e.dst and (e.dst, e.src) in by_pair
        )
        if both:
            return ("both directions present for an unordered pair", both)
    return None


def graph_to_dict(graph: TemporalGraph, **extra) -> dict:
    d = {
        "n_vars": graph.n_vars,
        "edges": [
            {"src": e.src, "dst": e.dst, "lag": e.lag, "score": e.score}
            for e in graph.sorted_edges()
        ],
    }
    if not graph.single_direction:
        d["single_direction"] = False
    d.update(extra)
    return d


def graph_from_dict(d: dict) -> TemporalGraph:
    try:
        n_vars = int(d["n_vars"])
        edges = [
            LaggedEdge(int(e["src"]), int(e["dst"]), int(e["lag"]), float(e["score"]))
            for e in d["edges"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed graph document: {exc}") from None
    return TemporalGraph(n_vars, edges, bool(d.get("single_direction", True)))


def save_graph_json(graph: TemporalGraph, path, **extra) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph, **extra), indent=2) + "\n", encoding="utf-8")


def load_graph_json(path) -> TemporalGraph:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg}", row=exc.lineno) from None
    return graph_from_dict(d)


def graph_from_pairs(n_vars: int, pairs: Sequence[tuple], single_direction: bool = True) -> TemporalGraph:
    """Convenience constructor from ``(src, dst)`` or ``(src, dst, lag)`` tuples."""
    edges = []
    for p in pairs:
        src, dst, *rest = p
        edges.append(LaggedEdge(int(src), int(dst), int(rest[0]) if rest else 0))
    return TemporalGraph(n_vars, edges, single_direction)
