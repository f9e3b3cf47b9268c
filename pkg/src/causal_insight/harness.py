"""Seeded end-to-end runs, ablations and runtime benchmarks.

Every stochastic stage draws from ``rng_for(seed, label)`` so ablation
branches of the same seed see the same data and the same trained model.
Files written here are a pure function of the config: wall-clock timings
live only on the returned objects, never on disk (except for ``bench``,
whose whole purpose is timing).
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import DatasetSpec, ExperimentConfig, config_to_dict
from .core import MultivariateSeries, load_series_csv, normalize_minmax, save_graph_json, save_series_csv
from .datagen import (
    GroundTruth,
    gen_linear_var,
    gen_lorenz96,
    gen_motif,
    load_truth_json,
    random_var_coefficients,
    save_truth_json,
)
from .errors import UndefinedCorrelationError
from .graphsel import (
    QbicTrace,
    conservative_argmin,
    graph_from_candidates,
    peak_reduce,
    rank_candidates,
    save_trace_csv,
    select_graph,
)
from .metrics import StructuralReport, correlation, evaluate, structural_scores, write_report
from .predictor import TrainedPredictor, train
from .probing import ClampPolicy, InfluenceTensor, influence_tensor, permute_tensor, save_tensor

log = logging.getLogger(__name__)

SUMMARY_METRICS = ("precision", "recall", "f1", "tpr", "fdr", "shd_raw", "shd_normalized", "pod", "m_hat")


def load_dataset(spec: DatasetSpec, seed: int) -> tuple[MultivariateSeries, GroundTruth | None]:
    if spec.kind == "motif":
        return gen_motif(spec.motif, spec.T, spec.lags, spec.noise_std, seed)
    if spec.kind == "lorenz96":
        return gen_lorenz96(
            spec.n_vars, spec.T, spec.forcing, spec.dt, seed,
            burn_in=spec.burn_in, sample_every=spec.sample_every, has_lags=spec.has_lags,
        )
    if spec.kind == "linear_var":
        coef = random_var_coefficients(
            spec.n_vars, spec.n_cross, seed, spec.var_lags, spec.weight_range, spec.self_coef
        )
        return gen_linear_var(coef, spec.T, spec.noise_std, seed)
    series = load_series_csv(spec.csv)
    truth = None
    if spec.truth:
        truth = load_truth_json(spec.truth)
        truth = GroundTruth(truth.graph, truth.has_lags and spec.has_lags)
    return series, truth


@dataclass
class SeedContext:
    seed: int
    raw: MultivariateSeries
    series: MultivariateSeries
    truth: GroundTruth | None
    predictor: TrainedPredictor
    tensor: InfluenceTensor
    probe_passes: int


def prepare_seed(config: ExperimentConfig, seed: int, policy: ClampPolicy | None = None) -> SeedContext:
    """Generate or load, normalize, train and probe for one seed."""
    raw, truth = load_dataset(config.dataset, seed)
    series = normalize_minmax(raw) if config.normalize else raw
    pred = train(series, replace(config.predictor, seed=seed))
    pred.reset_counter()
    S = influence_tensor(pred, series, policy or config.clamp)
    return SeedContext(seed, raw, series, truth, pred, S, pred.forward_passes)


def _select(config: ExperimentConfig, ctx: SeedContext, S: InfluenceTensor | None = None):
    return select_graph(
        ctx.predictor, ctx.series, S if S is not None else ctx.tensor,
        lam=config.lam, m_max=config.m_max, patience=config.patience, tolerance=config.tolerance,
    )


def _evaluate(config: ExperimentConfig, graph, truth: GroundTruth | None) -> StructuralReport | None:
    if truth is None:
        return None
    return evaluate(graph, truth.graph, truth.has_lags, self_loops=config.self_loops)


# -- run_pipeline -------------------------------------------------------------


@dataclass
class SeedResult:
    seed: int
    ok: bool
    error: str | None = None
    report: StructuralReport | None = None
    trace: QbicTrace | None = None
    n_vars: int | None = None
    n_edges: int | None = None
    probe_passes: int | None = None
    select_passes: int | None = None
    runtime_ms: float | None = None

    @property
    def m_hat(self):
        return self.trace.selected_m if self.trace else None

    def row(self) -> dict:
        r = {"seed": self.seed, "status": "ok" if self.ok else "failed", "error": self.error or ""}
        rep = self.report.to_dict() if self.report else {}
        for k in ("precision", "recall", "f1", "tpr", "fdr", "shd_raw", "shd_normalized", "pod", "pod_vacuous"):
            r[k] = rep.get(k)
        r.update(
            m_hat=self.m_hat,
            n_edges=self.n_edges,
            qbic_evals=len(self.trace.entries) if self.trace else None,
            probe_passes=self.probe_passes,
            select_passes=self.select_passes,
        )
        return r


def aggregate(rows: Sequence[dict], keys: Sequence[str]) -> dict:
    """Mean and population std of each key over rows where it is present."""
    out = {}
    for k in keys:
        vals = [float(r[k]) for r in rows if r.get(k) is not None and r.get("status", "ok") == "ok"]
        if vals:
            out[k] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)), "n": len(vals)}
        else:
            out[k] = {"mean": None, "std": None, "n": 0}
    return out


@dataclass
class RunReport:
    results: list[SeedResult] = field(default_factory=list)

    @property
    def rows(self) -> list[dict]:
        return [r.row() for r in self.results]

    @property
    def succeeded(self) -> bool:
        """At least one seed finished; the run as a whole failed otherwise."""
        return any(r.ok for r in self.results)

    @property
    def complete(self) -> bool:
        return all(r.ok for r in self.results)

    def aggregate(self) -> dict:
        return aggregate(self.rows, SUMMARY_METRICS)

    def mean(self, key: str) -> float | None:
        return self.aggregate()[key]["mean"]

    def to_dict(self) -> dict:
        return {
            "seeds": self.rows,
            "traces": {str(r.seed): r.trace.to_dict() for r in self.results if r.trace},
            "aggregate": self.aggregate(),
            "succeeded": self.succeeded,
            "complete": self.complete,
        }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows_csv(path: Path, rows: Sequence[dict]) -> None:
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = list(dict.fromkeys(k for r in rows for k in r))
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])


def write_summary_csv(path: Path, agg: dict) -> None:
    rows = [{"metric": k, "mean": v["mean"], "std": v["std"], "n": v["n"]} for k, v in agg.items()]
    write_rows_csv(path, rows)


def _map_seeds(config: ExperimentConfig, fn: Callable[[int], object]) -> list:
    seeds = config.seeds()
    if config.workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(fn, seeds))
    return [fn(s) for s in seeds]


def _seed_dir(config: ExperimentConfig, seed: int) -> Path | None:
    if not config.out_dir:
        return None
    d = Path(config.out_dir) / f"seed_{seed:04d}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _run_seed(config: ExperimentConfig, seed: int) -> SeedResult:
    start = time.perf_counter()
    try:
        ctx = prepare_seed(config, seed)
        graph, trace = _select(config, ctx)
        select_passes = ctx.predictor.forward_passes - ctx.probe_passes
        report = _evaluate(config, graph, ctx.truth)
        out = _seed_dir(config, seed)
        if out is not None:
            save_series_csv(ctx.raw, out / "series.csv")
            if ctx.truth is not None:
                save_truth_json(ctx.truth, out / "truth.json")
            ctx.predictor.save(out / "predictor.json")
            save_tensor(ctx.tensor, out / "influence.bin", config.clamp)
            save_graph_json(graph, out / "graph.json")
            save_trace_csv(trace, out / "trace.csv")
            if report is not None:
                write_report(report, out / "metrics.csv", out / "metrics.json")
        return SeedResult(
            seed, True, None, report, trace, ctx.series.n_vars, graph.m,
            ctx.probe_passes, select_passes, (time.perf_counter() - start) * 1e3,
        )
    except Exception as exc:
        log.warning("seed %d failed: %s", seed, exc)
        return SeedResult(seed, False, f"{type(exc).__name__}: {exc}",
                          runtime_ms=(time.perf_counter() - start) * 1e3)


def run_pipeline(config: ExperimentConfig) -> RunReport:
    """generate/load -> normalize -> train -> probe -> select -> evaluate, per seed."""
    results = _map_seeds(config, lambda s: _run_seed(config, s))
    report = RunReport(sorted(results, key=lambda r: r.seed))
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.json", config_to_dict(config))
        _write_json(out / "report.json", report.to_dict())
        write_rows_csv(out / "report.csv", report.rows)
        write_summary_csv(out / "summary.csv", report.aggregate())
    return report


# -- ablations ----------------------------------------------------------------


@dataclass
class AblationResult:
    """Per-seed rows plus aggregates for one ablation."""

    name: str
    rows: list[dict]
    summary: dict

    def to_dict(self) -> dict:
        return {"ablation": self.name, "rows": self.rows, "summary": self.summary}

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / f"ablate_{self.name}.json", self.to_dict())
        write_rows_csv(out / f"ablate_{self.name}.csv", self.rows)


def _failed_row(seed, exc, **extra):
    return {"seed": seed, "status": "failed", "error": f"{type(exc).__name__}: {exc}", **extra}


def ablate_permuted_signal(config: ExperimentConfig) -> AblationResult:
    """Select on S and on a value-preserving shuffle of S with identical settings."""

    def one(seed):
        try:
            ctx = prepare_seed(config, seed)
            g_orig, t_orig = _select(config, ctx)
            g_perm, t_perm = _select(config, ctx, permute_tensor(ctx.tensor, seed))
            r_orig = _evaluate(config, g_orig, ctx.truth)
            r_perm = _evaluate(config, g_perm, ctx.truth)
            return {
                "seed": seed, "status": "ok", "error": "",
                "f1_original": r_orig.f1, "f1_permuted": r_perm.f1,
                "delta_f1": r_orig.f1 - r_perm.f1,
                "m_hat_original": t_orig.selected_m, "m_hat_permuted": t_perm.selected_m,
                "evals_original": len(t_orig.entries), "evals_permuted": len(t_perm.entries),
            }
        except Exception as exc:
            return _failed_row(seed, exc)

    rows = sorted(_map_seeds(config, one), key=lambda r: r["seed"])
    summary = aggregate(rows, ("f1_original", "f1_permuted", "delta_f1"))
    result = AblationResult("permuted", rows, summary)
    if config.out_dir:
        result.write(config.out_dir)
    return result


def ablate_clamp_sweep(config: ExperimentConfig, grid: Sequence[float] | None = None) -> AblationResult:
    """Full probe/select/evaluate for each fixed clamp value x* in ``grid``."""
    grid = tuple(config.sweep_grid if grid is None else grid)
    if not grid or any(not 0.0 <= x <= 1.0 for x in grid):
        raise ValueError("grid must be a nonempty list of values in [0, 1]")

    def one(seed):
        out = []
        try:
            raw, truth = load_dataset(config.dataset, seed)
            series = normalize_minmax(raw) if config.normalize else raw
            pred = train(series, replace(config.predictor, seed=seed))
        except Exception as exc:
            return [_failed_row(seed, exc, x_star=x) for x in grid]
        for x in grid:
            try:
                policy = ClampPolicy("fixed", float(x), config.clamp.t0)
                S = influence_tensor(pred, series, policy)
                ctx = SeedContext(seed, raw, series, truth, pred, S, 0)
                graph, trace = _select(config, ctx)
                rep = _evaluate(config, graph, truth)
                out.append({
                    "seed": seed, "status": "ok", "error": "", "x_star": float(x),
                    "f1": rep.f1 if rep else None, "pod": rep.pod if rep else None,
                    "m_hat": trace.selected_m, "n_edges": graph.m,
                    "peak_max": float(S.values.max()),
                })
            except Exception as exc:
                out.append(_failed_row(seed, exc, x_star=float(x)))
        return out

    rows = sorted((r for block in _map_seeds(config, one) for r in block),
                  key=lambda r: (r["seed"], r["x_star"]))
    summary = {}
    for x in grid:
        sub = [r for r in rows if r["x_star"] == float(x)]
        summary[repr(float(x))] = aggregate(sub, ("f1", "pod", "m_hat"))
    result = AblationResult("clamp_sweep", rows, summary)
    if config.out_dir:
        result.write(config.out_dir)
    return result


def _safe_corr(xs, ys, kind):
    try:
        return correlation(xs, ys, kind)
    except (UndefinedCorrelationError, ValueError):
        return None


def qbic_f1_profile(config: ExperimentConfig, ctx: SeedContext) -> dict:
    """Score every prefix graph without early stopping and relate score to F1."""
    candidates = rank_candidates(peak_reduce(ctx.tensor))
    n = ctx.series.n_vars
    m_all = len(candidates)
    truth = ctx.truth.graph
    if not config.self_loops:
        truth = truth.without_self_loops()
    if m_all == 0:
        # the clamp moved nothing: only the empty graph is on offer
        return {"qbic": [], "f1": [], "pearson": None, "spearman": None, "m_hat": 0,
                "f1_selected": 0.0, "f1_max": 0.0, "f1_ratio": 0.0}
    _, trace = select_graph(
        ctx.predictor, ctx.series, ctx.tensor, lam=config.lam, m_max=m_all,
        patience=m_all, candidates=candidates, tolerance=config.tolerance,
    )
    f1s = []
    for m in trace.ms:
        g = graph_from_candidates(n, candidates[:m])
        if not config.self_loops:
            g = g.without_self_loops()
        f1s.append(structural_scores(g, truth).f1)
    idx, _ = conservative_argmin(trace.values, patience=config.patience, tolerance=config.tolerance)
    f1_max = max(f1s)
    return {
        "qbic": trace.values,
        "f1": f1s,
        "pearson": _safe_corr(trace.values, f1s, "pearson"),
        "spearman": _safe_corr(trace.values, f1s, "spearman"),
        "m_hat": trace.ms[idx],
        "f1_selected": f1s[idx],
        "f1_max": f1_max,
        # no candidate graph overlaps the truth at all: nothing to attain
        "f1_ratio": f1s[idx] / f1_max if f1_max > 0 else 0.0,
    }


def ablate_qbic_correlation(config: ExperimentConfig) -> AblationResult:
    """Correlation of score and F1 along the full trace, and F1(m_hat) / max F1."""

    def one(seed):
        try:
            ctx = prepare_seed(config, seed)
            if ctx.truth is None:
                raise ValueError("qbic correlation ablation needs a ground truth graph")
            prof = qbic_f1_profile(config, ctx)
            return {
                "seed": seed, "status": "ok", "error": "",
                "pearson": prof["pearson"], "spearman": prof["spearman"],
                "m_hat": prof["m_hat"], "f1_selected": prof["f1_selected"],
                "f1_max": prof["f1_max"], "f1_ratio": prof["f1_ratio"],
                "n_points": len(prof["qbic"]),
            }
        except Exception as exc:
            return _failed_row(seed, exc)

    rows = sorted(_map_seeds(config, one), key=lambda r: r["seed"])
    summary = aggregate(rows, ("pearson", "spearman", "f1_ratio", "f1_selected", "f1_max"))
    summary["negative_pearson_seeds"] = sum(
        1 for r in rows if r.get("pearson") is not None and r["pearson"] < 0
    )
    result = AblationResult("qbic_correlation", rows, summary)
    if config.out_dir:
        result.write(config.out_dir)
    return result


# -- runtime ------------------------------------------------------------------


def bench_runtime(config: ExperimentConfig, n_vars_grid: Sequence[int] | None = None, repeats: int | None = None) -> AblationResult:
    """Wall-clock of probe + select per N, with forward-pass accounting.

    Each repeat uses an independently generated sparse VAR with N cross
    edges. ``formula_ok`` checks passes == (N + 1) + number of score
    evaluations.
    """
    grid = tuple(config.bench_grid if n_vars_grid is None else n_vars_grid)
    repeats = config.bench_repeats if repeats is None else repeats
    if not grid:
        raise ValueError("n_vars_grid must be nonempty")
    per_run = []
    for n in grid:
        for r in range(repeats):
            seed = config.base_seed + r
            spec = replace(config.dataset, kind="linear_var", n_vars=n,
                           n_cross=min(n, n * (n - 1) // 2))
            raw, _ = load_dataset(spec, seed)
            series = normalize_minmax(raw)
            pred = train(series, replace(config.predictor, seed=seed))
            pred.reset_counter()
            start = time.perf_counter()
            S = influence_tensor(pred, series, config.clamp)
            _, trace = select_graph(pred, series, S, lam=config.lam, patience=config.patience,
                                    tolerance=config.tolerance)
            elapsed = (time.perf_counter() - start) * 1e3
            per_run.append({
                "n_vars": n, "repeat": r, "runtime_ms": elapsed,
                "forward_passes": pred.forward_passes, "qbic_evals": len(trace.entries),
                "formula_ok": pred.forward_passes == n + 1 + len(trace.entries),
            })
    rows = []
    for n in grid:
        sub = [p for p in per_run if p["n_vars"] == n]
        times = [p["runtime_ms"] for p in sub]
        rows.append({
            "n_vars": n,
            "runtime_ms_mean": float(np.mean(times)),
            "runtime_ms_std": float(np.std(times)),
            "forward_passes_mean": float(np.mean([p["forward_passes"] for p in sub])),
            "qbic_evals_mean": float(np.mean([p["qbic_evals"] for p in sub])),
            "formula_ok": all(p["formula_ok"] for p in sub),
        })
    result = AblationResult("bench", rows, {"runs": per_run})
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_rows_csv(out / "bench.csv", rows)
        write_rows_csv(out / "bench_runs.csv", per_run)
    return result
