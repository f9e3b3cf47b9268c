"""Command line entry point: ``causal-insight <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig, load_config
from .core import load_graph_json, load_series_csv, normalize_minmax, save_graph_json, save_series_csv
from .datagen import load_truth_json, save_truth_json
from .errors import CausalInsightError
from .graphsel import save_trace_csv, select_graph
from .harness import (
    ablate_clamp_sweep,
    ablate_permuted_signal,
    ablate_qbic_correlation,
    bench_runtime,
    load_dataset,
    run_pipeline,
)
from .metrics import evaluate, write_report
from .predictor import TrainedPredictor, train
from .probing import ClampPolicy, influence_tensor, load_tensor, save_tensor

log = logging.getLogger("causal_insight")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        out=getattr(args, "out", None) if getattr(args, "out_is_dir", False) else None,
        lam=getattr(args, "lam", None),
    )


def _series(path, cfg: ExperimentConfig):
    series = load_series_csv(path)
    return normalize_minmax(series) if cfg.normalize else series


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_generate(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = args.name or cfg.dataset.kind
    series, truth = load_dataset(cfg.dataset, cfg.base_seed)
    save_series_csv(series, out / f"{name}_series.csv")
    if truth is not None:
        save_truth_json(truth, out / f"{name}_truth.json")
    _emit({"series": str(out / f"{name}_series.csv"), "n_vars": series.n_vars, "T": series.length,
           "truth_edges": truth.graph.m if truth else None})
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    pcfg = cfg.predictor if args.seed is None else replace(cfg.predictor, seed=args.seed)
    pred = train(_series(args.series, cfg), pcfg)
    pred.save(args.out)
    _emit({"predictor": args.out, "epochs": len(pred.train_loss), "final_loss": pred.final_loss})
    return 0


def cmd_probe(args) -> int:
    cfg = _config(args)
    policy = cfg.clamp
    if args.mode is not None or args.value is not None or args.t0 is not None:
        policy = ClampPolicy(
            args.mode or policy.mode,
            args.value if args.value is not None else policy.value,
            args.t0 if args.t0 is not None else policy.t0,
        )
    series = _series(args.series, cfg)
    pred = TrainedPredictor.load(args.predictor)
    S = influence_tensor(pred, series, policy)
    x_star = [policy.resolve(series, i) for i in range(series.n_vars)]
    sidecar = save_tensor(S, args.out, policy, x_star)
    _emit({"tensor": args.out, "sidecar": str(sidecar), "forward_passes": pred.forward_passes})
    return 0


def cmd_select(args) -> int:
    cfg = _config(args)
    series = _series(args.series, cfg)
    pred = TrainedPredictor.load(args.predictor)
    S = load_tensor(args.tensor)
    graph, trace = select_graph(
        pred, series, S,
        lam=cfg.lam,
        m_max=args.m_max if args.m_max is not None else cfg.m_max,
        patience=args.patience if args.patience is not None else cfg.patience,
        tolerance=args.tolerance if args.tolerance is not None else cfg.tolerance,
    )
    save_graph_json(graph, args.out)
    trace_path = args.trace or str(Path(args.out).with_suffix("")) + "_trace.csv"
    save_trace_csv(trace, trace_path)
    _emit({"graph": args.out, "trace": trace_path, "m_hat": trace.selected_m,
           "qbic_evals": len(trace.entries), "forward_passes": pred.forward_passes})
    return 0


def cmd_evaluate(args) -> int:
    pred = load_graph_json(args.pred)
    truth = load_truth_json(args.truth)
    report = evaluate(pred, truth.graph, truth.has_lags, self_loops=not args.no_self_loops)
    prefix = args.out
    write_report(report, f"{prefix}.csv", f"{prefix}.json")
    _emit(report.to_dict())
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    report = run_pipeline(cfg)
    _emit({"aggregate": report.aggregate(), "failed_seeds": [r.seed for r in report.results if not r.ok]})
    return 0 if report.complete else 1


def cmd_ablate(args) -> int:
    cfg = _config(args)
    if args.kind == "permuted":
        result = ablate_permuted_signal(cfg)
    elif args.kind == "clamp-sweep":
        grid = [float(v) for v in args.grid.split(",")] if args.grid else None
        result = ablate_clamp_sweep(cfg, grid)
    else:
        result = ablate_qbic_correlation(cfg)
    _emit(result.summary)
    return 0 if all(r.get("status") == "ok" for r in result.rows) else 1


def cmd_bench(args) -> int:
    cfg = _config(args)
    grid = [int(v) for v in args.grid.split(",")] if args.grid else None
    result = bench_runtime(cfg, grid, args.repeats)
    _emit(result.rows)
    return 0 if all(r["formula_ok"] for r in result.rows) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causal-insight", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help, out_is_dir=False, required_out=True):
        sp.add_argument("--config", help="YAML experiment config")
        sp.add_argument("--seed", type=int, help="override the (base) seed")
        sp.add_argument("--out", required=required_out, help=out_help)
        sp.add_argument("--lambda", dest="lam", type=float, help="sparsity weight (default 0.4)")
        sp.set_defaults(out_is_dir=out_is_dir)

    sp = sub.add_parser("generate", help="write <name>_series.csv and <name>_truth.json")
    common(sp, "output directory")
    sp.add_argument("--name")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("train", help="fit a masked predictor on a series CSV")
    common(sp, "predictor JSON path")
    sp.add_argument("--series", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("probe", help="build the influence tensor")
    common(sp, "tensor .bin path (a .json sidecar is written next to it)")
    sp.add_argument("--predictor", required=True)
    sp.add_argument("--series", required=True)
    sp.add_argument("--mode", choices=["max", "zero", "fixed"])
    sp.add_argument("--value", type=float)
    sp.add_argument("--t0", type=int)
    sp.set_defaults(func=cmd_probe)

    sp = sub.add_parser("select", help="choose the graph from a probed tensor")
    common(sp, "graph JSON path")
    sp.add_argument("--predictor", required=True)
    sp.add_argument("--series", required=True)
    sp.add_argument("--tensor", required=True)
    sp.add_argument("--trace", help="trace CSV path (default <out>_trace.csv)")
    sp.add_argument("--m-max", type=int)
    sp.add_argument("--patience", type=int)
    sp.add_argument("--tolerance", type=float)
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("evaluate", help="score a predicted graph against the truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--out", required=True, help="report prefix; writes <out>.csv and <out>.json")
    sp.add_argument("--no-self-loops", action="store_true")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("run", help="full pipeline over all configured seeds")
    common(sp, "output directory", out_is_dir=True, required_out=False)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("ablate", help="permuted-signal, clamp-sweep or score/F1 correlation ablation")
    common(sp, "output directory", out_is_dir=True, required_out=False)
    sp.add_argument("--kind", choices=["permuted", "clamp-sweep", "qbic-corr"], required=True)
    sp.add_argument("--grid", help="comma-separated x* values for clamp-sweep")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("bench", help="runtime and forward-pass accounting versus N")
    common(sp, "output directory", out_is_dir=True, required_out=False)
    sp.add_argument("--grid", help="comma-separated N values")
    sp.add_argument("--repeats", type=int)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CausalInsightError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
