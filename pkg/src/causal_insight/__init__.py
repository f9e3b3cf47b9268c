"""Lagged causal graph discovery by probing a causally masked forecaster.

Pipeline: generate or load a series, fit a masked predictor, clamp each
input in turn to build an influence tensor, rank lagged edge candidates
and pick the sparsity level with a BIC-style score, then score the graph
against a known truth.
"""

from .core import LaggedEdge, MultivariateSeries, TemporalGraph, load_series_csv, normalize_minmax
from .datagen import GroundTruth, gen_linear_var, gen_lorenz96, gen_motif, random_var_coefficients
from .graphsel import QbicTrace, peak_reduce, qbic_score, rank_candidates, select_graph
from .metrics import StructuralReport, evaluate, pod, shd, structural_scores
from .predictor import PredictorConfig, TrainedPredictor, predict_series, predict_with_parents, train
from .probing import ClampPolicy, InfluenceTensor, influence_tensor, permute_tensor

__version__ = "0.1.0"

__all__ = [
    "ClampPolicy", "GroundTruth", "InfluenceTensor", "LaggedEdge", "MultivariateSeries",
    "PredictorConfig", "QbicTrace", "StructuralReport", "TemporalGraph", "TrainedPredictor",
    "evaluate", "gen_linear_var", "gen_lorenz96", "gen_motif", "influence_tensor",
    "load_series_csv", "normalize_minmax", "peak_reduce", "permute_tensor", "pod",
    "predict_series", "predict_with_parents", "qbic_score", "random_var_coefficients",
    "rank_candidates", "select_graph", "shd", "structural_scores", "train",
]
