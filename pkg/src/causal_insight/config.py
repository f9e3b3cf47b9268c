"""Experiment configuration and its YAML file format.

A config file has up to five top-level sections, all optional::

    dataset:            # what to run on
      kind: linear_var  # motif | lorenz96 | linear_var | csv
      T: 2000
      ...
    predictor:          # PredictorConfig fields (seed is set per run seed)
      backbone: linear
      window: 3
    probe:              # ClampPolicy fields
      mode: max         # max | zero | fixed
      value: null
      t0: 0
    select:
      lambda: 0.4
      patience: 5
      tolerance: 0.01
      m_max: null       # null = all eligible candidates
    run:
      n_seeds: 10
      base_seed: 0
      out: runs/var
      normalize: true
      self_loops: true  # count self-loops in the metrics
      workers: 1
    bench:
      n_vars_grid: [5, 10, 20]
      repeats: 3
    sweep:
      grid: [0.0, 0.25, 0.5, 0.75, 1.0]

Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import InvalidConfigError
from .predictor import PredictorConfig
from .probing import ClampPolicy

DATASET_KINDS = ("motif", "lorenz96", "linear_var", "csv")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "linear_var"
    T: int = 1000
    noise_std: float = 1.0
    # motif
    motif: str = "fork"
    lags: tuple[int, ...] | None = None
    # linear_var
    n_vars: int = 5
    n_cross: int = 4
    var_lags: tuple[int, ...] = (1, 2)
    weight_range: tuple[float, float] = (0.4, 0.8)
    self_coef: float = 0.5
    # lorenz96
    forcing: float = 8.0
    dt: float = 0.05
    burn_in: int = 1000
    sample_every: int = 1
    # csv
    csv: str | None = None
    truth: str | None = None
    has_lags: bool = True

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise InvalidConfigError(f"dataset.kind must be one of {DATASET_KINDS}, got {self.kind!r}")
        if self.kind == "csv" and not self.csv:
            raise InvalidConfigError("dataset.csv is required for kind 'csv'")
        for name in ("lags", "var_lags", "weight_range"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(v))


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    clamp: ClampPolicy = field(default_factory=ClampPolicy)
    lam: float = 0.4
    m_max: int | None = None
    patience: int = 5
    tolerance: float = 0.01
    n_seeds: int = 1
    base_seed: int = 0
    out_dir: str | None = None
    normalize: bool = True
    self_loops: bool = True
    workers: int = 1
    bench_grid: tuple[int, ...] = (5, 10, 20)
    bench_repeats: int = 3
    sweep_grid: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)

    def __post_init__(self):
        if self.n_seeds < 1:
            raise InvalidConfigError("run.n_seeds must be >= 1")
        if self.lam <= 0:
            raise InvalidConfigError("select.lambda must be positive")
        if self.patience < 1:
            raise InvalidConfigError("select.patience must be >= 1")
        if self.tolerance < 0:
            raise InvalidConfigError("select.tolerance must be >= 0")
        if self.m_max is not None and self.m_max < 1:
            raise InvalidConfigError("select.m_max must be >= 1")
        if self.workers < 1:
            raise InvalidConfigError("run.workers must be >= 1")
        if not self.sweep_grid or any(not 0.0 <= x <= 1.0 for x in self.sweep_grid):
            raise InvalidConfigError("sweep.grid must be a nonempty list of values in [0, 1]")
        object.__setattr__(self, "bench_grid", tuple(int(v) for v in self.bench_grid))
        object.__setattr__(self, "sweep_grid", tuple(float(v) for v in self.sweep_grid))

    def seeds(self) -> list[int]:
        return [self.base_seed + k for k in range(self.n_seeds)]

    def with_overrides(self, seed=None, out=None, lam=None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["base_seed"] = int(seed)
        if out is not None:
            changes["out_dir"] = str(out)
        if lam is not None:
            changes["lam"] = float(lam)
        return replace(self, **changes)


def _build(cls, section: dict, where: str, rename: dict | None = None):
    rename = rename or {}
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in (section or {}).items():
        name = rename.get(key, key)
        if name not in known:
            raise InvalidConfigError(f"unknown key {where}.{key}")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidConfigError(f"{where}: {exc}") from None


_SECTIONS = ("dataset", "predictor", "probe", "select", "run", "bench", "sweep")


def config_from_dict(d: dict, base_dir: Path | None = None) -> ExperimentConfig:
    d = d or {}
    unknown = set(d) - set(_SECTIONS)
    if unknown:
        raise InvalidConfigError(f"unknown config sections: {sorted(unknown)}")
    dataset = _build(DatasetSpec, d.get("dataset"), "dataset")
    if base_dir is not None and dataset.kind == "csv":
        resolve = lambda p: str((base_dir / p).resolve()) if p and not Path(p).is_absolute() else p
        dataset = replace(dataset, csv=resolve(dataset.csv), truth=resolve(dataset.truth))
    predictor = _build(PredictorConfig, d.get("predictor"), "predictor")
    clamp = _build(ClampPolicy, d.get("probe"), "probe")

    top = {}
    for key, value in (d.get("select") or {}).items():
        name = {"lambda": "lam"}.get(key, key)
        if name not in ("lam", "m_max", "patience", "tolerance"):
            raise InvalidConfigError(f"unknown key select.{key}")
        top[name] = value
    for key, value in (d.get("run") or {}).items():
        name = {"out": "out_dir"}.get(key, key)
        if name not in ("n_seeds", "base_seed", "out_dir", "normalize", "self_loops", "workers"):
            raise InvalidConfigError(f"unknown key run.{key}")
        top[name] = value
    for key, value in (d.get("bench") or {}).items():
        name = {"n_vars_grid": "bench_grid", "repeats": "bench_repeats"}.get(key)
        if name is None:
            raise InvalidConfigError(f"unknown key bench.{key}")
        top[name] = value
    for key, value in (d.get("sweep") or {}).items():
        if key != "grid":
            raise InvalidConfigError(f"unknown key sweep.{key}")
        top["sweep_grid"] = value
    try:
        return ExperimentConfig(dataset=dataset, predictor=predictor, clamp=clamp, **top)
    except TypeError as exc:
        raise InvalidConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        d = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise InvalidConfigError(f"{path}: {exc}") from None
    if d is not None and not isinstance(d, dict):
        raise InvalidConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(d, base_dir=path.parent)


def config_to_dict(config: ExperimentConfig) -> dict:
    """Inverse of :func:`config_from_dict` (plain types only)."""

    def plain(obj):
        d = dataclasses.asdict(obj)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    return {
        "dataset": plain(config.dataset),
        "predictor": plain(config.predictor),
        "probe": plain(config.clamp),
        "select": {
            "lambda": config.lam,
            "m_max": config.m_max,
            "patience": config.patience,
            "tolerance": config.tolerance,
        },
        "run": {
            "n_seeds": config.n_seeds,
            "base_seed": config.base_seed,
            "out": config.out_dir,
            "normalize": config.normalize,
            "self_loops": config.self_loops,
            "workers": config.workers,
        },
        "bench": {"n_vars_grid": list(config.bench_grid), "repeats": config.bench_repeats},
        "sweep": {"grid": list(config.sweep_grid)},
    }
