"""Causally masked temporal predictors with a predict-only inference surface.

Each target variable ``j`` has its own head. A head sees a sliding window of
``K`` lags over every variable, except that its own lag-0 slot is masked.
Window slots are flattened as ``var * K + lag``. Inputs are centred on the
per-variable training mean, so a slot filled with the mean contributes
exactly nothing; history before ``t = 0`` is padded that way, which lets the
predictor emit outputs for the first ``K - 1`` steps too. Those early
outputs are excluded from every loss.
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import MultivariateSeries
from .datagen import rng_for
from .errors import DivergenceError, InsufficientDataError, InvalidConfigError, InvalidInputError, ParseError

FORMAT_NAME = "causal-insight-predictor"
FORMAT_VERSION = 1
BACKBONES = ("linear", "mlp")
OPTIMIZERS = ("adam", "gd")
IMPUTATIONS = ("mean", "zero")


@dataclass(frozen=True)
class MaskSpec:
    n_vars: int
    window: int
    target: int


def build_causal_mask(spec: MaskSpec) -> np.ndarray:
    """Boolean ``(n_vars, window)`` array; True marks an accessible slot."""
    if spec.n_vars < 1 or spec.window < 1 or not 0 <= spec.target < spec.n_vars:
        raise InvalidInputError(f"invalid mask spec {spec}")
    mask = np.ones((spec.n_vars, spec.window), dtype=bool)
    mask[spec.target, 0] = False
    return mask


def head_masks(n_vars: int, window: int) -> np.ndarray:
    """Flattened causal masks for every head, shape ``(N, N * K)``."""
    return np.stack(
        [build_causal_mask(MaskSpec(n_vars, window, j)).ravel() for j in range(n_vars)]
    )


@dataclass(frozen=True)
class PredictorConfig:
    backbone: str = "mlp"
    window: int = 5
    hidden_sizes: tuple[int, ...] = (32,)
    learning_rate: float = 3e-2
    max_epochs: int = 2000
    patience: int = 20
    seed: int = 0
    optimizer: str = "adam"
    # relative loss decrease that counts as an improvement for early stopping;
    # None picks 1e-6 for the (cheap, convex) linear head and 1e-4 for the MLP
    min_improvement: float | None = None
    impute: str = "mean"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.min_improvement is None:
            object.__setattr__(self, "min_improvement", 1e-6 if self.backbone == "linear" else 1e-4)
        if self.min_improvement < 0:
            raise InvalidConfigError("min_improvement must be >= 0")
        if self.backbone not in BACKBONES:
            raise InvalidConfigError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.impute not in IMPUTATIONS:
            raise InvalidConfigError(f"impute must be one of {IMPUTATIONS}")
        if self.window < 2:
            raise InvalidConfigError("window K must be >= 2")
        if self.max_epochs < 1 or self.patience < 1:
            raise InvalidConfigError("max_epochs and patience must be >= 1")
        if self.learning_rate <= 0:
            raise InvalidConfigError("learning_rate must be positive")
        if self.backbone == "mlp" and (not self.hidden_sizes or min(self.hidden_sizes) < 1):
            raise InvalidConfigError("mlp backbone needs positive hidden_sizes")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return self.hidden_sizes if self.backbone == "mlp" else ()


def build_windows(centered: np.ndarray, window: int) -> np.ndarray:
    """``(T, N*K)`` design matrix; row t holds ``centered[i, t - lag]``, zero before t=0."""
    n, t_len = centered.shape
    out = np.zeros((t_len, n, window))
    for lag in range(window):
        out[lag:, :, lag] = centered[:, : t_len - lag].T
    return out.reshape(t_len, n * window)


# -- forward / backward -------------------------------------------------------
#
# params is a list of (W, b) per layer, batched over heads:
#   W: (N, out, in), b: (N, out). The last layer has out == 1.


def init_params(config: PredictorConfig, n_vars: int, target_means: np.ndarray):
    rng = rng_for(config.seed, "init")
    d_in = n_vars * config.window
    sizes = [d_in, *config.layer_sizes, 1]
    params = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = k == len(sizes) - 2
        if config.backbone == "linear":
            w = np.zeros((n_vars, fan_out, fan_in))
        else:
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(n_vars, fan_out, fan_in))
        b = np.zeros((n_vars, fan_out))
        if last:
            b[:, 0] = target_means
        params.append((w, b))
    return params


def forward(params, x, keep, fill=None):
    """Run every head on shared windows ``x`` (T, D).

    ``keep`` (N, D) selects the slots each head reads. When ``fill`` (N, D)
    is given, dropped slots read that constant instead of contributing 0.
    Returns predictions (N, T) and the activations needed for backprop.
    """
    w0, b0 = params[0]
    w0k = w0 * keep[:, None, :]
    z = x @ w0k.transpose(0, 2, 1) + b0[:, None, :]
    if fill is not None:
        z = z + ((w0 * (~keep)[:, None, :]) @ fill[:, :, None]).transpose(0, 2, 1)
    acts = [z]
    for w, b in params[1:]:
        a = np.tanh(z)
        acts.append(a)
        z = a @ w.transpose(0, 2, 1) + b[:, None, :]
    return z[:, :, 0], acts


def loss_and_grad(params, x, y, keep):
    """Mean over heads of per-head MSE, and its gradient w.r.t. ``params``."""
    yhat, acts = forward(params, x, keep)
    n_heads, n = y.shape
    resid = yhat - y
    loss = float(np.mean(resid ** 2))
    dz = (2.0 / (n_heads * n) * resid)[:, :, None]
    grads = [None] * len(params)
    for k in range(len(params) - 1, 0, -1):
        w, _ = params[k]
        a = acts[k]
        grads[k] = (dz.transpose(0, 2, 1) @ a, dz.sum(axis=1))
        dz = (dz @ w) * (1.0 - a ** 2)
    dw0 = (dz.transpose(0, 2, 1) @ x) * keep[:, None, :]
    grads[0] = (dw0, dz.sum(axis=1))
    return loss, grads


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [tuple(np.zeros_like(p) for p in layer) for layer in params]
        self.v = [tuple(np.zeros_like(p) for p in layer) for layer in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        new = []
        for k, (layer, glayer) in enumerate(zip(params, grads)):
            ms, vs, out = [], [], []
            for p, g, m, v in zip(layer, glayer, self.m[k], self.v[k]):
                m = self.b1 * m + (1 - self.b1) * g
                v = self.b2 * v + (1 - self.b2) * g * g
                out.append(p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps))
                ms.append(m)
                vs.append(v)
            self.m[k], self.v[k] = tuple(ms), tuple(vs)
            new.append(tuple(out))
        return new


def _gd_step(params, grads, lr):
    return [tuple(p - lr * g for p, g in zip(layer, glayer)) for layer, glayer in zip(params, grads)]


# -- trained predictor --------------------------------------------------------


class TrainedPredictor:
    """Frozen predictor. Only inference is exposed; each call is counted."""

    def __init__(self, config: PredictorConfig, n_vars: int, input_mean, params, train_loss=()):
        self.config = config
        self.n_vars = int(n_vars)
        self.input_mean = np.array(input_mean, dtype=np.float64)
        self._params = [
            (np.array(w, dtype=np.float64), np.array(b, dtype=np.float64)) for w, b in params
        ]
        for w, b in self._params:
            w.setflags(write=False)
            b.setflags(write=False)
        self.input_mean.setflags(write=False)
        self.train_loss = tuple(float(v) for v in train_loss)
        self._keep = head_masks(self.n_vars, config.window)
        self._lock = threading.Lock()
        self._forward_passes = 0

    @property
    def window(self) -> int:
        return self.config.window

    @property
    def valid_from(self) -> int:
        """First time index whose prediction has a full, unpadded window."""
        return self.config.window - 1

    @property
    def final_loss(self) -> float:
        return min(self.train_loss) if self.train_loss else float("nan")

    @property
    def forward_passes(self) -> int:
        return self._forward_passes

    def reset_counter(self) -> None:
        with self._lock:
            self._forward_passes = 0

    def _count(self):
        with self._lock:
            self._forward_passes += 1

    @property
    def params(self):
        return self._params

    def _windows(self, series):
        values = series.values if isinstance(series, MultivariateSeries) else np.asarray(series, dtype=float)
        if values.ndim != 2 or values.shape[0] != self.n_vars:
            raise InvalidInputError(
                f"series has shape {values.shape}, predictor expects {self.n_vars} variables"
            )
        if values.shape[1] <= self.window:
            raise InsufficientDataError(f"T={values.shape[1]} must exceed window K={self.window}")
        return build_windows(values - self.input_mean[:, None], self.window)

    def predict_series(self, series) -> np.ndarray:
        """Predictions for every (variable, time); see ``valid_from``."""
        x = self._windows(series)
        self._count()
        yhat, _ = forward(self._params, x, self._keep)
        return yhat

    def predict_with_parents(self, series, parents: Sequence[Sequence[int]], impute: str | None = None) -> np.ndarray:
        """Predict each target from its parent variables only.

        Non-parent slots are imputed with the training mean (or raw zero
        when ``impute='zero'``). All heads run in a single counted pass.
        """
        impute = impute or self.config.impute
        if impute not in IMPUTATIONS:
            raise InvalidConfigError(f"impute must be one of {IMPUTATIONS}")
        if len(parents) != self.n_vars:
            raise InvalidInputError(f"need one parent set per target ({self.n_vars}), got {len(parents)}")
        k = self.window
        allowed = np.zeros((self.n_vars, self.n_vars * k), dtype=bool)
        for j, pa in enumerate(parents):
            for i in pa:
                if not 0 <= int(i) < self.n_vars:
                    raise InvalidInputError(f"parent index {i} of target {j} out of range")
                allowed[j, int(i) * k:(int(i) + 1) * k] = True
        keep = self._keep & allowed
        fill = None
        if impute == "zero":
            fill = np.repeat(-self.input_mean, k)[None, :] * (self._keep & ~allowed)
        x = self._windows(series)
        self._count()
        yhat, _ = forward(self._params, x, keep, fill)
        return yhat

    # -- serialization

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["hidden_sizes"] = list(cfg["hidden_sizes"])
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "config": cfg,
            "n_vars": self.n_vars,
            "input_mean": self.input_mean.tolist(),
            "layers": [{"W": w.tolist(), "b": b.tolist()} for w, b in self._params],
            "train_loss": list(self.train_loss),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedPredictor":
        if d.get("format") != FORMAT_NAME:
            raise ParseError("not a predictor file")
        if d.get("version") != FORMAT_VERSION:
            raise ParseError(f"unsupported predictor version {d.get('version')}")
        config = PredictorConfig(**d["config"])
        params = [(np.array(layer["W"]), np.array(layer["b"])) for layer in d["layers"]]
        return cls(config, d["n_vars"], d["input_mean"], params, d.get("train_loss", ()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrainedPredictor":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc.msg}") from None
        return cls.from_dict(d)


def train(series: MultivariateSeries, config: PredictorConfig) -> TrainedPredictor:
    """Fit one head per target by full-batch minimisation of the window MSE.

    Stops after ``patience`` epochs without a relative improvement of
    ``min_improvement`` and keeps the best parameters seen.
    """
    values = series.values
    n, t_len = values.shape
    k = config.window
    if t_len <= k:
        raise InsufficientDataError(f"T={t_len} must exceed window K={k}")
    mean = values.mean(axis=1)
    x = build_windows(values - mean[:, None], k)[k - 1:]
    y = values[:, k - 1:]
    keep = head_masks(n, k)

    params = init_params(config, n, y.mean(axis=1))
    opt = _Adam(params, config.learning_rate) if config.optimizer == "adam" else None
    best_loss, best_params = np.inf, params
    trace = []
    stale = 0
    for epoch in range(config.max_epochs):
        # overflow on a diverging run is reported below as DivergenceError
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = loss_and_grad(params, x, y, keep)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite training loss at epoch {epoch}", epoch=epoch)
        trace.append(loss)
        if loss < best_loss * (1.0 - config.min_improvement):
            best_loss, best_params = loss, params
            stale = 0
        else:
            if loss < best_loss:
                best_loss, best_params = loss, params
            stale += 1
            if stale >= config.patience:
                break
        params = opt.step(params, grads) if opt else _gd_step(params, grads, config.learning_rate)

    pred = TrainedPredictor(config, n, mean, best_params, trace)
    return pred


def predict_series(pred: TrainedPredictor, series) -> np.ndarray:
    return pred.predict_series(series)


def predict_with_parents(pred: TrainedPredictor, series, parents, impute=None) -> np.ndarray:
    return pred.predict_with_parents(series, parents, impute)


def linear_coefficients(pred: TrainedPredictor) -> np.ndarray:
    """Linear-backbone weights reshaped to ``coef[lag, src, dst]``."""
    if pred.config.backbone != "linear":
        raise InvalidInputError("coefficients are only defined for the linear backbone")
    w = pred.params[0][0][:, 0, :]  # (dst, src*K + lag)
    n, k = pred.n_vars, pred.window
    return w.reshape(n, n, k).transpose(2, 1, 0).copy()
