"""Synthetic benchmark series with known lagged ground-truth graphs."""

from __future__ import annotations

import enum
import json
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import LaggedEdge, MultivariateSeries, TemporalGraph, graph_from_dict, graph_to_dict
from .errors import IntegrationError, InvalidConfigError, StabilityError

SELF_COEF = 0.5
MOTIF_LAGS = (1, 2, 3)
WEIGHT_RANGE = (0.5, 1.0)
DIVERGENCE_BOUND = 1e6


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Independent generator for a named stochastic stage of a seeded run."""
    return np.random.default_rng([int(seed), zlib.crc32(label.encode())])


@dataclass(frozen=True)
class GroundTruth:
    graph: TemporalGraph
    has_lags: bool = True


def save_truth_json(truth: GroundTruth, path) -> None:
    """Graph JSON plus a ``has_lags`` flag."""
    d = graph_to_dict(truth.graph, has_lags=truth.has_lags)
    Path(path).write_text(json.dumps(d, indent=2) + "\n", encoding="utf-8")


def load_truth_json(path) -> GroundTruth:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return GroundTruth(graph_from_dict(d), bool(d.get("has_lags", True)))


class MotifKind(str, enum.Enum):
    FORK = "fork"
    V_STRUCTURE = "v"
    MEDIATOR = "mediator"
    DIAMOND = "diamond"


# (n_vars, cross edges) with variables named A, B, C[, D]
MOTIF_TOPOLOGY: dict[MotifKind, tuple[int, tuple[tuple[int, int], ...]]] = {
    MotifKind.FORK: (3, ((0, 1), (0, 2))),
    MotifKind.V_STRUCTURE: (3, ((0, 2), (1, 2))),
    MotifKind.MEDIATOR: (3, ((0, 1), (1, 2), (0, 2))),
    MotifKind.DIAMOND: (4, ((0, 1), (0, 2), (1, 3), (2, 3))),
}


def _names(n):
    if n <= 26:
        return tuple(chr(ord("A") + i) for i in range(n))
    return tuple(f"X{i}" for i in range(n))


def _draw_motif(kind: MotifKind, T: int, lag_assignment, rng) -> np.ndarray:
    n, cross = MOTIF_TOPOLOGY[kind]
    drawn_lags = rng.choice(MOTIF_LAGS, size=len(cross))
    mags = rng.uniform(*WEIGHT_RANGE, size=len(cross))
    signs = rng.choice([-1.0, 1.0], size=len(cross))

    lags = {}
    for k, edge in enumerate(cross):
        lag = int(drawn_lags[k])
        if isinstance(lag_assignment, Mapping) and edge in lag_assignment:
            lag = int(lag_assignment[edge])
        elif lag_assignment is not None and not isinstance(lag_assignment, Mapping):
            lag = int(lag_assignment[k])
        if lag < 1:
            raise InvalidConfigError(f"lag for edge {edge} must be >= 1, got {lag}")
        if lag >= T:
            raise InvalidConfigError(f"lag {lag} for edge {edge} is not shorter than T={T}")
        lags[edge] = lag
    max_lag = max(lags.values())
    if T < 10 * max_lag:
        raise InvalidConfigError(f"T={T} is shorter than 10 x max lag ({max_lag})")

    coef = np.zeros((max_lag + 1, n, n))
    for i in range(n):
        coef[1, i, i] = SELF_COEF
    for k, (src, dst) in enumerate(cross):
        coef[lags[(src, dst)], src, dst] = signs[k] * mags[k]
    return coef


def motif_coefficients(
    kind: MotifKind | str,
    T: int,
    lag_assignment: Mapping[tuple[int, int], int] | Sequence[int] | None = None,
    seed: int = 0,
) -> np.ndarray:
    """The ``coef[lag][src][dst]`` tensor that :func:`gen_motif` simulates for ``seed``."""
    kind = MotifKind(kind)
    return _draw_motif(kind, T, lag_assignment, rng_for(seed, f"motif:{kind.value}"))


def gen_motif(
    kind: MotifKind | str,
    T: int,
    lag_assignment: Mapping[tuple[int, int], int] | Sequence[int] | None = None,
    noise_std: float = 1.0,
    seed: int = 0,
    burn_in: int = 100,
):
    """Linear additive-noise simulation of one of the four canonical motifs.

    Every node carries an AR(1) term with coefficient 0.5; each cross edge
    ``p -> c`` contributes ``w * p[t - lag]`` with ``|w|`` uniform on
    [0.5, 1.0] and random sign. Lags not fixed by ``lag_assignment`` (a
    mapping from edge to lag, or a sequence in topology order) are drawn
    from {1, 2, 3}.
    """
    kind = MotifKind(kind)
    if noise_std <= 0:
        raise InvalidConfigError("noise_std must be positive")
    rng = rng_for(seed, f"motif:{kind.value}")
    coef = _draw_motif(kind, T, lag_assignment, rng)
    n, cross = MOTIF_TOPOLOGY[kind]

    values = _simulate_var(coef, T, noise_std, rng, burn_in)
    edges = [LaggedEdge(i, i, 1) for i in range(n)]
    edges += [LaggedEdge(s, d, int(np.flatnonzero(coef[:, s, d])[0])) for s, d in cross]
    truth = GroundTruth(TemporalGraph(n, edges), has_lags=True)
    return MultivariateSeries(values, _names(n)), truth


def _simulate_var(coef, T, noise_std, rng, burn_in):
    """X[:, t] = sum_l coef[l].T @ X[:, t-l] + eps, returned as N x T."""
    L = coef.shape[0] - 1
    n = coef.shape[1]
    total = T + burn_in + L
    eps = rng.normal(0.0, noise_std, size=(total, n))
    x = np.zeros((total, n))
    x[:L] = eps[:L]
    for t in range(L, total):
        acc = eps[t].copy()
        for lag in range(1, L + 1):
            acc += x[t - lag] @ coef[lag]
        x[t] = acc
    return x[total - T:].T.copy()


def companion_spectral_radius(coef: np.ndarray) -> float:
    """Spectral radius of the VAR companion matrix for ``coef[lag][src][dst]``."""
    L = coef.shape[0] - 1
    n = coef.shape[1]
    if L < 1:
        return 0.0
    comp = np.zeros((n * L, n * L))
    for lag in range(1, L + 1):
        comp[:n, (lag - 1) * n:lag * n] = coef[lag].T
    if L > 1:
        comp[n:, :-n] = np.eye(n * (L - 1))
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def gen_linear_var(coef, T: int, noise_std: float = 1.0, seed: int = 0, burn_in: int = 200):
    """Simulate a stationary VAR from ``coef[lag][src][dst]``.

    ``coef`` has shape (L + 1, N, N); the lag-0 slice must be zero. The
    ground truth holds one edge per nonzero ordered pair, using the lag of
    the largest-magnitude coefficient for that pair.
    """
    coef = np.asarray(coef, dtype=np.float64)
    if coef.ndim != 3 or coef.shape[1] != coef.shape[2]:
        raise InvalidConfigError(f"coefficients must have shape (L+1, N, N), got {coef.shape}")
    if coef.shape[0] < 2:
        raise InvalidConfigError("max lag L must be >= 1")
    if np.any(coef[0] != 0):
        raise InvalidConfigError("contemporaneous (lag-0) coefficients are not supported")
    if noise_std <= 0:
        raise InvalidConfigError("noise_std must be positive")
    rho = companion_spectral_radius(coef)
    if rho >= 1.0:
        raise StabilityError(f"companion spectral radius {rho:.4f} >= 1")
    n = coef.shape[1]
    if T < 2:
        raise InvalidConfigError("T must be >= 2")

    rng = rng_for(seed, "var")
    values = _simulate_var(coef, T, noise_std, rng, burn_in)

    edges = []
    mags = np.abs(coef)
    for i in range(n):
        for j in range(n):
            if mags[:, i, j].max() > 0:
                edges.append(LaggedEdge(i, j, int(np.argmax(mags[:, i, j]))))
    truth = GroundTruth(TemporalGraph(n, edges, single_direction=_one_way(edges)), True)
    return MultivariateSeries(values, tuple(f"X{i}" for i in range(n))), truth


def _one_way(edges):
    pairs = {e.pair for e in edges}
    return not any(s != d and (d, s) in pairs for s, d in pairs)


def random_var_coefficients(
    n_vars: int,
    n_cross: int,
    seed: int,
    lags: Sequence[int] = (1, 2),
    weight_range: tuple[float, float] = (0.4, 0.8),
    self_coef: float = 0.5,
) -> np.ndarray:
    """Sparse stable VAR coefficients with ``n_cross`` one-way cross edges.

    Each node gets a lag-1 self term; cross edges pick random unordered
    pairs, a random direction, lag and signed weight. Redraws until the
    companion matrix is stable.
    """
    max_pairs = n_vars * (n_vars - 1) // 2
    if n_cross > max_pairs:
        raise InvalidConfigError(f"{n_cross} cross edges requested but only {max_pairs} pairs exist")
    rng = rng_for(seed, "var-coef")
    pairs = [(i, j) for i in range(n_vars) for j in range(i + 1, n_vars)]
    for _ in range(1000):
        coef = np.zeros((max(lags) + 1, n_vars, n_vars))
        for i in range(n_vars):
            coef[1, i, i] = self_coef
        for k in rng.choice(len(pairs), size=n_cross, replace=False):
            i, j = pairs[k]
            if rng.random() < 0.5:
                i, j = j, i
            lag = int(rng.choice(lags))
            coef[lag, i, j] = rng.choice([-1.0, 1.0]) * rng.uniform(*weight_range)
        if companion_spectral_radius(coef) < 0.95:
            return coef
    raise StabilityError("could not draw stable coefficients; lower weight_range")


def lorenz96_rhs(x: np.ndarray, forcing: float) -> np.ndarray:
    return (np.roll(x, -1) - np.roll(x, 2)) * np.roll(x, 1) - x + forcing


def rk4_step(x: np.ndarray, dt: float, forcing: float) -> np.ndarray:
    k1 = lorenz96_rhs(x, forcing)
    k2 = lorenz96_rhs(x + 0.5 * dt * k1, forcing)
    k3 = lorenz96_rhs(x + 0.5 * dt * k2, forcing)
    k4 = lorenz96_rhs(x + dt * k3, forcing)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def gen_lorenz96(
    n_vars: int = 10,
    T: int = 1000,
    forcing: float = 8.0,
    dt: float = 0.05,
    seed: int = 0,
    burn_in: int = 1000,
    sample_every: int = 1,
    noise_std: float = 0.0,
    has_lags: bool = True,
):
    """Lorenz-96 trajectory integrated with fixed-step RK4.

    One sample is kept every ``sample_every`` integration steps after
    ``burn_in`` steps. Parents of ``x_i`` are ``x_{i-2}, x_{i-1}, x_i,
    x_{i+1}`` (cyclic), all at lag 1; neighbours are coupled both ways so
    the truth graph is not single-direction.
    """
    if n_vars < 4:
        raise InvalidConfigError("Lorenz-96 needs n_vars >= 4")
    if not 0 < dt <= 0.1:
        raise InvalidConfigError("dt must lie in (0, 0.1]")
    if T < 50:
        raise InvalidConfigError("T must be >= 50")
    if sample_every < 1:
        raise InvalidConfigError("sample_every must be >= 1")

    rng = rng_for(seed, "lorenz96")
    x = forcing + rng.normal(0.0, 0.01, size=n_vars)
    out = np.empty((T, n_vars))
    steps = burn_in + T * sample_every
    k = 0
    for step in range(steps):
        x = rk4_step(x, dt, forcing)
        if not np.all(np.abs(x) <= DIVERGENCE_BOUND):
            raise IntegrationError(f"trajectory diverged at step {step}")
        if step >= burn_in and (step - burn_in) % sample_every == sample_every - 1:
            out[k] = x
            k += 1
    if noise_std > 0:
        out = out + rng.normal(0.0, noise_std, size=out.shape)

    edges = []
    for i in range(n_vars):
        for p in lorenz96_parents(n_vars, i):
            edges.append(LaggedEdge(p, i, 1))
    truth = GroundTruth(TemporalGraph(n_vars, edges, single_direction=False), has_lags)
    return MultivariateSeries(out.T, tuple(f"X{i}" for i in range(n_vars))), truth


def lorenz96_parents(n_vars: int, i: int) -> list[int]:
    return sorted({(i - 2) % n_vars, (i - 1) % n_vars, i, (i + 1) % n_vars})
