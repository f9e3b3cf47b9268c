"""Single-variable input clamping and the clamped-vs-baseline influence tensor."""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import MultivariateSeries
from .datagen import rng_for
from .errors import InvalidConfigError, InvalidInputError, ParseError, ProbeError

CLAMP_MODES = ("max", "zero", "fixed")
_HEADER = struct.Struct("<4q")


@dataclass(frozen=True)
class ClampPolicy:
    """How the clamp value x* is chosen and where it is applied.

    ``max`` uses the row maximum of the clamped variable, ``zero`` uses 0
    and ``fixed`` uses ``value``.
    """

    mode: str = "max"
    value: float | None = None
    t0: int = 0

    def __post_init__(self):
        if self.mode not in CLAMP_MODES:
            raise InvalidConfigError(f"clamp mode must be one of {CLAMP_MODES}, got {self.mode!r}")
        if self.mode == "fixed" and (self.value is None or not math.isfinite(self.value)):
            raise InvalidConfigError("fixed clamp needs a finite value")
        if self.t0 < 0:
            raise InvalidConfigError("t0 must be >= 0")

    def resolve(self, series: MultivariateSeries, i: int) -> float:
        if self.mode == "max":
            return float(series.values[i].max())
        if self.mode == "zero":
            return 0.0
        return float(self.value)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "value": self.value, "t0": self.t0}


@dataclass(frozen=True, eq=False)
class InfluenceTensor:
    """Non-negative ``S[i, j, t]``: response of target j at time t to clamping i.

    Entries before ``valid_from`` are zero. Lags are read relative to ``t0``.
    """

    values: np.ndarray
    valid_from: int = 0
    t0: int = 0

    def __post_init__(self):
        s = np.array(self.values, dtype=np.float64)
        if s.ndim != 3 or s.shape[0] != s.shape[1]:
            raise InvalidInputError(f"influence tensor must be N x N x T, got {s.shape}")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise InvalidInputError("influence tensor entries must be finite and non-negative")
        if not 0 <= self.valid_from <= s.shape[2]:
            raise InvalidInputError("valid_from outside the time axis")
        if np.any(s[:, :, : self.valid_from] != 0):
            raise InvalidInputError("entries before valid_from must be zero")
        s.setflags(write=False)
        object.__setattr__(self, "values", s)

    @property
    def n_vars(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[2]

    def __eq__(self, other):
        if not isinstance(other, InfluenceTensor):
            return NotImplemented
        return (
            self.valid_from == other.valid_from
            and self.t0 == other.t0
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def clamp_input(series: MultivariateSeries, i: int, policy: ClampPolicy) -> MultivariateSeries:
    """Copy of ``series`` with entry ``(i, t0)`` set to the policy's x*."""
    if not 0 <= i < series.n_vars:
        raise InvalidInputError(f"variable {i} out of range for N={series.n_vars}")
    if policy.t0 >= series.length:
        raise InvalidInputError(f"t0={policy.t0} outside series of length {series.length}")
    values = series.values.copy()
    values[i, policy.t0] = policy.resolve(series, i)
    return series.replace_values(values)


def influence_tensor(pred, series: MultivariateSeries, policy: ClampPolicy = ClampPolicy(), workers: int = 1) -> InfluenceTensor:
    """Probe ``pred`` with one clamp per variable; N + 1 predictor calls."""
    n = series.n_vars
    baseline = pred.predict_series(series)

    def probe(i):
        try:
            clamped = pred.predict_series(clamp_input(series, i, policy))
        except Exception as exc:
            raise ProbeError(str(exc), i) from exc
        return np.abs(clamped - baseline)

    s = np.zeros((n, n, series.length))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i, block in enumerate(pool.map(probe, range(n))):
                s[i] = block
    else:
        for i in range(n):
            s[i] = probe(i)
    # the clamp cannot reach predictions made before it
    s[:, :, : policy.t0] = 0.0
    return InfluenceTensor(s, valid_from=policy.t0, t0=policy.t0)


def permute_tensor(S: InfluenceTensor, seed: int) -> InfluenceTensor:
    """Shuffle the valid-region entries, keeping their multiset of values."""
    vals = S.values.copy()
    region = vals[:, :, S.valid_from:]
    flat = region.ravel()
    shuffled = rng_for(seed, "permute").permutation(flat)
    vals[:, :, S.valid_from:] = shuffled.reshape(region.shape)
    return InfluenceTensor(vals, S.valid_from, S.t0)


def save_tensor(S: InfluenceTensor, path, policy: ClampPolicy | None = None, x_star=None) -> Path:
    """Write the binary tensor and a ``.json`` sidecar; returns the sidecar path.

    Layout: four little-endian int64 (N, N, T, valid_from) then the values
    as little-endian float64 in ``[i][j][t]`` order.
    """
    path = Path(path)
    n, _, t_len = S.values.shape
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(n, n, t_len, S.valid_from))
        fh.write(np.ascontiguousarray(S.values, dtype="<f8").tobytes())
    meta = {
        "format": "causal-insight-influence",
        "version": 1,
        "shape": [n, n, t_len],
        "valid_from": S.valid_from,
        "t0": S.t0,
        "policy": policy.to_dict() if policy else None,
        "x_star": list(x_star) if x_star is not None else None,
    }
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return sidecar


def load_tensor(path) -> InfluenceTensor:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError(f"{path}: truncated header")
    n1, n2, t_len, valid_from = _HEADER.unpack_from(raw)
    expected = _HEADER.size + 8 * n1 * n2 * t_len
    if n1 != n2 or n1 < 1 or len(raw) != expected:
        raise ParseError(f"{path}: header ({n1}, {n2}, {t_len}) does not match {len(raw)} bytes")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n1, n2, t_len)
    t0 = valid_from
    sidecar = path.with_name(path.name + ".json")
    if sidecar.exists():
        t0 = json.loads(sidecar.read_text(encoding="utf-8")).get("t0", valid_from)
    return InfluenceTensor(values.astype(np.float64), int(valid_from), int(t0))
