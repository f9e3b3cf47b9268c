import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causal_insight.core import MultivariateSeries
from causal_insight.errors import InvalidConfigError, InvalidInputError, ParseError, ProbeError
from causal_insight.probing import (
    ClampPolicy,
    InfluenceTensor,
    clamp_input,
    influence_tensor,
    load_tensor,
    permute_tensor,
    save_tensor,
)

from conftest import linear_predictor


def test_clamp_fixed_single_entry():
    x = np.array([[0.5, 0.6, 0.7], [0.2, 0.3, 0.4]])
    out = clamp_input(MultivariateSeries(x), 1, ClampPolicy("fixed", 1.0))
    expected = x.copy()
    expected[1, 0] = 1.0
    np.testing.assert_array_equal(out.values, expected)


def test_clamp_max_policy():
    x = np.array([[0.1, 0.9, 0.4]])
    out = clamp_input(MultivariateSeries(x), 0, ClampPolicy("max"))
    assert out.values[0, 0] == 0.9


def test_clamp_zero_policy_and_t0():
    x = np.array([[0.1, 0.9, 0.4]])
    out = clamp_input(MultivariateSeries(x), 0, ClampPolicy("zero", t0=2))
    assert out.values.tolist() == [[0.1, 0.9, 0.0]]


def test_noop_clamp_identical():
    s = MultivariateSeries(np.array([[0.3, 0.1], [0.2, 0.8]]))
    assert clamp_input(s, 0, ClampPolicy("fixed", 0.3)) == s


def test_clamp_errors():
    s = MultivariateSeries(np.zeros((2, 4)))
    with pytest.raises(InvalidInputError):
        clamp_input(s, 2, ClampPolicy())
    with pytest.raises(InvalidInputError):
        clamp_input(s, 0, ClampPolicy(t0=4))
    with pytest.raises(InvalidConfigError):
        ClampPolicy("fixed", float("inf"))
    with pytest.raises(InvalidConfigError):
        ClampPolicy("fixed")
    with pytest.raises(InvalidConfigError):
        ClampPolicy("median")


def _one_edge_predictor(n, k, i, j, lag, a):
    w = [np.zeros((n, k)) for _ in range(n)]
    w[j][i, lag] = a
    return linear_predictor(w, n, k, input_mean=np.full(n, 0.5))


@pytest.mark.parametrize("lag,t0", [(1, 0), (2, 0), (1, 3)])
def test_linear_influence_formula(rng, lag, t0):
    n, k, a = 3, 4, -0.7
    pred = _one_edge_predictor(n, k, 0, 2, lag, a)
    series = MultivariateSeries(rng.uniform(size=(n, 20)))
    policy = ClampPolicy("fixed", 0.95, t0=t0)
    S = influence_tensor(pred, series, policy)
    expected = np.zeros((n, n, 20))
    expected[0, 2, t0 + lag] = abs(a * (0.95 - series.values[0, t0]))
    np.testing.assert_allclose(S.values, expected, atol=1e-15)
    assert S.valid_from == t0 and S.t0 == t0


def test_ignored_variable_has_no_response(rng):
    pred = _one_edge_predictor(3, 3, 0, 1, 1, 0.9)
    S = influence_tensor(pred, MultivariateSeries(rng.uniform(size=(3, 15))))
    assert np.all(S.values[:, 0] == 0)
    assert np.all(S.values[:, 2] == 0)
    assert np.all(S.values[1:] == 0)


def test_noop_clamp_gives_zero_tensor(rng):
    from conftest import linear_predictor as lp
    w = [rng.normal(size=(3, 3)) for _ in range(3)]
    pred = lp(w, 3, 3)
    x = rng.uniform(size=(3, 12))
    x[:, 0] = 0.4
    S = influence_tensor(pred, MultivariateSeries(x), ClampPolicy("fixed", 0.4))
    assert not S.values.any()


def test_forward_passes_n_plus_one(rng):
    for n in (1, 2, 5):
        pred = linear_predictor([rng.normal(size=(n, 3)) for _ in range(n)], n, 3)
        influence_tensor(pred, MultivariateSeries(rng.uniform(size=(n, 10))))
        assert pred.forward_passes == n + 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_linear_superposition_and_doubling(seed):
    rng = np.random.default_rng(seed)
    n, k = 3, 3
    w = [rng.normal(size=(n, k)) * (rng.uniform(size=(n, k)) < 0.5) for _ in range(n)]
    pred = linear_predictor(w, n, k, input_mean=rng.uniform(size=n))
    x = rng.uniform(0.2, 0.6, size=(n, 14))
    policy = ClampPolicy("fixed", 0.9)
    S = influence_tensor(pred, MultivariateSeries(x), policy).values

    # other variables' values at t0 do not matter
    y = x.copy()
    y[:, 0] = rng.uniform(0.2, 0.6, size=n)
    for i in range(n):
        z = y.copy()
        z[i, 0] = x[i, 0]
        Si = influence_tensor(pred, MultivariateSeries(z), policy).values[i]
        np.testing.assert_allclose(Si, S[i], atol=1e-12)

    # doubling |x* - X[i, t0]| doubles the response of every target
    for i in range(n):
        x2 = policy.value - 2 * (policy.value - x[i, 0])
        z = x.copy()
        z[i, 0] = policy.value
        S2 = influence_tensor(pred, MultivariateSeries(z), ClampPolicy("fixed", x2)).values[i]
        np.testing.assert_allclose(S2, 2 * S[i], atol=1e-12)

    # no linear path from i to j: no response at all
    for i in range(n):
        for j in range(n):
            if not np.any(w[j][i, 1 if i == j else 0:]):
                assert not S[i, j].any()


def test_workers_byte_identical(var3, var3_linear):
    _, series, _ = var3
    a = influence_tensor(var3_linear, series, workers=1)
    b = influence_tensor(var3_linear, series, workers=3)
    assert a.values.tobytes() == b.values.tobytes()


class _Flaky:
    def __init__(self, bad):
        self.bad, self.calls = bad, 0

    def predict_series(self, series):
        self.calls += 1
        if self.calls == self.bad + 2:
            raise RuntimeError("boom")
        return np.zeros(series.values.shape)


def test_probe_error_names_variable():
    with pytest.raises(ProbeError) as exc:
        influence_tensor(_Flaky(1), MultivariateSeries(np.zeros((3, 5))))
    assert exc.value.variable == 1


def test_tensor_invariants():
    with pytest.raises(InvalidInputError):
        InfluenceTensor(-np.ones((2, 2, 3)))
    with pytest.raises(InvalidInputError):
        InfluenceTensor(np.ones((2, 2, 3)), valid_from=1)
    with pytest.raises(InvalidInputError):
        InfluenceTensor(np.ones((2, 3, 3)))


def _rand_tensor(rng, n=3, t=9, valid_from=2):
    v = rng.uniform(size=(n, n, t))
    v[:, :, :valid_from] = 0
    return InfluenceTensor(v, valid_from, valid_from)


def test_permute_preserves_multiset_and_prefix(rng):
    S = _rand_tensor(rng)
    P = permute_tensor(S, 3)
    assert np.array_equal(np.sort(P.values.ravel()), np.sort(S.values.ravel()))
    assert not P.values[:, :, :2].any()
    assert not np.array_equal(P.values, S.values)


def test_permute_deterministic(rng):
    S = _rand_tensor(rng)
    assert permute_tensor(S, 9) == permute_tensor(S, 9)
    assert permute_tensor(S, 9) != permute_tensor(S, 10)


def test_permute_constant_tensor_unchanged():
    S = InfluenceTensor(np.full((2, 2, 5), 0.25))
    assert permute_tensor(S, 1) == S


def test_tensor_binary_round_trip(tmp_path, rng):
    S = _rand_tensor(rng)
    sidecar = save_tensor(S, tmp_path / "s.bin", ClampPolicy("fixed", 0.5), [0.5, 0.5, 0.5])
    raw = (tmp_path / "s.bin").read_bytes()
    assert struct.unpack_from("<4q", raw) == (3, 3, 9, 2)
    assert len(raw) == 32 + 8 * 3 * 3 * 9
    assert sidecar.exists()
    assert load_tensor(tmp_path / "s.bin") == S


def test_tensor_truncated_file(tmp_path, rng):
    save_tensor(_rand_tensor(rng), tmp_path / "s.bin")
    raw = (tmp_path / "s.bin").read_bytes()
    (tmp_path / "s.bin").write_bytes(raw[:-8])
    with pytest.raises(ParseError):
        load_tensor(tmp_path / "s.bin")
