import numpy as np
import pytest
from scipy.integrate import solve_ivp

from causal_insight.datagen import (
    MOTIF_TOPOLOGY,
    MotifKind,
    companion_spectral_radius,
    gen_linear_var,
    gen_lorenz96,
    gen_motif,
    load_truth_json,
    lorenz96_rhs,
    motif_coefficients,
    random_var_coefficients,
    rk4_step,
    save_truth_json,
)
from causal_insight.errors import IntegrationError, InvalidConfigError, StabilityError


def ols_with_se(x, max_lag):
    """Regress every x[j, t] on x[:, t-1..t-max_lag]; returns coef and SE as [lag, src, dst]."""
    n, t_len = x.shape
    design = np.hstack([x[:, max_lag - lag: t_len - lag].T for lag in range(1, max_lag + 1)])
    y = x[:, max_lag:].T
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta
    dof = design.shape[0] - design.shape[1]
    sigma2 = (resid ** 2).sum(axis=0) / dof
    xtx_inv_diag = np.diag(np.linalg.inv(design.T @ design))
    se = np.sqrt(np.outer(xtx_inv_diag, sigma2))
    coef = np.zeros((max_lag + 1, n, n))
    err = np.full((max_lag + 1, n, n), np.inf)
    coef[1:] = beta.reshape(max_lag, n, n)
    err[1:] = se.reshape(max_lag, n, n)
    return coef, err


def test_fork_lags_all_one_topology():
    _, truth = gen_motif("fork", 500, lag_assignment=[1, 1], seed=0)
    cross = {(e.src, e.dst, e.lag) for e in truth.graph.edges if e.src != e.dst}
    selfs = {(e.src, e.lag) for e in truth.graph.edges if e.src == e.dst}
    assert cross == {(0, 1, 1), (0, 2, 1)}
    assert selfs == {(0, 1), (1, 1), (2, 1)}
    assert truth.has_lags


def test_diamond_topology():
    _, truth = gen_motif(MotifKind.DIAMOND, 500, seed=4)
    cross = {e.pair for e in truth.graph.edges if e.src != e.dst}
    assert cross == {(0, 1), (0, 2), (1, 3), (2, 3)}


@pytest.mark.parametrize("kind", list(MotifKind))
@pytest.mark.parametrize("seed", [0, 1])
def test_motif_ols_recovers_generating_coefficients(kind, seed):
    series, truth = gen_motif(kind, 2000, seed=seed)
    coef = motif_coefficients(kind, 2000, seed=seed)
    est, se = ols_with_se(series.values, 3)
    full = np.zeros_like(est)
    full[: coef.shape[0]] = coef
    z = np.abs(est[1:] - full[1:]) / se[1:]
    assert z.max() < 4.0, z.max()
    assert np.mean(z < 3.0) >= 0.95
    # the dominant lag of every true edge is its truth lag
    for e in truth.graph.edges:
        assert int(np.argmax(np.abs(est[1:, e.src, e.dst]))) + 1 == e.lag


def test_motif_deterministic_and_seed_sensitive():
    a, _ = gen_motif("v", 300, seed=7)
    b, _ = gen_motif("v", 300, seed=7)
    c, _ = gen_motif("v", 300, seed=8)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_motif_errors():
    with pytest.raises(InvalidConfigError):
        gen_motif("fork", 20, lag_assignment=[1, 25])
    with pytest.raises(InvalidConfigError):
        gen_motif("fork", 25, lag_assignment=[1, 3])
    with pytest.raises(InvalidConfigError):
        gen_motif("fork", 100, noise_std=0.0)
    with pytest.raises(ValueError):
        gen_motif("chain", 100)


def test_all_four_motifs_exist():
    assert len(MotifKind) == 4
    assert set(MOTIF_TOPOLOGY) == set(MotifKind)


def test_var_single_entry():
    coef = np.zeros((3, 2, 2))
    coef[2, 0, 1] = 0.8
    _, truth = gen_linear_var(coef, 200, seed=0)
    assert {(e.src, e.dst, e.lag) for e in truth.graph.edges} == {(0, 1, 2)}


def test_var_all_zero_is_pure_noise():
    series, truth = gen_linear_var(np.zeros((2, 3, 3)), 5000, noise_std=0.3, seed=1)
    assert truth.graph.m == 0
    np.testing.assert_allclose(series.values.std(axis=1), 0.3, rtol=0.05)
    lag1 = [np.corrcoef(r[:-1], r[1:])[0, 1] for r in series.values]
    assert np.max(np.abs(lag1)) < 0.05


def test_var_unstable_rejected():
    coef = np.zeros((2, 2, 2))
    coef[1] = np.eye(2) * 1.05
    with pytest.raises(StabilityError):
        gen_linear_var(coef, 100)
    with pytest.raises(InvalidConfigError):
        gen_linear_var(np.ones((2, 2, 2)) * 0.1, 100)  # nonzero lag-0 slice


def test_companion_radius_matches_scalar_ar2():
    # x_t = a x_{t-1} + b x_{t-2}: roots of z^2 - a z - b
    a, b = 0.5, 0.3
    coef = np.zeros((3, 1, 1))
    coef[1, 0, 0], coef[2, 0, 0] = a, b
    expected = np.max(np.abs(np.roots([1.0, -a, -b])))
    assert companion_spectral_radius(coef) == pytest.approx(expected)


def test_var_cross_correlation_peaks_at_true_lag():
    coef = random_var_coefficients(5, 4, seed=11)
    series, truth = gen_linear_var(coef, 2000, noise_std=0.05, seed=11)
    x = series.values
    L = 4
    for e in truth.graph.edges:
        if e.src == e.dst:
            continue
        # strip the target's own AR term so the source's autocorrelation sets the peak
        r = x[e.dst, 1:] - coef[1, e.dst, e.dst] * x[e.dst, :-1]
        src = x[e.src, 1:]
        ccf = [abs(np.corrcoef(src[L - lag: len(r) - lag], r[L:])[0, 1]) for lag in range(1, L + 1)]
        assert int(np.argmax(ccf)) + 1 == e.lag


def test_random_var_coefficients_stable_and_sparse():
    coef = random_var_coefficients(10, 10, seed=3)
    assert companion_spectral_radius(coef) < 0.95
    cross = {(i, j) for lag in range(coef.shape[0]) for i in range(10) for j in range(10)
             if i != j and coef[lag, i, j] != 0}
    assert len(cross) == 10
    assert not any((j, i) in cross for i, j in cross)
    with pytest.raises(InvalidConfigError):
        random_var_coefficients(3, 4, seed=0)


def test_rk4_fourth_order_against_reference():
    x0 = 8.0 + np.random.default_rng(0).normal(0, 0.5, size=6)
    ref = solve_ivp(lambda t, y: lorenz96_rhs(y, 8.0), (0, 0.4), x0, rtol=1e-12, atol=1e-12,
                    method="DOP853").y[:, -1]
    errs = []
    for steps in (40, 80):
        x = x0.copy()
        for _ in range(steps):
            x = rk4_step(x, 0.4 / steps, 8.0)
        errs.append(np.abs(x - ref).max())
    assert errs[0] < 1e-4
    # halving dt cuts the error by ~2^4
    assert 10 < errs[0] / errs[1] < 24


def test_lorenz_shape_bounded_deterministic():
    a, truth = gen_lorenz96(10, 1000, seed=0)
    b, _ = gen_lorenz96(10, 1000, seed=0)
    c, _ = gen_lorenz96(10, 1000, seed=1)
    assert a.values.shape == (10, 1000)
    assert np.array_equal(a.values, b.values)
    assert np.abs(a.values).max() < 30
    # chaotic: a tiny change in the initial state decorrelates the trajectory
    assert np.abs(a.values[:, -100:] - c.values[:, -100:]).mean() > 1.0
    assert truth.graph.m == 40 and not truth.graph.single_direction


def test_lorenz_minimal_in_degree():
    _, truth = gen_lorenz96(4, 60, seed=0)
    assert all(len(p) == 4 for p in truth.graph.parents())
    assert {e.lag for e in truth.graph.edges} == {1}


def test_lorenz_errors():
    with pytest.raises(InvalidConfigError):
        gen_lorenz96(3, 100)
    with pytest.raises(InvalidConfigError):
        gen_lorenz96(5, 100, dt=0.2)
    with pytest.raises(InvalidConfigError):
        gen_lorenz96(5, 40)
    with pytest.raises(IntegrationError):
        gen_lorenz96(5, 100, forcing=1e8, dt=0.1, burn_in=10)


def test_truth_json_round_trip(tmp_path):
    _, truth = gen_lorenz96(5, 60, seed=0, has_lags=False)
    save_truth_json(truth, tmp_path / "t.json")
    assert load_truth_json(tmp_path / "t.json") == truth
