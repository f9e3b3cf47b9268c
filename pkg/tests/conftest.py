import numpy as np
import pytest

from causal_insight.core import MultivariateSeries, normalize_minmax
from causal_insight.datagen import gen_linear_var
from causal_insight.predictor import PredictorConfig, TrainedPredictor, train


def linear_predictor(weights, n_vars, window, input_mean=None):
    """Hand-built linear predictor; ``weights[dst]`` is a (n_vars, window) array."""
    cfg = PredictorConfig(backbone="linear", window=window)
    w = np.zeros((n_vars, 1, n_vars * window))
    for j in range(n_vars):
        w[j, 0] = np.asarray(weights[j], dtype=float).reshape(-1)
    b = np.zeros((n_vars, 1))
    mean = np.zeros(n_vars) if input_mean is None else np.asarray(input_mean, dtype=float)
    return TrainedPredictor(cfg, n_vars, mean, [(w, b)])


@pytest.fixture(scope="session")
def var3():
    """3-variable VAR: 0 -> 1 at lag 1, 1 -> 2 at lag 2, AR(1) self terms."""
    coef = np.zeros((3, 3, 3))
    for i in range(3):
        coef[1, i, i] = 0.5
    coef[1, 0, 1] = 0.7
    coef[2, 1, 2] = -0.6
    series, truth = gen_linear_var(coef, T=1500, noise_std=0.05, seed=3)
    return coef, normalize_minmax(series), truth


@pytest.fixture(scope="session")
def var3_linear(var3):
    _, series, _ = var3
    return train(series, PredictorConfig(backbone="linear", window=3, seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_series():
    return MultivariateSeries(np.array([[0.1, 0.4, 0.2, 0.9, 0.5, 0.3], [0.7, 0.2, 0.6, 0.1, 0.8, 0.4]]))


# (criterion id, passed, detail) lines filled in by test_acceptance.py
ACCEPTANCE = []


def record(criterion, passed, detail):
    ACCEPTANCE.append((criterion, bool(passed), detail))
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {criterion}: {detail}")
