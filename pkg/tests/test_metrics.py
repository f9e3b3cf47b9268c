import json
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causal_insight.core import LaggedEdge, TemporalGraph, graph_from_pairs
from causal_insight.errors import InvalidInputError, UndefinedCorrelationError, UnsupportedMetricError
from causal_insight.metrics import correlation, evaluate, pod, shd, structural_scores, write_report


def g(n, *pairs, two_way=False):
    return graph_from_pairs(n, pairs, single_direction=not two_way)


def test_scores_identity():
    t = g(3, (0, 1), (1, 2), (2, 2))
    r = structural_scores(t, t)
    assert (r.precision, r.recall, r.f1, r.fdr, r.tpr) == (1.0, 1.0, 1.0, 0.0, 1.0)


def test_scores_empty_prediction():
    r = structural_scores(TemporalGraph(3), g(3, (0, 1)))
    assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)


def test_scores_half_example():
    r = structural_scores(g(3, (0, 1), (2, 1)), g(3, (0, 1), (1, 2)))
    assert (r.tp, r.fp, r.fn) == (1, 1, 1)
    assert (r.precision, r.recall, r.f1) == (0.5, 0.5, 0.5)


def test_scores_ignore_lag():
    a = graph_from_pairs(2, [(0, 1, 1)])
    b = graph_from_pairs(2, [(0, 1, 3)])
    assert structural_scores(a, b).f1 == 1.0


def test_size_mismatch():
    with pytest.raises(InvalidInputError):
        structural_scores(TemporalGraph(2), TemporalGraph(3))
    with pytest.raises(InvalidInputError):
        shd(TemporalGraph(2), TemporalGraph(3))


def test_shd_examples():
    assert shd(g(2, (1, 0)), g(2, (0, 1))) == 2
    t = g(3, (0, 1), (1, 2))
    assert shd(t, t) == 0
    assert shd(g(3, (0, 1)), t) == 1
    assert shd(g(2, (0, 0)), TemporalGraph(2)) == 1


def _brute_force_edit(a, b):
    """Fewest single-entry additions/deletions turning adjacency ``a`` into ``b`` (BFS)."""
    start, goal = tuple(a.ravel()), tuple(b.ravel())
    seen = {start}
    queue = deque([(start, 0)])
    while queue:
        state, d = queue.popleft()
        if state == goal:
            return d
        for k in range(len(state)):
            nxt = list(state)
            nxt[k] = not nxt[k]
            nxt = tuple(nxt)
            if nxt not in seen:
                seen.add(nxt)
                queue.append((nxt, d + 1))
    raise AssertionError("unreachable")


graphs2 = st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), max_size=9).map(
    lambda pairs: g(3, *set(pairs), two_way=True)
)


@settings(max_examples=30, deadline=None)
@given(graphs2, graphs2)
def test_shd_matches_brute_force(a, b):
    assert shd(a, b) == _brute_force_edit(a.adjacency(), b.adjacency())


@settings(max_examples=200, deadline=None)
@given(graphs2, graphs2, graphs2)
def test_shd_metric_properties(a, b, c):
    assert shd(a, b) == shd(b, a)
    assert shd(a, a) == 0
    assert shd(a, c) <= shd(a, b) + shd(b, c)


@settings(max_examples=200, deadline=None)
@given(graphs2, graphs2)
def test_score_identities(a, b):
    r = structural_scores(a, b)
    if r.precision + r.recall:
        assert r.f1 == pytest.approx(2 * r.precision * r.recall / (r.precision + r.recall))
    else:
        assert r.f1 == 0
    assert r.tpr == r.recall
    assert r.fdr == pytest.approx(1 - r.precision)
    for v in (r.precision, r.recall, r.f1, r.fdr):
        assert 0.0 <= v <= 1.0


def test_pod_examples():
    truth = graph_from_pairs(3, [(0, 1, 1), (1, 2, 2)])
    value, vacuous = pod(graph_from_pairs(3, [(0, 1, 1), (1, 2, 3)]), truth)
    assert value == 0.5 and not vacuous
    assert pod(truth, truth) == (1.0, False)
    assert pod(graph_from_pairs(3, [(2, 0, 1)]), truth) == (1.0, True)


def test_pod_ignores_false_positives():
    truth = graph_from_pairs(3, [(0, 1, 1), (1, 2, 2)])
    pred = graph_from_pairs(3, [(0, 1, 1), (1, 2, 3)])
    more = TemporalGraph(3, set(pred.edges) | {LaggedEdge(2, 0, 5), LaggedEdge(0, 0, 4)})
    assert pod(more, truth) == pod(pred, truth)


def test_pod_requires_lags():
    with pytest.raises(UnsupportedMetricError):
        pod(TemporalGraph(2), TemporalGraph(2), has_lags=False)


def test_evaluate_report_fields():
    truth = graph_from_pairs(3, [(0, 0, 1), (0, 1, 1), (1, 2, 2)])
    pred = graph_from_pairs(3, [(0, 0, 1), (1, 0, 1), (1, 2, 2)])
    r = evaluate(pred, truth)
    assert r.shd_raw == 2 and r.shd_normalized == pytest.approx(2 / 3)
    assert r.pod == 1.0 and not r.pod_vacuous
    no_self = evaluate(pred, truth, self_loops=False)
    assert (no_self.tp, no_self.fp, no_self.fn) == (1, 1, 1)
    assert evaluate(pred, truth, has_lags=False).pod is None


def test_evaluate_two_way_truth():
    truth = g(3, (0, 1), (1, 0), (1, 2), two_way=True)
    r = evaluate(g(3, (0, 1), (1, 2)), truth)
    assert (r.tp, r.fp, r.fn) == (2, 0, 1)


def test_correlation_examples():
    xs = [0.3, 1.2, -0.5, 2.0]
    assert correlation(xs, xs) == pytest.approx(1.0)
    assert correlation(xs, [-v for v in xs]) == pytest.approx(-1.0)
    assert correlation([1, 2, 3], [3, 5, 4], "spearman") == pytest.approx(0.5)


def test_spearman_average_ranks():
    # ties share the average rank: ranks x = [1, 2.5, 2.5, 4]
    xs, ys = [1, 2, 2, 3], [1, 2, 3, 4]
    rx = np.array([1, 2.5, 2.5, 4])
    expected = np.corrcoef(rx, ys)[0, 1]
    assert correlation(xs, ys, "spearman") == pytest.approx(expected)


def test_correlation_errors():
    with pytest.raises(UndefinedCorrelationError):
        correlation([1, 1, 1], [1, 2, 3])
    with pytest.raises(InvalidInputError):
        correlation([1, 2], [1, 2])
    with pytest.raises(InvalidInputError):
        correlation([1, 2, 3], [1, 2])
    with pytest.raises(InvalidInputError):
        correlation([1, 2, 3], [1, 2, 3], "kendall")


def test_write_report(tmp_path):
    r = evaluate(g(2, (0, 1)), g(2, (0, 1)))
    write_report(r, tmp_path / "r.csv", tmp_path / "r.json")
    header, row = (tmp_path / "r.csv").read_text().splitlines()
    assert header.startswith("precision,recall,f1")
    assert json.loads((tmp_path / "r.json").read_text())["f1"] == 1.0
