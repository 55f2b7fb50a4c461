import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mtgbn.errors import DimensionMismatch
from mtgbn.evalkit import (
    ConfusionCounts,
    MetricRow,
    adjacency_confusion,
    arrowhead_confusion,
    average_rows,
    connection_counts,
    degree_table,
    degree_table_rows,
    metric_table_rows,
    metrics,
    proportion_test,
    to_aligned,
    to_csv,
)
from mtgbn.graph import Dag, UGraph, moralize
from mtgbn.simgen import random_dag

N4 = tuple("ABCD")


def ug(edges, names=N4):
    return UGraph(names, frozenset(edges))


def random_ugraph(p, rng):
    return UGraph(tuple(f"X{i}" for i in range(p)), frozenset(e for e in itertools.combinations(range(p), 2) if rng.uniform() < 0.4))


# --- confusion counts ------------------------------------------------------------------------------


def test_adjacency_identical_and_empty():
    truth = ug({(0, 1), (1, 2), (2, 3)})
    assert adjacency_confusion(truth, truth) == ConfusionCounts(3, 0, 0, 3)
    assert adjacency_confusion(ug(set()), truth) == ConfusionCounts(0, 0, 3, 3)


@pytest.mark.parametrize("seed", range(10))
def test_adjacency_brute_force(seed):
    rng = np.random.default_rng(seed)
    a, b = random_ugraph(6, rng), random_ugraph(6, rng)
    tp = fp = fn = tn = 0
    for i, j in itertools.combinations(range(6), 2):
        x, y = a.has_edge(i, j), b.has_edge(i, j)
        tp += x and y
        fp += x and not y
        fn += y and not x
        tn += not x and not y
    assert adjacency_confusion(a, b) == ConfusionCounts(tp, fp, fn, tn)


def test_adjacency_of_dag_uses_its_moral_graph():
    d = Dag(("a", "b", "c"), frozenset({(0, 2), (1, 2)}))
    assert adjacency_confusion(d, moralize(d)).fp == 0
    assert adjacency_confusion(d, moralize(d)).tp == 3


def test_arrowhead_examples():
    d = Dag(N4, frozenset({(0, 1), (1, 2)}))
    c = arrowhead_confusion(d, d)
    assert (c.fp, c.fn, c.tp, c.total) == (0, 0, 2, 12)
    rev = Dag(N4, frozenset({(1, 0), (1, 2)}))
    c = arrowhead_confusion(rev, d)
    assert (c.fp, c.fn) == (1, 1)


@pytest.mark.parametrize("seed", range(10))
def test_arrowhead_brute_force(seed):
    rng = np.random.default_rng(seed)
    a, b = random_dag(6, 6, rng), random_dag(6, 7, rng)
    counts = [0, 0, 0, 0]
    for i, j in itertools.permutations(range(6), 2):
        x, y = (i, j) in a.edges, (i, j) in b.edges
        counts[0 if x and y else 1 if x else 2 if y else 3] += 1
    assert arrowhead_confusion(a, b) == ConfusionCounts(*counts)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        adjacency_confusion(ug(set()), UGraph(("a", "b"), frozenset()))
    with pytest.raises(DimensionMismatch):
        arrowhead_confusion(Dag.empty(3), Dag.empty(4))


@given(st.integers(0, 2**32 - 1))
def test_identity_gives_zero_errors(seed):
    rng = np.random.default_rng(seed)
    d = random_dag(7, int(rng.integers(0, 15)), rng)
    assert metrics(arrowhead_confusion(d, d)).error == 0
    assert metrics(adjacency_confusion(d, d)).error == 0
    g = random_ugraph(7, rng)
    c = adjacency_confusion(g, g)
    assert c.fp == c.fn == 0


# --- metrics --------------------------------------------------------------------------------------


def test_metrics_arithmetic():
    r = metrics(ConfusionCounts(3, 1, 2, 9))
    assert r.error == 0.2
    assert r.precision == 0.75
    assert r.recall == 0.6
    assert r.fscore == pytest.approx(2 / 3, abs=1e-4)
    assert r.edge_distance == 3


def test_metrics_perfect_and_all_wrong():
    assert metrics(ConfusionCounts(3, 0, 0, 3)) == MetricRow(0.0, 1.0, 1.0, 1.0, 0)
    complete = UGraph(tuple("abc"), frozenset({(0, 1), (0, 2), (1, 2)}))
    empty = UGraph(tuple("abc"), frozenset())
    assert metrics(adjacency_confusion(complete, empty)).error == 1.0


def test_metrics_undefined_precision():
    r = metrics(ConfusionCounts(0, 0, 2, 4))
    assert r.precision is None and r.fscore is None
    assert r.recall == 0.0
    with pytest.raises(ValueError):
        metrics(ConfusionCounts(0, 0, 0, 0))


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_error_complements_accuracy(tp, fp, fn, tn):
    c = ConfusionCounts(tp, fp, fn, tn)
    if c.total == 0:
        return
    r = metrics(c)
    assert r.error + (tp + tn) / c.total == pytest.approx(1.0, abs=1e-12)
    if r.precision is not None and r.recall is not None and r.precision + r.recall > 0:
        assert r.fscore == pytest.approx(2 * r.precision * r.recall / (r.precision + r.recall))


def test_average_rows_skips_missing():
    rows = [MetricRow(0.1, None, 0.0, None, 2), MetricRow(0.3, 0.5, 1.0, 2 / 3, 4)]
    avg = average_rows(rows)
    assert avg["error"] == pytest.approx(0.2)
    assert avg["precision"] == 0.5
    assert avg["edge_distance"] == 3


# --- degrees and connection counts -----------------------------------------------------------------


def test_degree_table_single_edge():
    t = degree_table([Dag(("A", "B"), frozenset({(0, 1)}))])
    assert t.rows() == [("A", 1, 0, 1), ("B", 1, 1, 0)]
    assert t.grand_total == 2
    assert degree_table_rows(t)[0] == ["node", "total", "in", "out"]


def test_degree_table_copies_scale():
    d = random_dag(6, 8, np.random.default_rng(0))
    one, three = degree_table([d]), degree_table([d] * 3)
    assert three.in_degree == tuple(3 * x for x in one.in_degree)
    assert three.out_degree == tuple(3 * x for x in one.out_degree)


def test_connection_counts():
    d = Dag(("A", "B", "C"), frozenset({(0, 1)}))
    c = connection_counts([d, d, d])
    assert c[0, 1] == 3 and c.sum() == 3
    a = Dag(("A", "B", "C"), frozenset({(0, 1)}))
    b = Dag(("A", "B", "C"), frozenset({(1, 2), (0, 2)}))
    assert connection_counts([a, b]).max() <= 1


@given(st.integers(0, 2**32 - 1))
def test_connection_counts_double_counting(seed):
    rng = np.random.default_rng(seed)
    dags = [random_dag(6, int(rng.integers(0, 10)), rng, node_names=tuple("abcdef")) for _ in range(4)]
    c = connection_counts(dags)
    assert c.sum() == sum(len(d.edges) for d in dags)
    assert c.min() >= 0 and c.max() <= 4


# --- proportion test --------------------------------------------------------------------------------


def pooled_z_oracle(k1, n1, k2, n2):
    mpmath.mp.dps = 30
    p1, p2 = mpmath.mpf(k1) / n1, mpmath.mpf(k2) / n2
    pool = mpmath.mpf(k1 + k2) / (n1 + n2)
    z = (p1 - p2) / mpmath.sqrt(pool * (1 - pool) * (mpmath.mpf(1) / n1 + mpmath.mpf(1) / n2))
    return float(z), float(mpmath.ncdf(-z))


def test_proportion_equal_groups():
    r = proportion_test(5, 10, 5, 10)
    assert r.z == 0 and r.pvalue == 0.5


def test_proportion_reference_case():
    r = proportion_test(12, 15, 4, 15)
    z, p = pooled_z_oracle(12, 15, 4, 15)
    assert r.z == pytest.approx(z, abs=1e-12)
    assert r.pvalue == pytest.approx(p, rel=1e-10)
    assert abs(r.z - 2.93) < 1e-2
    assert abs(r.pvalue - 0.0017) < 1e-3


def test_proportion_extreme():
    r = proportion_test(15, 15, 0, 15)
    assert r.pvalue < 1e-6
    assert not r.degenerate


def test_proportion_degenerate():
    assert proportion_test(0, 10, 0, 12).degenerate
    assert proportion_test(0, 10, 0, 12).pvalue == 1.0
    assert proportion_test(10, 10, 12, 12).pvalue == 1.0
    with pytest.raises(ValueError):
        proportion_test(3, 2, 0, 1)


@given(st.integers(1, 40), st.integers(1, 40), st.data())
def test_proportion_antisymmetric(n1, n2, data):
    k1 = data.draw(st.integers(0, n1))
    k2 = data.draw(st.integers(0, n2))
    a, b = proportion_test(k1, n1, k2, n2), proportion_test(k2, n2, k1, n1)
    if not a.degenerate and a.z != 0:
        assert a.pvalue + b.pvalue == pytest.approx(1.0, abs=1e-12)


# --- tables ---------------------------------------------------------------------------------------


def test_metric_tables():
    rows = [metrics(ConfusionCounts(3, 1, 2, 9)), metrics(ConfusionCounts(0, 0, 2, 4))]
    table = metric_table_rows(rows, ["01", "02"])
    csv = to_csv(table)
    assert csv.splitlines()[0] == "task,error,precision,recall,fscore,edge_distance"
    assert csv.splitlines()[1] == "01,0.2,0.75,0.6,0.666667,3"
    assert csv.splitlines()[2] == "02,0.333333,,0,,2"
    text = to_aligned(table).splitlines()
    assert text[-1].startswith("mean")
