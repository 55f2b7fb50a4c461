"""Structure-recovery metrics, degree summaries and the two-sample proportion test."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import DimensionMismatch
from .graph import Dag, UGraph, moralize


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricRow:
    error: float
    precision: float | None
    recall: float | None
    fscore: float | None
    edge_distance: int


def _as_undirected(g: UGraph | Dag) -> UGraph:
    # a learned DAG is compared through its moral graph, the undirected
    # graph with the same conditional independences
    return moralize(g) if isinstance(g, Dag) else g


def adjacency_confusion(learned: UGraph | Dag, truth: UGraph | Dag) -> ConfusionCounts:
    """Counts over all unordered node pairs, ignoring orientation."""
    a, b = _as_undirected(learned), _as_undirected(truth)
    if a.p != b.p:
        raise DimensionMismatch(f"graphs have {a.p} and {b.p} nodes")
    la, lb = a.edges, b.edges
    tp = len(la & lb)
    fp = len(la - lb)
    fn = len(lb - la)
    tn = a.p * (a.p - 1) // 2 - tp - fp - fn
    return ConfusionCounts(tp, fp, fn, tn)


def arrowhead_confusion(learned: Dag, truth: Dag) -> ConfusionCounts:
    """Counts over all ordered node pairs, so orientation matters."""
    if learned.p != truth.p:
        raise DimensionMismatch(f"graphs have {learned.p} and {truth.p} nodes")
    la, lb = learned.edges, truth.edges
    tp = len(la & lb)
    fp = len(la - lb)
    fn = len(lb - la)
    tn = learned.p * (learned.p - 1) - tp - fp - fn
    return ConfusionCounts(tp, fp, fn, tn)


def metrics(c: ConfusionCounts) -> MetricRow:
    """Error rate, precision, recall, F-score and edge distance; undefined ratios are ``None``."""
    if c.total <= 0:
        raise ValueError("no evaluated positions")
    error = (c.fp + c.fn) / c.total
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else None
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else None
    if precision is None or recall is None:
        fscore = None
    elif precision + recall == 0:
        fscore = 0.0
    else:
        fscore = 2.0 * precision * recall / (precision + recall)
    return MetricRow(error, precision, recall, fscore, c.fp + c.fn)


def average_rows(rows: Sequence[MetricRow]) -> dict[str, float | None]:
    """Column means; absent entries are skipped and an all-absent column stays ``None``."""
    out: dict[str, float | None] = {}
    for f in fields(MetricRow):
        vals = [getattr(r, f.name) for r in rows if getattr(r, f.name) is not None]
        out[f.name] = float(np.mean(vals)) if vals else None
    return out


def _check_common(dags: Sequence[Dag]) -> int:
    if not dags:
        raise ValueError("need at least one graph")
    ps = {d.p for d in dags}
    if len(ps) != 1:
        raise DimensionMismatch(f"graphs disagree on p: {sorted(ps)}")
    return ps.pop()


@dataclass(frozen=True)
class DegreeTable:
    node_names: tuple[str, ...]
    in_degree: tuple[int, ...]
    out_degree: tuple[int, ...]

    @property
    def total(self) -> tuple[int, ...]:
        return tuple(a + b for a, b in zip(self.in_degree, self.out_degree))

    @property
    def grand_total(self) -> int:
        return sum(self.total)

    def rows(self) -> list[tuple[str, int, int, int]]:
        return [(n, t, i, o) for n, t, i, o in zip(self.node_names, self.total, self.in_degree, self.out_degree)]


def degree_table(dags: Sequence[Dag]) -> DegreeTable:
    """Per-node in, out and total degree summed over tasks."""
    p = _check_common(dags)
    ins, outs = [0] * p, [0] * p
    for d in dags:
        for a, b in d.edges:
            outs[a] += 1
            ins[b] += 1
    return DegreeTable(dags[0].node_names, tuple(ins), tuple(outs))


def connection_counts(dags: Sequence[Dag]) -> np.ndarray:
    """``counts[a, b]`` is the number of tasks containing the edge ``a -> b``."""
    p = _check_common(dags)
    counts = np.zeros((p, p), dtype=int)
    for d in dags:
        for a, b in d.edges:
            counts[a, b] += 1
    return counts


@dataclass(frozen=True)
class ProportionTest:
    z: float
    pvalue: float
    degenerate: bool


def proportion_test(k1: int, n1: int, k2: int, n2: int) -> ProportionTest:
    """One-sided pooled two-sample z-test of ``k1/n1 > k2/n2`` (no continuity correction)."""
    for k, n in ((k1, n1), (k2, n2)):
        if n < 1 or not 0 <= k <= n:
            raise ValueError(f"invalid count {k} of {n}")
    p1, p2 = k1 / n1, k2 / n2
    pooled = (k1 + k2) / (n1 + n2)
    if pooled in (0.0, 1.0):
        return ProportionTest(0.0, 1.0 if p1 <= p2 else 0.0, True)
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    z = (p1 - p2) / se
    return ProportionTest(z, float(norm.sf(z)), False)


# ---------------------------------------------------------------------------
# reporting

METRIC_COLUMNS = ("error", "precision", "recall", "fscore", "edge_distance")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def metric_table_rows(rows: Sequence[MetricRow], labels: Iterable[str]) -> list[list[str]]:
    out = [["task", *METRIC_COLUMNS]]
    for label, r in zip(labels, rows):
        out.append([label] + [_fmt(getattr(r, c)) for c in METRIC_COLUMNS])
    avg = average_rows(rows)
    out.append(["mean"] + [_fmt(avg[c]) for c in METRIC_COLUMNS])
    return out


def to_csv(table: Sequence[Sequence[str]]) -> str:
    return "".join(",".join(str(c) for c in row) + "\n" for row in table)


def to_aligned(table: Sequence[Sequence[str]]) -> str:
    """Fixed-width columns, first column left-aligned and the rest right-aligned."""
    widths = [max(len(str(row[i])) for row in table) for i in range(len(table[0]))]
    lines = []
    for row in table:
        cells = [str(row[0]).ljust(widths[0])] + [str(c).rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def degree_table_rows(t: DegreeTable) -> list[list[str]]:
    out = [["node", "total", "in", "out"]]
    for n, tot, i, o in t.rows():
        out.append([n, str(tot), str(i), str(o)])
    out.append(["total", str(t.grand_total), str(sum(t.in_degree)), str(sum(t.out_degree))])
    return out
