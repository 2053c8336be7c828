"""Exploratory reports: edge existence, the naive existence predictor, and the
time-free label-aggregation upper bound.

All operations ignore timestamps on purpose: a query matches the graph when
its node pair (and edge type, when requested) appears among the edges,
regardless of when.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .graph import MultiGraph
from .metrics import AucResult, auc


@dataclass(frozen=True)
class ExistenceReport:
    total: int
    exist_in_graph: int
    exist_label1: int
    exist_label0: int
    notexist_label1: int
    notexist_label0: int
    with_etype: bool

    def as_rows(self):
        pct = lambda c: f"{100.0 * c / self.total:.2f}%" if self.total else "n/a"
        return [
            ("total", self.total, ""),
            ("exist_in_graph", self.exist_in_graph, pct(self.exist_in_graph)),
            ("exist_label1", self.exist_label1, pct(self.exist_label1)),
            ("exist_label0", self.exist_label0, pct(self.exist_label0)),
            ("notexist_label1", self.notexist_label1, pct(self.notexist_label1)),
            ("notexist_label0", self.notexist_label0, pct(self.notexist_label0)),
        ]


def _pair_key(u: int, v: int, directed: bool) -> tuple[int, int]:
    if directed or u <= v:
        return (u, v)
    return (v, u)


def edge_key_sets(g: MultiGraph) -> tuple[set, set]:
    """(pair set, (pair, etype) set) over the graph's edges, time ignored.

    Pairs are unordered for undirected graphs.
    """
    pairs = set()
    pair_types = set()
    src, dst, et = g.edge_src, g.edge_dst, g.edge_etype
    for i in range(g.num_edges):
        k = _pair_key(int(src[i]), int(dst[i]), g.directed)
        pairs.add(k)
        pair_types.add((k[0], k[1], int(et[i])))
    return pairs, pair_types


def existence_report(g: MultiGraph, queries, with_etype: bool) -> ExistenceReport:
    """Partition labeled queries by whether their edge already exists in g."""
    pairs, pair_types = edge_key_sets(g)
    counts = Counter()
    for q in queries:
        if q.label is None:
            raise ValueError("existence_report requires labeled queries")
        k = _pair_key(q.src, q.dst, g.directed)
        hit = (k[0], k[1], q.etype) in pair_types if with_etype else k in pairs
        counts[(hit, q.label)] += 1
    total = len(queries)
    return ExistenceReport(
        total=total,
        exist_in_graph=counts[(True, 1)] + counts[(True, 0)],
        exist_label1=counts[(True, 1)],
        exist_label0=counts[(True, 0)],
        notexist_label1=counts[(False, 1)],
        notexist_label0=counts[(False, 0)],
        with_etype=with_etype,
    )


def naive_predict(g: MultiGraph, queries, with_etype: bool) -> np.ndarray:
    """Score 1.0 iff the query's pair (and type, when requested) exists in g."""
    pairs, pair_types = edge_key_sets(g)
    out = np.zeros(len(queries), dtype=np.float64)
    for i, q in enumerate(queries):
        k = _pair_key(q.src, q.dst, g.directed)
        hit = (k[0], k[1], q.etype) in pair_types if with_etype else k in pairs
        out[i] = 1.0 if hit else 0.0
    return out


def label_aggregate_bound(train_labeled_pairs, queries, stat: str = "mode",
                          with_etype: bool = False, leave_self_out: bool = False,
                          directed: bool = False) -> AucResult:
    """Time-free performance bound from label aggregation over matching keys.

    Each query is predicted by the mode or mean of all pool labels sharing
    its (pair[, etype]) key; keys with no match predict 0.5.  Mode ties
    break toward 1.  With leave_self_out, one copy of the query's own label
    is removed from its key's pool before aggregating.  Returns the AUC of
    these predictions against the query labels.
    """
    if stat not in ("mode", "mean"):
        raise ValueError(f"stat must be 'mode' or 'mean', got {stat!r}")
    if not queries:
        raise ValueError("label_aggregate_bound requires a non-empty query list")

    def key_of(s, d, e):
        p = _pair_key(s, d, directed)
        return (p[0], p[1], e) if with_etype else p

    pool = Counter()
    for entry, label in train_labeled_pairs:
        s, d = entry[0], entry[1]
        e = entry[2] if len(entry) > 2 else 0
        if with_etype and len(entry) < 3:
            raise ValueError("with_etype requires (src, dst, etype) pool keys")
        pool[(key_of(s, d, e), int(label))] += 1

    preds = np.empty(len(queries), dtype=np.float64)
    labels = np.empty(len(queries), dtype=np.int64)
    for i, q in enumerate(queries):
        if q.label is None:
            raise ValueError("label_aggregate_bound requires labeled queries")
        k = key_of(q.src, q.dst, q.etype)
        c1 = pool[(k, 1)]
        c0 = pool[(k, 0)]
        if leave_self_out:
            if q.label == 1 and c1 > 0:
                c1 -= 1
            elif q.label == 0 and c0 > 0:
                c0 -= 1
        if c1 + c0 == 0:
            preds[i] = 0.5
        elif stat == "mean":
            preds[i] = c1 / (c1 + c0)
        else:
            preds[i] = 1.0 if c1 >= c0 else 0.0
        labels[i] = q.label
    return auc(preds, labels)


def pool_from_queries(queries) -> list:
    """Build an aggregation pool from a labeled query list (in-sample bound)."""
    out = []
    for q in queries:
        if q.label is None:
            raise ValueError("pool requires labeled queries")
        out.append(((q.src, q.dst, q.etype), q.label))
    return out


def format_report(report: ExistenceReport) -> str:
    rows = report.as_rows()
    width = max(len(r[0]) for r in rows)
    lines = [f"existence report (with_etype={report.with_etype})"]
    for name, count, pct in rows:
        lines.append(f"  {name:<{width}}  {count:>10d}  {pct:>8}")
    return "\n".join(lines)
