"""Deterministic planted-community multigraph generator with query splits.

Nodes are assigned to communities round-robin (node i -> community i mod K),
which keeps membership invisible to threshold splits on raw ids.  Each edge
is intra-community with probability proportional to intra_edge_prob times
the number of intra pairs (an SBM-style weighting), lands on a uniformly
random eligible pair, and draws its type from a community-biased
distribution.  Timestamps are uniform noise: the planted signal is purely
structural, which exercises the time-dropping path downstream.

Held-out edges become positive test queries; negatives reuse the train-set
shuffle (sources kept, target/type columns permuted) filtered against all
true triples.  Train and test edge instances are disjoint by construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graph import MultiGraph, build_graph_arrays
from .ingest import Query

# feasibility guard: refuse configs asking for more parallel edges than this
# per eligible pair on average
MAX_EDGE_MULTIPLICITY = 1000


@dataclass
class SynthConfig:
    num_nodes: int = 2000
    num_communities: int = 20
    num_edge_types: int = 8
    intra_edge_prob: float = 0.05
    inter_edge_prob: float = 0.0005
    type_affinity: float = 0.7     # mass on the community's preferred type
    num_edges_target: int = 100_000
    test_fraction: float = 0.05
    seed: int = 42
    ts_min: int = 0
    ts_max: int = 1_000_000

    def validate(self):
        if self.num_nodes < 2 or self.num_communities < 1 or self.num_edge_types < 1:
            raise ValueError("need >= 2 nodes, >= 1 community, >= 1 edge type")
        if not self.intra_edge_prob > self.inter_edge_prob:
            raise ValueError("intra_edge_prob must exceed inter_edge_prob (planted signal)")
        if self.inter_edge_prob < 0:
            raise ValueError("inter_edge_prob must be >= 0")
        if not 0.0 <= self.type_affinity <= 1.0:
            raise ValueError("type_affinity must be in [0, 1]")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in [0, 1)")
        if self.num_edges_target < 1:
            raise ValueError("num_edges_target must be >= 1")
        if self.ts_min > self.ts_max:
            raise ValueError("empty timestamp window")


@dataclass
class SynthData:
    graph: MultiGraph
    train_queries: list
    test_queries: list
    communities: np.ndarray
    # full edge columns before the train/test split, train first
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_etype: np.ndarray
    edge_ts: np.ndarray
    n_train_edges: int


def community_of(node, num_communities: int):
    return np.asarray(node) % num_communities


def _community_sizes(n, k):
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[: n % k] += 1
    return sizes


def _sample_intra_pairs(rng, sizes, count, num_communities):
    weights = sizes * (sizes - 1) / 2.0
    if weights.sum() <= 0:
        raise ValueError("no intra-community pairs available")
    comm = rng.choice(num_communities, size=count, p=weights / weights.sum())
    m = sizes[comm]
    i = rng.integers(0, m)
    j = rng.integers(0, m)
    clash = i == j
    while clash.any():
        j[clash] = rng.integers(0, m[clash])
        clash = i == j
    # member l of community c is node c + l * num_communities
    return comm + i * num_communities, comm + j * num_communities


def _sample_inter_pairs(rng, n, count, num_communities):
    u = rng.integers(0, n, size=count)
    v = rng.integers(0, n, size=count)
    clash = (u % num_communities) == (v % num_communities)
    while clash.any():
        v[clash] = rng.integers(0, n, size=int(clash.sum()))
        clash = (u % num_communities) == (v % num_communities)
    return u, v


def generate(cfg: SynthConfig) -> SynthData:
    """Planted graph plus labeled train/test query splits, all seed-determined."""
    cfg.validate()
    n, k = cfg.num_nodes, cfg.num_communities
    if k > n:
        raise ValueError("more communities than nodes")
    sizes = _community_sizes(n, k)
    n_intra_pairs = float((sizes * (sizes - 1) // 2).sum())
    n_all_pairs = n * (n - 1) / 2.0
    n_inter_pairs = n_all_pairs - n_intra_pairs

    w_intra = cfg.intra_edge_prob * n_intra_pairs
    w_inter = cfg.inter_edge_prob * n_inter_pairs
    if w_intra + w_inter <= 0:
        raise ValueError("edge probabilities leave no eligible pairs")
    eligible = n_intra_pairs + (n_inter_pairs if cfg.inter_edge_prob > 0 else 0)
    if cfg.num_edges_target > MAX_EDGE_MULTIPLICITY * eligible:
        raise ValueError(
            f"num_edges_target {cfg.num_edges_target} infeasible for "
            f"{int(eligible)} eligible pairs (cap {MAX_EDGE_MULTIPLICITY} per pair)")

    rng = np.random.default_rng(cfg.seed)
    m = cfg.num_edges_target
    intra = rng.random(m) < (w_intra / (w_intra + w_inter))
    n_intra = int(intra.sum())
    src = np.empty(m, dtype=np.int64)
    dst = np.empty(m, dtype=np.int64)
    su, sv = _sample_intra_pairs(rng, sizes, n_intra, k)
    src[intra], dst[intra] = su, sv
    if m - n_intra:
        iu, iv = _sample_inter_pairs(rng, n, m - n_intra, k)
        src[~intra], dst[~intra] = iu, iv

    # community-biased edge types: preferred type of the source's community
    preferred = community_of(src, k) % cfg.num_edge_types
    uniform = rng.integers(0, cfg.num_edge_types, size=m)
    etype = np.where(rng.random(m) < cfg.type_affinity, preferred, uniform)
    ts = rng.integers(cfg.ts_min, cfg.ts_max + 1, size=m)

    perm = rng.permutation(m)
    src, dst, etype, ts = src[perm], dst[perm], etype[perm], ts[perm]
    n_test = int(round(cfg.test_fraction * m))
    n_train = m - n_test
    if n_train < 1:
        raise ValueError("test_fraction leaves no training edges")

    graph = build_graph_arrays(src[:n_train], dst[:n_train], etype[:n_train],
                               ts[:n_train], num_nodes=n,
                               num_edge_types=cfg.num_edge_types, directed=False)

    all_triples = _triple_set(src, dst, etype, n)
    test_queries = _labeled_queries(rng, src[n_train:], dst[n_train:], etype[n_train:],
                                    all_triples, n, cfg)
    n_train_q = min(n_test, n_train) if n_test else 0
    train_queries = _labeled_queries(rng, src[:n_train_q], dst[:n_train_q],
                                     etype[:n_train_q], all_triples, n, cfg)
    return SynthData(graph=graph, train_queries=train_queries,
                     test_queries=test_queries,
                     communities=community_of(np.arange(n), k),
                     edge_src=src, edge_dst=dst, edge_etype=etype, edge_ts=ts,
                     n_train_edges=n_train)


def _triple_set(src, dst, et, n):
    a = np.minimum(src, dst)
    b = np.maximum(src, dst)
    return set(((a * n + b) * np.int64(1 << 20) + et).tolist())


def _labeled_queries(rng, pos_src, pos_dst, pos_et, all_triples, n, cfg) -> list:
    """Positives as-is; negatives by permuting (dst, etype) columns jointly,
    dropping any shuffled triple that is a true edge."""
    queries = []
    mq = len(pos_src)
    if mq == 0:
        return queries
    perm = rng.permutation(mq)
    neg_src = pos_src
    neg_dst = pos_dst[perm]
    neg_et = pos_et[perm]
    a = np.minimum(neg_src, neg_dst)
    b = np.maximum(neg_src, neg_dst)
    neg_keys = (a * n + b) * np.int64(1 << 20) + neg_et
    starts = rng.integers(cfg.ts_min, cfg.ts_max + 1, size=2 * mq)
    spans = rng.integers(0, max(1, (cfg.ts_max - cfg.ts_min) // 4 + 1), size=2 * mq)
    for i in range(mq):
        queries.append(Query(int(pos_src[i]), int(pos_dst[i]), int(pos_et[i]),
                             int(starts[i]), int(starts[i] + spans[i]), 1))
    for i in range(mq):
        if int(neg_keys[i]) in all_triples:
            continue
        queries.append(Query(int(neg_src[i]), int(neg_dst[i]), int(neg_et[i]),
                             int(starts[mq + i]), int(starts[mq + i] + spans[mq + i]), 0))
    return queries


def write_edges_csv(path, src, dst, etype, ts) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in zip(src.tolist(), dst.tolist(), etype.tolist(), ts.tolist()):
            f.write(f"{row[0]},{row[1]},{row[2]},{row[3]}\n")


def write_queries_csv(path, queries, labeled: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for q in queries:
            cells = [q.src, q.dst, q.etype, q.start_ts, q.end_ts]
            if labeled:
                if q.label is None:
                    raise ValueError("cannot write unlabeled query as labeled")
                cells.append(q.label)
            f.write(",".join(str(c) for c in cells) + "\n")


def write_synth_csvs(data: SynthData, out_dir) -> dict:
    """Emit the competition CSV layout so the CLI pipeline runs unchanged."""
    import os

    paths = {
        "edges": os.path.join(out_dir, "edges_train.csv"),
        "queries_train": os.path.join(out_dir, "queries_train.csv"),
        "queries_test": os.path.join(out_dir, "queries_test.csv"),
    }
    nt = data.n_train_edges
    write_edges_csv(paths["edges"], data.edge_src[:nt], data.edge_dst[:nt],
                    data.edge_etype[:nt], data.edge_ts[:nt])
    write_queries_csv(paths["queries_train"], data.train_queries, labeled=True)
    write_queries_csv(paths["queries_test"], data.test_queries, labeled=True)
    return paths
