"""Time-free train-set construction.

Positives are the graph's edges as (src, dst, etype) triples.  Negatives
keep the source column and permute the (dst, etype) column pairs jointly
(the targets-and-relations shuffle); a flag switches to independent column
permutations.  Shuffled triples that collide with a true edge are dropped
so no triple ever carries both labels.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .graph import MultiGraph
from .ingest import DatasetKind


@dataclass(frozen=True)
class TrainInstance:
    src: int
    dst: int
    etype: int
    label: int


@dataclass
class SamplerConfig:
    seed: int = 42
    neg_ratio: float = 1.0
    sample_size: Optional[int] = None
    independent_columns: bool = False  # shuffle dst and etype separately

    def __post_init__(self):
        if self.neg_ratio <= 0:
            raise ValueError(f"neg_ratio must be > 0, got {self.neg_ratio}")


# Column names treated as time-related and always removed from feature tables.
TIME_COLUMNS = ("ts", "timestamp", "time", "start_ts", "end_ts", "start_time", "end_time")
EDGE_FEATURE_PREFIX = "edge_feat"


def _instances(src, dst, et, label) -> list[TrainInstance]:
    lab = int(label)
    return [TrainInstance(int(s), int(d), int(e), lab) for s, d, e in zip(src, dst, et)]


def _shuffle_negative_arrays(pos_src, pos_dst, pos_et, cfg: SamplerConfig, rng):
    n_pos = len(pos_src)
    n_neg = math.ceil(cfg.neg_ratio * n_pos)
    reps = math.ceil(n_neg / n_pos)
    src = np.tile(pos_src, reps)[:n_neg]
    dst = np.tile(pos_dst, reps)[:n_neg]
    et = np.tile(pos_et, reps)[:n_neg]
    if cfg.independent_columns:
        dst = dst[rng.permutation(n_neg)]
        et = et[rng.permutation(n_neg)]
    else:
        perm = rng.permutation(n_neg)
        dst = dst[perm]
        et = et[perm]
    return src, dst, et


def shuffle_negatives(positives, cfg: SamplerConfig) -> list[TrainInstance]:
    """Generate label-0 instances by shuffling target/type columns of the positives.

    Sources are kept (tiled for neg_ratio > 1), so for neg_ratio=1 the
    negatives' source multiset equals the positives' exactly.  Deterministic
    given cfg.seed.
    """
    if not positives:
        raise ValueError("cannot sample negatives from an empty positive set")
    if any(p.label != 1 for p in positives):
        raise ValueError("all positives must carry label 1")
    pos_src = np.array([p.src for p in positives], dtype=np.int64)
    pos_dst = np.array([p.dst for p in positives], dtype=np.int64)
    pos_et = np.array([p.etype for p in positives], dtype=np.int64)
    rng = np.random.default_rng([cfg.seed, 0])
    src, dst, et = _shuffle_negative_arrays(pos_src, pos_dst, pos_et, cfg, rng)
    return _instances(src, dst, et, 0)


@dataclass
class TrainSetInfo:
    seed: int
    n_positive: int
    n_negative_raw: int
    n_collisions: int
    n_final: int
    dropped_columns: tuple = ("ts",)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, default=list)


def _triple_keys(src, dst, et, directed: bool, num_nodes: int) -> np.ndarray:
    # pack (min, max, etype) -- or (src, dst, etype) when directed -- into int64
    if directed:
        a, b = src, dst
    else:
        a = np.minimum(src, dst)
        b = np.maximum(src, dst)
    return (a * num_nodes + b) * np.int64(1 << 20) + et


def assemble_train_arrays(g: MultiGraph, cfg: SamplerConfig):
    """Columnar variant of assemble_train_set: (src, dst, etype, label, info)."""
    if g.num_edges == 0:
        raise ValueError("cannot build a train set from a graph with no edges")
    if g.num_nodes >= (1 << 21):
        raise ValueError("triple packing supports < 2^21 nodes")
    pos_src, pos_dst, pos_et = g.edge_src, g.edge_dst, g.edge_etype
    n_pos = len(pos_src)

    rng_neg = np.random.default_rng([cfg.seed, 0])
    neg_src, neg_dst, neg_et = _shuffle_negative_arrays(pos_src, pos_dst, pos_et, cfg, rng_neg)
    n_neg_raw = len(neg_src)

    pos_keys = _triple_keys(pos_src, pos_dst, pos_et, g.directed, g.num_nodes)
    neg_keys = _triple_keys(neg_src, neg_dst, neg_et, g.directed, g.num_nodes)
    keep = ~np.isin(neg_keys, pos_keys)
    n_coll = int(n_neg_raw - keep.sum())
    neg_src, neg_dst, neg_et = neg_src[keep], neg_dst[keep], neg_et[keep]

    src = np.concatenate([pos_src, neg_src])
    dst = np.concatenate([pos_dst, neg_dst])
    et = np.concatenate([pos_et, neg_et])
    label = np.concatenate([np.ones(n_pos, dtype=np.int64),
                            np.zeros(len(neg_src), dtype=np.int64)])

    if cfg.sample_size is not None:
        if cfg.sample_size > len(src):
            raise ValueError(
                f"sample_size {cfg.sample_size} exceeds pool size {len(src)}")
        rng_sub = np.random.default_rng([cfg.seed, 1])
        pick = rng_sub.permutation(len(src))[:cfg.sample_size]
        pick.sort()  # keep positives-then-negatives order stable
        src, dst, et, label = src[pick], dst[pick], et[pick], label[pick]

    info = TrainSetInfo(seed=cfg.seed, n_positive=n_pos, n_negative_raw=n_neg_raw,
                        n_collisions=n_coll, n_final=len(src))
    return src, dst, et, label, info


def assemble_train_set(g: MultiGraph, cfg: SamplerConfig) -> list[TrainInstance]:
    """Positives (all edges) plus collision-filtered shuffled negatives.

    Optionally subsampled to cfg.sample_size.  Deterministic given
    (graph, cfg); no triple appears with both labels.
    """
    src, dst, et, label, _ = assemble_train_arrays(g, cfg)
    return [TrainInstance(int(s), int(d), int(e), int(l))
            for s, d, e, l in zip(src, dst, et, label)]


def drop_redundant_columns(rows: pd.DataFrame, kind: DatasetKind) -> tuple[pd.DataFrame, list[str]]:
    """Remove time-related columns always, and edge-feature columns for kind B.

    Returns the filtered table and the manifest of dropped column names.
    """
    dropped = []
    for col in rows.columns:
        name = str(col).lower()
        if name in TIME_COLUMNS:
            dropped.append(str(col))
        elif kind is DatasetKind.B and name.startswith(EDGE_FEATURE_PREFIX):
            dropped.append(str(col))
    return rows.drop(columns=dropped), dropped


def save_train_set(path, src, dst, et, label) -> None:
    """Train-set CSV: src,dst,etype,label with a header row."""
    df = pd.DataFrame({"src": src, "dst": dst, "etype": et, "label": label})
    df.to_csv(path, index=False)


def load_train_set(path):
    df = pd.read_csv(path)
    return (df["src"].to_numpy(np.int64), df["dst"].to_numpy(np.int64),
            df["etype"].to_numpy(np.int64), df["label"].to_numpy(np.int64))
