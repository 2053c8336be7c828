"""Ranking metrics: AUC via rank statistics and the competition score transform."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AucResult:
    auc: float
    n_pos: int
    n_neg: int


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the group average (midrank)."""
    n = len(scores)
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    # group boundaries of equal scores
    starts = np.concatenate([[0], np.flatnonzero(np.diff(s)) + 1])
    ends = np.concatenate([starts[1:], [n]])
    group_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def auc(scores, labels) -> AucResult:
    """Probability a random positive outscores a random negative; ties credit 0.5.

    Computed from midranks in O(n log n).  Both classes must be present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: need at least one positive and one negative")
    ranks = _average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return AucResult(auc=float(u / (n_pos * n_neg)), n_pos=n_pos, n_neg=n_neg)


@dataclass(frozen=True)
class TscoreInput:
    """One participant's AUC plus the AUCs of the full field (self included)."""
    auc_self: float
    auc_all: tuple = field(default=())


def tscore(inp: TscoreInput, sample_std: bool = False) -> float:
    """Standardized competition score: (AUC - mean) / std * 0.1 + 0.5.

    mean/std are taken over all participants' AUCs.  Population std by
    default; pass sample_std=True for the n-1 convention.
    """
    all_auc = np.asarray(inp.auc_all, dtype=np.float64)
    if all_auc.size < 2:
        raise ValueError("need at least two participant AUCs")
    std = float(all_auc.std(ddof=1 if sample_std else 0))
    if std <= 0.0:
        raise ValueError("std of participant AUCs is zero; T-score undefined")
    return (inp.auc_self - float(all_auc.mean())) / std * 0.1 + 0.5


def average_tscore(t_a: float, t_b: float) -> float:
    """Arithmetic mean of the two per-dataset T-scores."""
    return (t_a + t_b) / 2.0
