"""Gradient-boosted binary decision trees with logistic loss.

Level-wise trees over quantile-binned features; splits maximize the
second-order gain G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)
and leaves take the damped Newton value -G/(H+lambda).  Plain binary trees
are a deliberate simplification of production oblivious-tree boosters: the
contract here is "a deterministic GBDT with logloss", not a clone.

Categorical inputs (ids, edge types) are consumed as integer-valued numeric
columns.  Everything is deterministic given the config seed: subsampling is
the only randomized step and histogram merges happen in fixed order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a soft speed dependency
    njit = None

MODEL_HEADER = "tlp-gbdt v1"
_PROB_EPS = 1e-12  # keeps predict_proba strictly inside (0, 1)


def _hist3_impl(binned, rows, gs, hs, node_idx, nb, k, n_feat):
    """Per-(node, bin) gradient/hessian/count histograms for every feature.

    Operates on the row subset `rows`; node_idx is aligned with rows.
    """
    Gb = np.zeros((n_feat, k * nb), dtype=np.float64)
    Hb = np.zeros((n_feat, k * nb), dtype=np.float64)
    Cb = np.zeros((n_feat, k * nb), dtype=np.int64)
    for ii in range(len(rows)):
        i = rows[ii]
        base = node_idx[ii] * nb
        gi = gs[i]
        hi = hs[i]
        for f in range(n_feat):
            key = base + binned[i, f]
            Gb[f, key] += gi
            Hb[f, key] += hi
            Cb[f, key] += 1
    return Gb, Hb, Cb


if njit is not None:
    _hist3 = njit(cache=True)(_hist3_impl)
else:  # pragma: no cover
    def _hist3(binned, rows, gs, hs, node_idx, nb, k, n_feat):
        base = node_idx * nb
        sub = binned[rows]
        gsub = gs[rows]
        hsub = hs[rows]
        Gb = np.empty((n_feat, k * nb))
        Hb = np.empty((n_feat, k * nb))
        Cb = np.empty((n_feat, k * nb), dtype=np.int64)
        for f in range(n_feat):
            key = base + sub[:, f]
            Gb[f] = np.bincount(key, weights=gsub, minlength=k * nb)
            Hb[f] = np.bincount(key, weights=hsub, minlength=k * nb)
            Cb[f] = np.bincount(key, minlength=k * nb)
        return Gb, Hb, Cb


@dataclass
class GbdtConfig:
    num_trees: int = 500
    max_depth: int = 6
    learning_rate: float = 0.1
    min_samples_leaf: int = 1
    max_bins: int = 255
    seed: int = 42
    subsample: float = 1.0
    reg_lambda: float = 1.0
    base_score_eps: float = 1e-6

    def validate(self):
        if self.num_trees < 1 or self.max_depth < 1 or self.max_bins < 2:
            raise ValueError("num_trees, max_depth >= 1 and max_bins >= 2 required")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be >= 0")


@dataclass
class Tree:
    """Array-of-nodes binary tree; feature -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[idx]
            internal = feat >= 0
            if not internal.any():
                break
            rows = np.flatnonzero(internal)
            f = feat[rows]
            go_left = X[rows, f] <= self.threshold[idx[rows]]
            idx[rows] = np.where(go_left, self.left[idx[rows]], self.right[idx[rows]])
        return self.value[idx]

    def max_depth(self) -> int:
        def depth(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(depth(self.left[i]), depth(self.right[i]))
        return depth(0)


@dataclass
class GbdtModel:
    base_score: float
    learning_rate: float
    feature_names: list
    trees: list = field(default_factory=list)
    train_losses: list = field(default_factory=list)

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        score = np.full(len(X), self.base_score, dtype=np.float64)
        for tree in self.trees:
            score += self.learning_rate * tree.predict(X)
        return score


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def logloss(labels, probs) -> float:
    p = np.clip(probs, 1e-15, 1 - 1e-15)
    y = np.asarray(labels, dtype=np.float64)
    return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())


# -- binning ------------------------------------------------------------------

def quantile_bin_thresholds(column: np.ndarray, max_bins: int) -> np.ndarray:
    """Ascending split thresholds; value x falls in bin searchsorted(thr, x, 'left').

    Distinct values up to max_bins get exact midpoint thresholds; beyond
    that, thresholds come from value quantiles.
    """
    uniq = np.unique(column)
    if len(uniq) <= 1:
        return np.empty(0, dtype=np.float64)
    if len(uniq) <= max_bins:
        return (uniq[:-1] + uniq[1:]) / 2.0
    qs = np.quantile(column, np.arange(1, max_bins) / max_bins)
    return np.unique(qs)


def bin_column(column: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    return np.searchsorted(thresholds, column, side="left")


# -- split search --------------------------------------------------------------

def _split_scan_batch(Gb, Hb, Cb, min_leaf, lam):
    """Best split per row of per-bin histograms.

    Returns (bin index, gain) arrays; bin index -1 where no legal split has
    positive gain.  Ties break toward the smallest bin index.
    """
    GL = np.cumsum(Gb, axis=1)[:, :-1]
    HL = np.cumsum(Hb, axis=1)[:, :-1]
    CL = np.cumsum(Cb, axis=1)[:, :-1]
    Gt = Gb.sum(axis=1, keepdims=True)
    Ht = Hb.sum(axis=1, keepdims=True)
    Ct = Cb.sum(axis=1, keepdims=True)
    GR = Gt - GL
    HR = Ht - HL
    CR = Ct - CL
    gain = (GL ** 2 / (HL + lam) + GR ** 2 / (HR + lam) - Gt ** 2 / (Ht + lam))
    legal = (CL >= min_leaf) & (CR >= min_leaf)
    gain = np.where(legal, gain, -np.inf)
    best = np.argmax(gain, axis=1)  # first occurrence wins ties
    best_gain = gain[np.arange(len(best)), best]
    ok = best_gain > 0.0
    return np.where(ok, best, -1), np.where(ok, best_gain, -np.inf)


def best_split(column, grads, hessians, min_leaf: int,
               reg_lambda: float = 1.0) -> Optional[tuple[int, float]]:
    """Best gain split of one binned column, or None when no legal positive gain.

    Returns (bin threshold, gain): rows with bin value <= threshold go left.
    """
    column = np.asarray(column, dtype=np.int64)
    grads = np.asarray(grads, dtype=np.float64)
    hessians = np.asarray(hessians, dtype=np.float64)
    if not (len(column) == len(grads) == len(hessians)):
        raise ValueError("column, grads and hessians must have equal length")
    if len(column) == 0:
        return None
    nb = int(column.max()) + 1
    if nb < 2:
        return None
    Gb = np.bincount(column, weights=grads, minlength=nb)
    Hb = np.bincount(column, weights=hessians, minlength=nb)
    Cb = np.bincount(column, minlength=nb)
    t, gain = _split_scan_batch(Gb[None], Hb[None], Cb[None], min_leaf, reg_lambda)
    if t[0] < 0:
        return None
    return int(t[0]), float(gain[0])


# -- tree construction ----------------------------------------------------------

def _grow_tree(binned, thresholds, rows, g, h, cfg: GbdtConfig):
    """Level-wise histogram tree on the given row subset."""
    n_feat = binned.shape[1]
    nb = max(len(t) for t in thresholds) + 1
    lam = cfg.reg_lambda

    feature = [-1]
    thr = [0.0]
    left = [-1]
    right = [-1]
    value = [0.0]
    node_g = {0: g[rows].sum()}
    node_h = {0: h[rows].sum()}

    node_of = np.zeros(len(rows), dtype=np.int64)
    active_rows = rows
    frontier = [0]
    for _ in range(cfg.max_depth):
        if not frontier:
            break
        k = len(frontier)
        # children are appended in frontier order, so ids are contiguous
        node_idx = node_of - frontier[0]

        best_gain = np.full(k, -np.inf)
        best_feat = np.full(k, -1, dtype=np.int64)
        best_bin = np.full(k, -1, dtype=np.int64)
        Gb_all, Hb_all, Cb_all = _hist3(binned, active_rows, g, h, node_idx,
                                        nb, k, n_feat)
        for f in range(n_feat):
            if len(thresholds[f]) == 0:
                continue
            Gb = Gb_all[f].reshape(k, nb)
            Hb = Hb_all[f].reshape(k, nb)
            Cb = Cb_all[f].reshape(k, nb)
            t, gain = _split_scan_batch(Gb, Hb, Cb, cfg.min_samples_leaf, lam)
            better = gain > best_gain  # strict: earlier feature wins ties
            best_gain[better] = gain[better]
            best_feat[better] = f
            best_bin[better] = t[better]

        new_frontier = []
        split_info = {}
        for ci, nid in enumerate(frontier):
            if best_feat[ci] < 0:
                continue
            f = int(best_feat[ci])
            b = int(best_bin[ci])
            lid = len(feature)
            rid = lid + 1
            for _ in range(2):
                feature.append(-1)
                thr.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
            feature[nid] = f
            thr[nid] = float(thresholds[f][b])
            left[nid] = lid
            right[nid] = rid
            split_info[nid] = (f, b, lid, rid)
            new_frontier += [lid, rid]

        if split_info:
            feat_arr = np.full(len(feature), -1, dtype=np.int64)
            bin_arr = np.zeros(len(feature), dtype=np.int64)
            left_arr = np.arange(len(feature), dtype=np.int64)
            right_arr = np.arange(len(feature), dtype=np.int64)
            for nid, (f, b, lid, rid) in split_info.items():
                feat_arr[nid] = f
                bin_arr[nid] = b
                left_arr[nid] = lid
                right_arr[nid] = rid
            nf = feat_arr[node_of]
            splitting = nf >= 0
            go_left = np.zeros(len(active_rows), dtype=bool)
            srows = np.flatnonzero(splitting)
            go_left[srows] = (binned[active_rows[srows], nf[srows]]
                              <= bin_arr[node_of[srows]])
            node_of = np.where(splitting, np.where(go_left, left_arr[node_of],
                                                   right_arr[node_of]), node_of)
            # children stats in fixed order
            for nid, (f, b, lid, rid) in sorted(split_info.items()):
                in_l = node_of == lid
                node_g[lid] = g[active_rows[in_l]].sum()
                node_h[lid] = h[active_rows[in_l]].sum()
                node_g[rid] = node_g[nid] - node_g[lid]
                node_h[rid] = node_h[nid] - node_h[lid]
            keep = splitting
            active_rows = active_rows[keep]
            node_of = node_of[keep]
        frontier = new_frontier

    for nid in range(len(feature)):
        if feature[nid] < 0:
            value[nid] = -node_g[nid] / (node_h[nid] + lam) if nid in node_g else 0.0

    return Tree(feature=np.array(feature, dtype=np.int64),
                threshold=np.array(thr, dtype=np.float64),
                left=np.array(left, dtype=np.int64),
                right=np.array(right, dtype=np.int64),
                value=np.array(value, dtype=np.float64))


def fit(features, labels, cfg: GbdtConfig, feature_names=None) -> GbdtModel:
    """Boost cfg.num_trees trees on first/second-order logloss derivatives."""
    cfg.validate()
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("features must be 2-D with one label per row")
    if len(X) < 2 or X.shape[1] < 1:
        raise ValueError("need at least 2 rows and 1 feature column")
    if np.isnan(X).any():
        raise ValueError("NaN features are not supported")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(X.shape[1])]
    if len(feature_names) != X.shape[1]:
        raise ValueError("feature_names length mismatch")

    eps = cfg.base_score_eps
    p0 = min(max(float(y.mean()), eps), 1.0 - eps)
    base = float(np.log(p0 / (1.0 - p0)))
    model = GbdtModel(base_score=base, learning_rate=cfg.learning_rate,
                      feature_names=list(feature_names))

    thresholds = [quantile_bin_thresholds(X[:, f], cfg.max_bins)
                  for f in range(X.shape[1])]
    binned = np.ascontiguousarray(
        np.stack([bin_column(X[:, f], thresholds[f])
                  for f in range(X.shape[1])], axis=1).astype(np.int32))

    rng = np.random.default_rng(cfg.seed)
    n = len(X)
    score = np.full(n, base, dtype=np.float64)
    model.train_losses.append(logloss(y, _sigmoid(score)))
    m = max(1, int(round(cfg.subsample * n)))
    for _ in range(cfg.num_trees):
        p = _sigmoid(score)
        g = p - y
        h = p * (1.0 - p)
        rows = np.sort(rng.permutation(n)[:m])
        tree = _grow_tree(binned, thresholds, rows, g, h, cfg)
        model.trees.append(tree)
        # bin-space apply is exact for training rows (thresholds are bin edges)
        score += cfg.learning_rate * tree.predict(X)
        model.train_losses.append(logloss(y, _sigmoid(score)))
    return model


def predict_proba(model: GbdtModel, features) -> np.ndarray:
    """Probabilities strictly inside (0, 1); column count must match training."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise ValueError(
            f"expected {len(model.feature_names)} feature columns, got "
            f"{X.shape[1] if X.ndim == 2 else 'non-2D input'}")
    p = _sigmoid(model.predict_raw(X))
    return np.clip(p, _PROB_EPS, 1.0 - _PROB_EPS)


# -- serialization ---------------------------------------------------------------

def _write_subtree(f, tree: Tree, nid: int):
    if tree.feature[nid] < 0:
        f.write(f"l {float(tree.value[nid])!r}\n")
    else:
        f.write(f"n {int(tree.feature[nid])} {float(tree.threshold[nid])!r}\n")
        _write_subtree(f, tree, int(tree.left[nid]))
        _write_subtree(f, tree, int(tree.right[nid]))


def save_model(model: GbdtModel, path) -> None:
    """Versioned structured-text model file; floats round-trip exactly."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(MODEL_HEADER + "\n")
        f.write(f"base_score {float(model.base_score)!r}\n")
        f.write(f"learning_rate {float(model.learning_rate)!r}\n")
        f.write(f"num_features {len(model.feature_names)}\n")
        for name in model.feature_names:
            f.write(f"feature {name}\n")
        f.write(f"num_trees {len(model.trees)}\n")
        for i, tree in enumerate(model.trees):
            f.write(f"tree {i}\n")
            _write_subtree(f, tree, 0)


def _read_subtree(lines, nodes):
    kind, rest = next(lines).split(" ", 1)
    nid = len(nodes["feature"])
    for key in nodes:
        nodes[key].append(0)
    if kind == "l":
        nodes["feature"][nid] = -1
        nodes["threshold"][nid] = 0.0
        nodes["left"][nid] = -1
        nodes["right"][nid] = -1
        nodes["value"][nid] = float(rest)
    elif kind == "n":
        feat, thr = rest.split(" ")
        nodes["feature"][nid] = int(feat)
        nodes["threshold"][nid] = float(thr)
        nodes["value"][nid] = 0.0
        nodes["left"][nid] = _read_subtree(lines, nodes)
        nodes["right"][nid] = _read_subtree(lines, nodes)
    else:
        raise ValueError(f"bad tree node line: {kind} {rest}")
    return nid


def load_model(path) -> GbdtModel:
    with open(path, "r", encoding="utf-8") as f:
        lines = iter(line.rstrip("\n") for line in f)
        if next(lines) != MODEL_HEADER:
            raise ValueError(f"{path}: not a model file")
        base = float(next(lines).split(" ", 1)[1])
        lr = float(next(lines).split(" ", 1)[1])
        n_feat = int(next(lines).split(" ", 1)[1])
        names = [next(lines).split(" ", 1)[1] for _ in range(n_feat)]
        n_trees = int(next(lines).split(" ", 1)[1])
        model = GbdtModel(base_score=base, learning_rate=lr, feature_names=names)
        for _ in range(n_trees):
            header = next(lines)
            if not header.startswith("tree "):
                raise ValueError(f"{path}: expected tree header, got {header!r}")
            nodes = {"feature": [], "threshold": [], "left": [], "right": [], "value": []}
            _read_subtree(lines, nodes)
            model.trees.append(Tree(
                feature=np.array(nodes["feature"], dtype=np.int64),
                threshold=np.array(nodes["threshold"], dtype=np.float64),
                left=np.array(nodes["left"], dtype=np.int64),
                right=np.array(nodes["right"], dtype=np.int64),
                value=np.array(nodes["value"], dtype=np.float64)))
    return model
