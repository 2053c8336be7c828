"""Edge-sampling node embeddings preserving first- and second-order proximity.

Training draws edges uniformly from the (direction-expanded) edge list and
takes logistic ascent steps: the observed endpoint is pulled together with
the source while negative nodes, drawn proportional to degree^0.75 through
an alias table, are pushed away.  First order scores vertex.vertex;
second order scores context.vertex with a separate context table.

Updates are applied in mini-batches that read pre-batch vectors, which is
deterministic for a fixed seed in single-threaded mode.  A lock-free
multi-threaded mode exists for speed; its races are tolerated and only the
statistical quality contract applies there.
"""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graph import MultiGraph

EMBED_MAGIC = b"TLPE"
EMBED_FORMAT_VERSION = 1

# Dot products are clipped here before the logistic in update coefficients;
# this perturbs gradients only at saturation.
SIGMOID_CLIP = 6.0

_ORDERS = ("first", "second", "both")
_ORDER_CODE = {"first": 1, "second": 2, "both": 3}
_CODE_ORDER = {v: k for k, v in _ORDER_CODE.items()}


@dataclass
class LineConfig:
    dim: int = 128
    order: str = "both"
    epochs: int = 100      # total edge samples = epochs * num_edges (per order)
    neg_k: int = 5
    lr_init: float = 0.025
    seed: int = 42
    batch_size: int = 1024
    threads: int = 1

    def validate(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.order not in _ORDERS:
            raise ValueError(f"order must be one of {_ORDERS}, got {self.order!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.neg_k < 1:
            raise ValueError("neg_k must be >= 1")
        if self.lr_init <= 0:
            raise ValueError("lr_init must be > 0")
        if self.batch_size < 1 or self.threads < 1:
            raise ValueError("batch_size and threads must be >= 1")


@dataclass
class EmbeddingTable:
    """Per-node vectors; ``context`` holds second-order context vectors."""

    dim: int
    vectors: np.ndarray
    context: Optional[np.ndarray] = None
    order: Optional[str] = None


class AliasTable:
    """O(1) sampler for a categorical distribution proportional to weights."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-D array")
        if (w < 0).any():
            raise ValueError("weights must be non-negative")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must have positive sum")
        n = len(w)
        scaled = w * (n / total)
        self.n = n
        self.prob = np.ones(n, dtype=np.float64)
        self.alias = np.arange(n, dtype=np.int64)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            l = large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            (small if scaled[l] < 1.0 else large).append(l)
        # leftovers are numerically ~1; they keep prob 1 / self alias

    def draw(self, rng, size=None) -> np.ndarray:
        i = rng.integers(0, self.n, size=size)
        r = rng.random(size=size)
        return np.where(r < self.prob[i], i, self.alias[i])


def build_alias_table(weights) -> AliasTable:
    return AliasTable(weights)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -SIGMOID_CLIP, SIGMOID_CLIP)))


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def line_pair_objective(e_u, e_v, negatives) -> float:
    """Per-sample objective: log s(u.v) + sum_k log s(-u.n_k)."""
    u = np.asarray(e_u, dtype=np.float64)
    v = np.asarray(e_v, dtype=np.float64)
    obj = _log_sigmoid(u @ v)
    for n in negatives:
        obj += _log_sigmoid(-(u @ np.asarray(n, dtype=np.float64)))
    return float(obj)


def _pair_coefficients(u, v, negs):
    """Gradient coefficients for batched samples.

    u, v: (b, d); negs: (b, k, d).  Returns (coef_pos (b,), coef_neg (b, k))
    where grad_u = coef_pos * v + sum_k coef_neg_k * n_k, grad_v =
    coef_pos * u, grad_n_k = coef_neg_k * u.
    """
    coef_pos = _sigmoid(-(u * v).sum(axis=1))
    if negs.shape[1]:
        coef_neg = -_sigmoid(np.einsum("bd,bkd->bk", u, negs))
    else:
        coef_neg = np.zeros((u.shape[0], 0), dtype=u.dtype)
    return coef_pos, coef_neg


def line_gradient_step(e_u, ctx_or_e_v, negatives, lr: float):
    """One ascent step on the per-sample objective; returns updated copies.

    Works for either order: pass the partner vertex vector (first order) or
    its context vector (second order).
    """
    if lr < 0:
        raise ValueError("lr must be >= 0")
    u = np.asarray(e_u, dtype=np.float64)
    v = np.asarray(ctx_or_e_v, dtype=np.float64)
    negs = [np.asarray(n, dtype=np.float64) for n in negatives]
    d = u.shape[-1]
    if v.shape != u.shape or any(n.shape != u.shape for n in negs):
        raise ValueError("all vectors must share one dimension")
    nmat = np.stack(negs)[None] if negs else np.zeros((1, 0, d))
    coef_pos, coef_neg = _pair_coefficients(u[None], v[None], nmat)
    cp = coef_pos[0]
    grad_u = cp * v + (coef_neg[0] @ nmat[0] if negs else 0.0)
    new_u = u + lr * grad_u
    new_v = v + lr * cp * u
    new_negs = [n + lr * coef_neg[0, k] * u for k, n in enumerate(negs)]
    return new_u, new_v, new_negs


def _batch_update(emb, tgt, u_idx, v_idx, neg_idx, lr):
    """Apply one mini-batch of ascent steps in place (pre-batch reads).

    A drawn negative that coincides with the positive partner is skipped
    (zero coefficient), the usual convention for table-based sampling.
    """
    u = emb[u_idx]
    v = tgt[v_idx]
    n = tgt[neg_idx]  # (b, k, d)
    coef_pos, coef_neg = _pair_coefficients(u, v, n)
    coef_neg = np.where(neg_idx == v_idx[:, None], 0.0, coef_neg)
    g_u = coef_pos[:, None] * v + np.einsum("bk,bkd->bd", coef_neg, n)
    g_v = coef_pos[:, None] * u
    g_n = coef_neg[..., None] * u[:, None, :]
    np.add.at(emb, u_idx, (lr * g_u).astype(emb.dtype, copy=False))
    np.add.at(tgt, v_idx, (lr * g_v).astype(tgt.dtype, copy=False))
    np.add.at(tgt, neg_idx.reshape(-1),
              (lr * g_n).reshape(-1, emb.shape[1]).astype(tgt.dtype, copy=False))


def _sgd(emb, tgt, srcs, dsts, alias, cfg, rng, total):
    dim = emb.shape[1]
    done = 0
    m = len(srcs)
    while done < total:
        b = min(cfg.batch_size, total - done)
        lr = cfg.lr_init * (1.0 - 0.99 * (done / total))
        e_idx = rng.integers(0, m, size=b)
        u_idx = srcs[e_idx]
        v_idx = dsts[e_idx]
        neg_idx = alias.draw(rng, size=(b, cfg.neg_k))
        _batch_update(emb, tgt, u_idx, v_idx, neg_idx, lr)
        done += b


def _train_single_order(g: MultiGraph, cfg: LineConfig, order: str, order_slot: int):
    if g.directed:
        srcs = g.edge_src
        dsts = g.edge_dst
    else:
        srcs = np.concatenate([g.edge_src, g.edge_dst])
        dsts = np.concatenate([g.edge_dst, g.edge_src])
    deg = np.bincount(srcs, minlength=g.num_nodes)
    alias = build_alias_table(deg.astype(np.float64) ** 0.75)

    rng = np.random.default_rng([order_slot, cfg.seed])
    emb = ((rng.random((g.num_nodes, cfg.dim)) - 0.5) / cfg.dim).astype(np.float32)
    tgt = emb if order == "first" else np.zeros_like(emb)

    total = cfg.epochs * g.num_edges
    if cfg.threads == 1:
        _sgd(emb, tgt, srcs, dsts, alias, cfg, rng, total)
    else:
        # lock-free: workers race on the shared tables, which is tolerated
        share = total // cfg.threads
        totals = [share + (1 if i < total % cfg.threads else 0) for i in range(cfg.threads)]
        worker_rngs = rng.spawn(cfg.threads)
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [pool.submit(_sgd, emb, tgt, srcs, dsts, alias, cfg, r, t)
                       for r, t in zip(worker_rngs, totals)]
            for f in futures:
                f.result()

    # cold-start convention: isolated nodes embed as zero
    iso = deg == 0
    emb[iso] = 0.0
    if order == "second":
        tgt[iso] = 0.0
    if not np.isfinite(emb).all() or (order == "second" and not np.isfinite(tgt).all()):
        raise ArithmeticError("embedding training produced non-finite values")
    return emb, (tgt if order == "second" else None)


def train_line(g: MultiGraph, cfg: LineConfig) -> EmbeddingTable:
    """Train embeddings; order='both' trains each order and concatenates."""
    cfg.validate()
    if g.num_edges == 0:
        raise ValueError("cannot embed graph with no edges")
    orders = ("first", "second") if cfg.order == "both" else (cfg.order,)
    parts = []
    context = None
    for slot, order in enumerate(orders):
        vec, ctx = _train_single_order(g, cfg, order, slot)
        parts.append(vec)
        if ctx is not None:
            context = ctx
    vectors = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)
    return EmbeddingTable(dim=vectors.shape[1], vectors=vectors,
                          context=context, order=cfg.order)


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Binary embedding file: magic, version, num_nodes, dim, order, f32 rows."""
    order = table.order or "first"
    with open(path, "wb") as f:
        f.write(EMBED_MAGIC)
        f.write(struct.pack("<IIIB", EMBED_FORMAT_VERSION, table.vectors.shape[0],
                            table.dim, _ORDER_CODE[order]))
        f.write(np.ascontiguousarray(table.vectors, dtype="<f4").tobytes())


def load_embeddings(path) -> EmbeddingTable:
    with open(path, "rb") as f:
        if f.read(4) != EMBED_MAGIC:
            raise ValueError(f"{path}: not an embedding file")
        version, n, dim, code = struct.unpack("<IIIB", f.read(struct.calcsize("<IIIB")))
        if version != EMBED_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported embedding format version {version}")
        vec = np.frombuffer(f.read(n * dim * 4), dtype="<f4").reshape(n, dim)
    return EmbeddingTable(dim=dim, vectors=vec.copy(), order=_CODE_ORDER[code])


def save_embeddings_text(table: EmbeddingTable, path) -> None:
    """Interop text format: one node per line, id then dim floats."""
    with open(path, "w", encoding="utf-8") as f:
        for i, row in enumerate(table.vectors):
            f.write(str(i) + " " + " ".join(repr(float(x)) for x in row) + "\n")


def load_embeddings_text(path) -> EmbeddingTable:
    rows = {}
    dim = None
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            rows[int(parts[0])] = [float(x) for x in parts[1:]]
            dim = len(parts) - 1
    if not rows:
        raise ValueError(f"{path}: no embedding rows")
    n = max(rows) + 1
    vec = np.zeros((n, dim), dtype=np.float32)
    for i, v in rows.items():
        vec[i] = v
    return EmbeddingTable(dim=dim, vectors=vec)
