"""Per-query feature assembly.

Four column families, always emitted in this order when enabled:

  subgraph: src_degree, src_distinct_neighbors, src_distinct_etypes,
            dst_degree, dst_distinct_neighbors, dst_distinct_etypes,
            one_hop_count, two_hop_count, pair_distinct_etypes, triplet_count
  crossing: emb_cosine, emb_dot
  raw:      src_id, dst_id, etype [, src_feat_*, dst_feat_* when the graph
            carries node features]
  line:     src_emb_*, dst_emb_* (the embedding components themselves)

Counting conventions: degree counts adjacency slots, so parallel edges count
with multiplicity and a self-loop contributes 2; one-hop and two-hop path
counts are multiplicity-weighted; two-hop paths never route through either
endpoint; "distinct" counts deduplicate.  Timestamps never contribute.
Cosine is 0 by convention when either embedding is the zero vector.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
import polars as pl
import scipy.sparse as sp

from .embedding import EmbeddingTable
from .graph import MultiGraph

FAMILY_ORDER = ("subgraph", "crossing", "raw", "line")
DEFAULT_FAMILIES = ("subgraph", "crossing", "raw")

SUBGRAPH_COLUMNS = (
    "src_degree", "src_distinct_neighbors", "src_distinct_etypes",
    "dst_degree", "dst_distinct_neighbors", "dst_distinct_etypes",
    "one_hop_count", "two_hop_count", "pair_distinct_etypes", "triplet_count",
)
CROSSING_COLUMNS = ("emb_cosine", "emb_dot")


@dataclass(frozen=True)
class FeatureRow:
    names: tuple
    values: np.ndarray

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))

    def __len__(self):
        return len(self.names)


def crossing_features(e_u, e_v) -> tuple[float, float]:
    """Cosine and dot product of two embeddings; zero vectors give cosine 0."""
    u = np.asarray(e_u, dtype=np.float64)
    v = np.asarray(e_v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    dot = float(u @ v)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    cos = 0.0 if nu == 0.0 or nv == 0.0 else dot / (nu * nv)
    return cos, dot


def node_unary(g: MultiGraph, u: int) -> tuple[int, int, int]:
    """(degree, distinct neighbors, distinct adjacent edge types) of u."""
    g._check_node(u)
    lo, hi = int(g.csr_offsets[u]), int(g.csr_offsets[u + 1])
    nbrs = g.csr_nbr[lo:hi]
    ets = g.csr_etype[lo:hi]
    return hi - lo, len(np.unique(nbrs)), len(np.unique(ets))


def _pair_slot_count(g: MultiGraph, u: int, v: int) -> int:
    lo, hi = int(g.csr_offsets[u]), int(g.csr_offsets[u + 1])
    return int((g.csr_nbr[lo:hi] == v).sum())


def pair_binary(g: MultiGraph, u: int, v: int) -> tuple[int, int, int]:
    """(one-hop count, two-hop count, distinct edge types between) for (u, v)."""
    g._check_node(u)
    g._check_node(v)
    one = _pair_slot_count(g, u, v)
    if u == v:
        one //= 2  # a self-loop occupies two slots of the same node
    lo_u, hi_u = int(g.csr_offsets[u]), int(g.csr_offsets[u + 1])
    lo_v, hi_v = int(g.csr_offsets[v]), int(g.csr_offsets[v + 1])
    m_u = Counter(g.csr_nbr[lo_u:hi_u].tolist())
    m_v = Counter(g.csr_nbr[lo_v:hi_v].tolist())
    two = sum(c * m_v[w] for w, c in m_u.items() if w != u and w != v)
    between = g.csr_etype[lo_u:hi_u][g.csr_nbr[lo_u:hi_u] == v]
    return one, two, len(np.unique(between))


def triplet_count(g: MultiGraph, u: int, v: int, r: int) -> int:
    """Occurrences of the (u, v, r) triple among edges (undirected match)."""
    g._check_node(u)
    g._check_node(v)
    lo, hi = int(g.csr_offsets[u]), int(g.csr_offsets[u + 1])
    n = int(((g.csr_nbr[lo:hi] == v) & (g.csr_etype[lo:hi] == r)).sum())
    return n // 2 if u == v else n


class FeatureExtractor:
    """Precomputed indexes over one (graph, embeddings) pair for fast batches.

    The batch path produces bit-identical values to the scalar operations;
    both are exercised against a raw edge-list oracle in the tests.
    """

    def __init__(self, g: MultiGraph, embeddings: Optional[EmbeddingTable] = None,
                 families=DEFAULT_FAMILIES, binary_adjacency: bool = False):
        bad = set(families) - set(FAMILY_ORDER)
        if bad:
            raise ValueError(f"unknown feature families: {sorted(bad)}")
        self.families = tuple(f for f in FAMILY_ORDER if f in families)
        if ("crossing" in self.families or "line" in self.families) and embeddings is None:
            raise ValueError("crossing/line features require an embedding table")
        if g.num_nodes >= (1 << 21):
            raise ValueError("feature indexing supports < 2^21 nodes")
        self.g = g
        self.emb = embeddings
        self.binary_adjacency = binary_adjacency
        if embeddings is not None and embeddings.vectors.shape[0] != g.num_nodes:
            raise ValueError("embedding table and graph disagree on num_nodes")
        self._build_index()
        self.columns = self._column_names()

    # -- index construction -------------------------------------------------

    def _build_index(self):
        g = self.g
        n = g.num_nodes
        self.degrees = g.degrees()

        # distinct neighbors / etypes per node from the sorted CSR slots
        slot_node = np.repeat(np.arange(n, dtype=np.int64), self.degrees)
        nbr = g.csr_nbr
        first = np.ones(len(nbr), dtype=bool)
        if len(nbr):
            first[1:] = (slot_node[1:] != slot_node[:-1]) | (nbr[1:] != nbr[:-1])
        self.distinct_nbrs = np.bincount(slot_node[first], minlength=n)

        order = np.lexsort((g.csr_etype, slot_node))
        sn = slot_node[order]
        se = g.csr_etype[order]
        first_e = np.ones(len(se), dtype=bool)
        if len(se):
            first_e[1:] = (sn[1:] != sn[:-1]) | (se[1:] != se[:-1])
        self.distinct_etypes = np.bincount(sn[first_e], minlength=n)

        # pair and triple multiplicity tables from the edge list
        src, dst, et = g.edge_src, g.edge_dst, g.edge_etype
        if g.directed:
            a, b = src, dst
        else:
            a = np.minimum(src, dst)
            b = np.maximum(src, dst)
        pair_key = a * n + b
        self._pair_keys, self._pair_counts = np.unique(pair_key, return_counts=True)
        triple_key = pair_key * np.int64(1 << 20) + et
        self._triple_keys, self._triple_counts = np.unique(triple_key, return_counts=True)
        # distinct etypes per pair: group unique triples by their pair part
        tri_pairs = self._triple_keys // np.int64(1 << 20)
        idx = np.searchsorted(self._pair_keys, tri_pairs)
        self._pair_etype_counts = np.bincount(idx, minlength=len(self._pair_keys))

        # per-(node, etype) incident slot counts, for self-exclusion surgery
        slot_ne = slot_node * np.int64(1 << 20) + g.csr_etype
        self._node_etype_keys, self._node_etype_counts = np.unique(slot_ne, return_counts=True)

        # adjacency for two-hop counting
        if g.directed:
            rows, cols = src, dst
        else:
            loop = src == dst
            rows = np.concatenate([src, dst[~loop]])
            cols = np.concatenate([dst, src[~loop]])
        data = np.ones(len(rows), dtype=np.int64)
        A = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
        A.sum_duplicates()
        if self.binary_adjacency:
            A.data[:] = 1
        self._A = A
        self._AT = A.T.tocsr() if g.directed else A
        self._diag = A.diagonal()

    def _column_names(self):
        cols = []
        for fam in self.families:
            if fam == "subgraph":
                cols += list(SUBGRAPH_COLUMNS)
            elif fam == "crossing":
                cols += list(CROSSING_COLUMNS)
            elif fam == "raw":
                cols += ["src_id", "dst_id", "etype"]
                if self.g.node_feats is not None:
                    d = self.g.node_feats.shape[1]
                    cols += [f"src_feat_{j}" for j in range(d)]
                    cols += [f"dst_feat_{j}" for j in range(d)]
            else:  # line
                d = self.emb.dim
                cols += [f"src_emb_{j}" for j in range(d)]
                cols += [f"dst_emb_{j}" for j in range(d)]
        return tuple(cols)

    # -- lookups -------------------------------------------------------------

    def _lookup(self, keys_sorted, counts, query_keys):
        idx = np.searchsorted(keys_sorted, query_keys)
        idx_c = np.minimum(idx, len(keys_sorted) - 1) if len(keys_sorted) else idx
        out = np.zeros(len(query_keys), dtype=np.int64)
        if len(keys_sorted):
            hit = keys_sorted[idx_c] == query_keys
            out[hit] = counts[idx_c[hit]]
        return out

    def _pair_key_of(self, u, v):
        n = self.g.num_nodes
        if self.g.directed:
            return u * n + v
        return np.minimum(u, v) * n + np.maximum(u, v)

    def one_hop(self, u, v):
        cnt = self._lookup(self._pair_keys, self._pair_counts, self._pair_key_of(u, v))
        if self.binary_adjacency:
            cnt = np.minimum(cnt, 1)
        return cnt

    def two_hop(self, u, v):
        """Multiplicity-weighted length-2 walk counts, endpoints excluded."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        rows_u = self._A[u]
        rows_v = self._AT[v]
        raw = np.asarray(rows_u.multiply(rows_v).sum(axis=1)).ravel().astype(np.int64)
        auv = self._auv(u, v)
        corr = self._diag[u] * auv + np.where(u == v, 0, auv * self._diag[v])
        return raw - corr

    def _auv(self, u, v):
        # adjacency entry A[u, v] with the same multiplicity policy as _A
        cnt = self._lookup(self._pair_keys, self._pair_counts, self._pair_key_of(u, v))
        if self.binary_adjacency:
            cnt = np.minimum(cnt, 1)
        return cnt

    # -- assembly ------------------------------------------------------------

    def matrix(self, src, dst, etype, labels=None, chunk_size: int = 65536,
               exclude_self: bool = False) -> pd.DataFrame:
        """Feature matrix for query arrays, one row per (src, dst, etype).

        With exclude_self, each row whose triple exists as a graph edge is
        featurized as if one such edge instance were removed; this is the
        leave-one-out convention that keeps training rows distributionally
        consistent with queries about unseen edges.  Embedding-based and raw
        columns are not adjusted.
        """
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        etype = np.asarray(etype, dtype=np.int64)
        if not (len(src) == len(dst) == len(etype)):
            raise ValueError("query columns must have equal length")
        if len(etype) and int(etype.max()) >= (1 << 20):
            raise ValueError("etype values must be < 2^20")
        for col in (src, dst):
            bad = np.flatnonzero((col < 0) | (col >= self.g.num_nodes))
            if bad.size:
                raise ValueError(f"query {int(bad[0])}: node id out of range")
        blocks = []
        for fam in self.families:
            if fam == "subgraph":
                two = np.concatenate([
                    self.two_hop(src[i:i + chunk_size], dst[i:i + chunk_size])
                    for i in range(0, len(src), chunk_size)
                ]) if len(src) else np.zeros(0, dtype=np.int64)
                pk = self._pair_key_of(src, dst)
                one = self._lookup(self._pair_keys, self._pair_counts, pk)
                tk = pk * np.int64(1 << 20) + etype
                trip = self._lookup(self._triple_keys, self._triple_counts, tk)
                pair_et = self._lookup(self._pair_keys, self._pair_etype_counts, pk)
                deg_s = self.degrees[src].astype(np.int64)
                deg_d = self.degrees[dst].astype(np.int64)
                dn_s = self.distinct_nbrs[src].astype(np.int64)
                dn_d = self.distinct_nbrs[dst].astype(np.int64)
                de_s = self.distinct_etypes[src].astype(np.int64)
                de_d = self.distinct_etypes[dst].astype(np.int64)
                if exclude_self:
                    hit = trip >= 1
                    loop = src == dst
                    slots = np.where(loop, 2, 1)  # a self-loop holds 2 slots
                    ne_s = self._lookup(self._node_etype_keys, self._node_etype_counts,
                                        src * np.int64(1 << 20) + etype)
                    ne_d = self._lookup(self._node_etype_keys, self._node_etype_counts,
                                        dst * np.int64(1 << 20) + etype)
                    deg_s = deg_s - hit * slots
                    deg_d = deg_d - hit * slots
                    dn_s = dn_s - (hit & (one == 1))
                    dn_d = dn_d - (hit & (one == 1))
                    de_s = de_s - (hit & (ne_s == slots))
                    de_d = de_d - (hit & (ne_d == slots))
                    pair_et = pair_et - (hit & (trip == 1))
                    one = one - hit
                    trip = trip - hit
                if self.binary_adjacency:
                    one = np.minimum(one, 1)
                blocks.append(np.column_stack([
                    deg_s, dn_s, de_s, deg_d, dn_d, de_d,
                    one, two, pair_et, trip,
                ]).astype(np.float64))
            elif fam == "crossing":
                eu = self.emb.vectors[src].astype(np.float64)
                ev = self.emb.vectors[dst].astype(np.float64)
                dot = (eu * ev).sum(axis=1)
                norm = np.linalg.norm(eu, axis=1) * np.linalg.norm(ev, axis=1)
                cos = np.divide(dot, norm, out=np.zeros_like(dot), where=norm > 0)
                blocks.append(np.column_stack([cos, dot]))
            elif fam == "raw":
                cols = [src.astype(np.float64), dst.astype(np.float64),
                        etype.astype(np.float64)]
                if self.g.node_feats is not None:
                    cols.append(self.g.node_feats[src].astype(np.float64))
                    cols.append(self.g.node_feats[dst].astype(np.float64))
                blocks.append(np.column_stack(cols))
            else:  # line
                blocks.append(np.column_stack([
                    self.emb.vectors[src].astype(np.float64),
                    self.emb.vectors[dst].astype(np.float64),
                ]))
        mat = np.column_stack(blocks) if blocks else np.zeros((len(src), 0))
        df = pd.DataFrame(mat, columns=list(self.columns))
        if labels is not None:
            df["label"] = np.asarray(labels, dtype=np.int64)
        return df

    def row(self, q) -> FeatureRow:
        """Feature row for one query-like object with src/dst/etype fields."""
        df = self.matrix(np.array([q.src]), np.array([q.dst]), np.array([q.etype]))
        return FeatureRow(names=self.columns, values=df.to_numpy()[0])


def featurize(g: MultiGraph, emb: Optional[EmbeddingTable], q,
              families=DEFAULT_FAMILIES) -> FeatureRow:
    """One-shot feature row (builds a throwaway extractor; batch work should
    use FeatureExtractor directly)."""
    return FeatureExtractor(g, emb, families=families).row(q)


def save_features(df: pd.DataFrame, path) -> None:
    # polars writes shortest-roundtrip floats at a fraction of pandas' cost
    pl.from_pandas(df).write_csv(str(path))


def load_features(path) -> pd.DataFrame:
    return pl.read_csv(str(path)).to_pandas()
