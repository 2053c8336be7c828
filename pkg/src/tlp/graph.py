"""Temporal multigraph container with CSR adjacency.

Node ids are dense, 0-based integers.  Parallel edges (same endpoints,
possibly same type and timestamp) are kept -- multiplicity carries signal
downstream.  A graph is immutable once built: every array is marked
read-only and all query methods are safe for concurrent readers.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

GRAPH_MAGIC = b"TLPG"
GRAPH_FORMAT_VERSION = 1

# Fixed-width little-endian edge record used by the binary graph file.
EDGE_RECORD_DTYPE = np.dtype([("src", "<u4"), ("dst", "<u4"), ("etype", "<u2"), ("ts", "<i8")])


@dataclass(frozen=True)
class TemporalEdge:
    """One interaction: src -- dst of a given type at time ts.

    ``feat`` is an optional per-edge feature vector; it lives only in memory
    (the binary graph file stores the four core fields).
    """

    src: int
    dst: int
    etype: int = 0
    ts: int = 0
    feat: Optional[np.ndarray] = None


@dataclass(frozen=True)
class BipartiteOffset:
    """Shift applied to item ids so users and items share one id space.

    ``offset_u`` is 1 + the maximum user id observed, which makes the remap
    injective over the union of user and item ids.
    """

    offset_u: int

    def __post_init__(self):
        if self.offset_u < 1:
            raise ValueError(f"offset_u must be >= 1, got {self.offset_u}")


def remap_item_id(raw_id: int, is_item: bool, offset: BipartiteOffset) -> int:
    """Map a raw bipartite id into the merged id space.

    Users keep their id unchanged; items are shifted past the user range.
    """
    if raw_id < 0:
        raise ValueError(f"raw_id must be >= 0, got {raw_id}")
    return raw_id + offset.offset_u if is_item else raw_id


class MultiGraph:
    """Immutable typed, timestamped multigraph over dense node ids.

    Adjacency is CSR: node u's incident slots live at
    ``csr_offsets[u]:csr_offsets[u+1]`` in the parallel arrays
    (``csr_nbr``, ``csr_etype``, ``csr_ts``), canonically sorted by
    (neighbor, etype, ts) so every downstream computation is reproducible.
    Undirected graphs store each edge in both endpoints' lists (2 slots per
    edge); directed graphs store 1 slot per edge.
    """

    def __init__(self, num_nodes, num_edge_types, edge_src, edge_dst, edge_etype,
                 edge_ts, directed=False, node_feats=None, edge_feats=None,
                 raw_id_map=None):
        self.num_nodes = int(num_nodes)
        self.num_edge_types = int(num_edge_types)
        self.directed = bool(directed)
        self.edge_src = np.ascontiguousarray(edge_src, dtype=np.int64)
        self.edge_dst = np.ascontiguousarray(edge_dst, dtype=np.int64)
        self.edge_etype = np.ascontiguousarray(edge_etype, dtype=np.int64)
        self.edge_ts = np.ascontiguousarray(edge_ts, dtype=np.int64)
        self.node_feats = None if node_feats is None else np.asarray(node_feats, dtype=np.float32)
        # edge_feats: optional list aligned with edges; entries are vectors or None
        self.edge_feats = edge_feats
        # raw_id_map: list of (role, raw_id, dense_id); role in {"n","u","i"}
        self.raw_id_map = raw_id_map

        self._validate()
        self._build_csr()
        for arr in (self.edge_src, self.edge_dst, self.edge_etype, self.edge_ts,
                    self.csr_offsets, self.csr_nbr, self.csr_etype, self.csr_ts):
            arr.setflags(write=False)
        if self.node_feats is not None:
            self.node_feats.setflags(write=False)

    def _validate(self):
        n, t = self.num_nodes, self.num_edge_types
        if n < 0 or t < 0:
            raise ValueError("num_nodes and num_edge_types must be non-negative")
        m = len(self.edge_src)
        if not (len(self.edge_dst) == len(self.edge_etype) == len(self.edge_ts) == m):
            raise ValueError("edge column arrays must have equal length")
        for name, col, bound in (("src", self.edge_src, n), ("dst", self.edge_dst, n),
                                 ("etype", self.edge_etype, t)):
            bad = np.flatnonzero((col < 0) | (col >= bound))
            if bad.size:
                i = int(bad[0])
                raise ValueError(
                    f"edge {i}: {name}={int(col[i])} out of range [0, {bound})")
        if self.node_feats is not None and self.node_feats.shape[0] != n:
            raise ValueError("node_feats must have one row per node")

    def _build_csr(self):
        if self.directed:
            node = self.edge_src
            nbr = self.edge_dst
            et = self.edge_etype
            ts = self.edge_ts
        else:
            node = np.concatenate([self.edge_src, self.edge_dst])
            nbr = np.concatenate([self.edge_dst, self.edge_src])
            et = np.concatenate([self.edge_etype, self.edge_etype])
            ts = np.concatenate([self.edge_ts, self.edge_ts])
        order = np.lexsort((ts, et, nbr, node))
        self.csr_nbr = nbr[order]
        self.csr_etype = et[order]
        self.csr_ts = ts[order]
        counts = np.bincount(node, minlength=self.num_nodes)
        self.csr_offsets = np.zeros(self.num_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=self.csr_offsets[1:])

    @property
    def num_edges(self) -> int:
        return len(self.edge_src)

    @property
    def num_slots(self) -> int:
        return len(self.csr_nbr)

    def degree(self, u: int) -> int:
        self._check_node(u)
        return int(self.csr_offsets[u + 1] - self.csr_offsets[u])

    def degrees(self) -> np.ndarray:
        return np.diff(self.csr_offsets)

    def neighbors(self, u: int) -> list[tuple[int, int, int]]:
        """All adjacency slots of u as (neighbor, etype, ts), in canonical order."""
        self._check_node(u)
        lo, hi = int(self.csr_offsets[u]), int(self.csr_offsets[u + 1])
        return list(zip(self.csr_nbr[lo:hi].tolist(),
                        self.csr_etype[lo:hi].tolist(),
                        self.csr_ts[lo:hi].tolist()))

    def edge(self, i: int) -> TemporalEdge:
        feat = None
        if self.edge_feats is not None:
            feat = self.edge_feats[i]
        return TemporalEdge(int(self.edge_src[i]), int(self.edge_dst[i]),
                            int(self.edge_etype[i]), int(self.edge_ts[i]), feat)

    def edges(self) -> Iterator[TemporalEdge]:
        for i in range(self.num_edges):
            yield self.edge(i)

    def _check_node(self, u: int):
        if not 0 <= u < self.num_nodes:
            raise ValueError(f"node id {u} out of range [0, {self.num_nodes})")

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return (f"MultiGraph({kind}, nodes={self.num_nodes}, edges={self.num_edges}, "
                f"edge_types={self.num_edge_types})")


def build_graph(edges: Iterable[TemporalEdge], num_nodes: int, num_edge_types: int,
                directed: bool = False, node_feats=None) -> MultiGraph:
    """Build an immutable CSR multigraph from an edge list.

    Rejects any edge whose endpoint or type is out of range, naming the
    offending edge index.
    """
    edges = list(edges)
    src = np.fromiter((e.src for e in edges), dtype=np.int64, count=len(edges))
    dst = np.fromiter((e.dst for e in edges), dtype=np.int64, count=len(edges))
    et = np.fromiter((e.etype for e in edges), dtype=np.int64, count=len(edges))
    ts = np.fromiter((e.ts for e in edges), dtype=np.int64, count=len(edges))
    feats = [e.feat for e in edges]
    if all(f is None for f in feats):
        feats = None
    return MultiGraph(num_nodes, num_edge_types, src, dst, et, ts,
                      directed=directed, node_feats=node_feats, edge_feats=feats)


def build_graph_arrays(edge_src, edge_dst, edge_etype, edge_ts, num_nodes,
                       num_edge_types, directed=False, node_feats=None,
                       edge_feats=None, raw_id_map=None) -> MultiGraph:
    """Columnar fast path for graph construction (same contract as build_graph)."""
    return MultiGraph(num_nodes, num_edge_types, edge_src, edge_dst, edge_etype,
                      edge_ts, directed=directed, node_feats=node_feats,
                      edge_feats=edge_feats, raw_id_map=raw_id_map)


_ROLE_TO_CODE = {"n": 0, "u": 1, "i": 2}
_CODE_TO_ROLE = {v: k for k, v in _ROLE_TO_CODE.items()}


def save_graph(g: MultiGraph, path) -> None:
    """Write the binary graph file.

    Layout: magic "TLPG", version u32, num_nodes u32, num_edge_types u32,
    directedness u8, edge count u64, edge records (src u32, dst u32,
    etype u16, ts i64), node-feature block (dim u32, row-major f32; dim 0
    when absent), then the raw-id re-indexing map (count u64, records of
    role u8, raw i64, dense u32).
    """
    with open(path, "wb") as f:
        f.write(GRAPH_MAGIC)
        f.write(struct.pack("<IIIBQ", GRAPH_FORMAT_VERSION, g.num_nodes,
                            g.num_edge_types, 0 if g.directed else 1, g.num_edges))
        rec = np.empty(g.num_edges, dtype=EDGE_RECORD_DTYPE)
        rec["src"] = g.edge_src
        rec["dst"] = g.edge_dst
        rec["etype"] = g.edge_etype
        rec["ts"] = g.edge_ts
        f.write(rec.tobytes())
        if g.node_feats is None:
            f.write(struct.pack("<I", 0))
        else:
            f.write(struct.pack("<I", g.node_feats.shape[1]))
            f.write(np.ascontiguousarray(g.node_feats, dtype="<f4").tobytes())
        id_map = g.raw_id_map or []
        f.write(struct.pack("<Q", len(id_map)))
        for role, raw, dense in id_map:
            f.write(struct.pack("<BqI", _ROLE_TO_CODE[role], int(raw), int(dense)))


def load_graph(path) -> MultiGraph:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != GRAPH_MAGIC:
            raise ValueError(f"{path}: not a graph file (bad magic {magic!r})")
        version, num_nodes, num_etypes, undirected, num_edges = struct.unpack(
            "<IIIBQ", f.read(struct.calcsize("<IIIBQ")))
        if version != GRAPH_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported graph format version {version}")
        rec = np.frombuffer(f.read(num_edges * EDGE_RECORD_DTYPE.itemsize),
                            dtype=EDGE_RECORD_DTYPE, count=num_edges)
        (feat_dim,) = struct.unpack("<I", f.read(4))
        node_feats = None
        if feat_dim:
            buf = f.read(num_nodes * feat_dim * 4)
            node_feats = np.frombuffer(buf, dtype="<f4").reshape(num_nodes, feat_dim)
        (map_len,) = struct.unpack("<Q", f.read(8))
        raw_id_map = None
        if map_len:
            raw_id_map = []
            sz = struct.calcsize("<BqI")
            for _ in range(map_len):
                role, raw, dense = struct.unpack("<BqI", f.read(sz))
                raw_id_map.append((_CODE_TO_ROLE[role], raw, dense))
    return MultiGraph(num_nodes, num_etypes,
                      rec["src"].astype(np.int64), rec["dst"].astype(np.int64),
                      rec["etype"].astype(np.int64), rec["ts"].astype(np.int64),
                      directed=(undirected == 0), node_feats=node_feats,
                      raw_id_map=raw_id_map)
