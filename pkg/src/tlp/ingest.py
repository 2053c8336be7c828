"""CSV ingestion: edge lists, node features, and labeled/unlabeled queries.

Two dataset shapes are supported.  Kind A is an event graph with per-node
features; its (possibly sparse) raw ids are densified through a re-index
map.  Kind B is a bipartite user-item graph; item ids are shifted past the
user range so both sides live in one id space.  A sentinel node with zero
degree is reserved at the end of the id space for query endpoints never
seen at training time.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import BipartiteOffset, MultiGraph, TemporalEdge, build_graph_arrays, remap_item_id


class IngestError(ValueError):
    pass


class DatasetKind(enum.Enum):
    A = "A"  # node-featured event graph
    B = "B"  # bipartite user-item graph, edge features possible


@dataclass(frozen=True)
class Query:
    """One test question: does (src, dst, etype) appear within [start_ts, end_ts]?"""

    src: int
    dst: int
    etype: int
    start_ts: int
    end_ts: int
    label: Optional[int] = None

    def __post_init__(self):
        if self.start_ts > self.end_ts:
            raise ValueError(f"start_ts {self.start_ts} > end_ts {self.end_ts}")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass
class CsvLayout:
    """Column positions for the headerless competition layout; all overridable."""

    delimiter: str = ","
    has_header: bool = False
    # edge files: src, dst, etype, ts [, edge-feature columns]
    src: int = 0
    dst: int = 1
    etype: int = 2
    ts: int = 3
    # query files: src, dst, etype, start_ts, end_ts [, label]
    start_ts: int = 3
    end_ts: int = 4
    label: int = 5


@dataclass
class IdMapper:
    """Raw-id to dense-id translation shared by edges and queries.

    For kind A, ``node_map`` densifies sorted raw ids.  For kind B, users
    map to themselves and items are shifted by ``offset``.  Ids that cannot
    be resolved map to ``sentinel_id`` (a reserved zero-degree node).
    """

    kind: DatasetKind
    num_nodes: int            # includes the sentinel slot
    sentinel_id: int
    num_edge_types: int
    node_map: Optional[dict] = None          # kind A: raw -> dense
    offset: Optional[BipartiteOffset] = None  # kind B

    def map_node(self, raw: int, is_item: bool = False) -> tuple[int, bool]:
        """Return (dense_id, seen).  Unseen ids resolve to the sentinel."""
        if self.kind is DatasetKind.A:
            dense = self.node_map.get(raw)
            if dense is None:
                return self.sentinel_id, False
            return dense, True
        dense = remap_item_id(raw, is_item, self.offset)
        if is_item:
            if 0 <= dense < self.sentinel_id:
                return dense, True
            return self.sentinel_id, False
        # users keep their id; holes below offset_u are valid cold ids
        if 0 <= raw < self.offset.offset_u:
            return raw, True
        return self.sentinel_id, False


@dataclass
class EdgeParseResult:
    edges: list
    offset: Optional[BipartiteOffset]
    mapper: IdMapper
    malformed_rows: int
    edge_feat_dim: int
    edge_feat_nonempty: int
    node_feats: Optional[np.ndarray] = None

    def raw_id_map(self) -> list[tuple[str, int, int]]:
        if self.mapper.kind is DatasetKind.A:
            return [("n", raw, dense) for raw, dense in sorted(self.mapper.node_map.items())]
        off = self.offset.offset_u
        rows = [("u", u, u) for u in range(off)]
        rows += [("i", i, i + off) for i in range(self.mapper.sentinel_id - off)]
        return rows


@dataclass
class QueryParseResult:
    queries: list
    unseen_nodes: int
    malformed_rows: int


def _read_rows(path, layout: CsvLayout):
    """Yield (line_number, cells) for every non-blank line."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        for lineno, line in enumerate(f, start=1):
            if layout.has_header and lineno == 1:
                continue
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            yield lineno, line.split(layout.delimiter)


def _int_field(cells, idx, name, path, lineno) -> int:
    if idx >= len(cells):
        raise IngestError(f"{path}:{lineno}: missing column {idx} ({name})")
    try:
        return int(cells[idx])
    except ValueError:
        raise IngestError(
            f"{path}:{lineno}: non-integer {name} field {cells[idx]!r}") from None


def parse_edges(path, kind: DatasetKind, layout: Optional[CsvLayout] = None) -> EdgeParseResult:
    """Parse a training edge CSV into remapped TemporalEdges.

    Kind B shifts item (dst) ids by 1 + max user id and reports the offset;
    kind A densifies ids through a sorted re-index map.  Trailing cells
    beyond the core columns are edge features, stored only when non-empty.
    Rows whose feature cells fail to parse keep the core edge and count as
    malformed.
    """
    layout = layout or CsvLayout()
    core = (layout.src, layout.dst, layout.etype, layout.ts)
    n_core = max(core) + 1
    raw = []
    feats = []
    malformed = 0
    feat_dim = 0
    feat_nonempty = 0
    for lineno, cells in _read_rows(path, layout):
        s = _int_field(cells, layout.src, "src", path, lineno)
        d = _int_field(cells, layout.dst, "dst", path, lineno)
        e = _int_field(cells, layout.etype, "etype", path, lineno)
        t = _int_field(cells, layout.ts, "ts", path, lineno)
        if s < 0 or d < 0 or e < 0:
            raise IngestError(f"{path}:{lineno}: negative id/etype")
        raw.append((s, d, e, t))
        extra = cells[n_core:]
        vec = None
        if extra and any(c.strip() for c in extra):
            try:
                vec = np.array([float(c) for c in extra], dtype=np.float32)
                feat_dim = max(feat_dim, len(vec))
                feat_nonempty += 1
            except ValueError:
                malformed += 1
                vec = None
        feats.append(vec)
    if not raw:
        raise IngestError(f"{path}: no edges")

    src = np.array([r[0] for r in raw], dtype=np.int64)
    dst = np.array([r[1] for r in raw], dtype=np.int64)
    et = np.array([r[2] for r in raw], dtype=np.int64)
    ts = np.array([r[3] for r in raw], dtype=np.int64)
    num_edge_types = int(et.max()) + 1

    if kind is DatasetKind.B:
        offset = BipartiteOffset(int(src.max()) + 1)
        dst = dst + offset.offset_u
        sentinel = int(dst.max()) + 1
        mapper = IdMapper(kind, num_nodes=sentinel + 1, sentinel_id=sentinel,
                          num_edge_types=num_edge_types, offset=offset)
    else:
        offset = None
        raw_ids = np.unique(np.concatenate([src, dst]))
        node_map = {int(r): i for i, r in enumerate(raw_ids)}
        src = np.searchsorted(raw_ids, src)
        dst = np.searchsorted(raw_ids, dst)
        sentinel = len(raw_ids)
        mapper = IdMapper(kind, num_nodes=sentinel + 1, sentinel_id=sentinel,
                          num_edge_types=num_edge_types, node_map=node_map)

    edges = [TemporalEdge(int(src[i]), int(dst[i]), int(et[i]), int(ts[i]), feats[i])
             for i in range(len(raw))]
    return EdgeParseResult(edges=edges, offset=offset, mapper=mapper,
                           malformed_rows=malformed, edge_feat_dim=feat_dim,
                           edge_feat_nonempty=feat_nonempty)


def parse_queries(path, labeled: bool, mapper: IdMapper,
                  layout: Optional[CsvLayout] = None) -> QueryParseResult:
    """Parse a query CSV, remapping ids consistently with the training graph.

    Unknown raw node ids are mapped to the reserved sentinel and counted
    rather than rejected (test nodes may be unseen).  A missing label column
    when labeled=True is an error, as is start_ts > end_ts.
    """
    layout = layout or CsvLayout()
    queries = []
    unseen = 0
    malformed = 0
    for lineno, cells in _read_rows(path, layout):
        s_raw = _int_field(cells, layout.src, "src", path, lineno)
        d_raw = _int_field(cells, layout.dst, "dst", path, lineno)
        e = _int_field(cells, layout.etype, "etype", path, lineno)
        t0 = _int_field(cells, layout.start_ts, "start_ts", path, lineno)
        t1 = _int_field(cells, layout.end_ts, "end_ts", path, lineno)
        label = None
        if labeled:
            label = _int_field(cells, layout.label, "label", path, lineno)
        s, s_seen = mapper.map_node(s_raw, is_item=False)
        d, d_seen = mapper.map_node(d_raw, is_item=(mapper.kind is DatasetKind.B))
        unseen += (not s_seen) + (not d_seen)
        if t0 > t1:
            raise IngestError(f"{path}:{lineno}: start_ts {t0} > end_ts {t1}")
        queries.append(Query(s, d, e, t0, t1, label))
    return QueryParseResult(queries=queries, unseen_nodes=unseen, malformed_rows=malformed)


def parse_node_features(path, mapper: IdMapper, layout: Optional[CsvLayout] = None) -> np.ndarray:
    """Parse per-node feature rows (node_id, f0, f1, ...) into a dense table.

    Rows for unknown ids are ignored; nodes without a row (including the
    sentinel) get zeros.
    """
    layout = layout or CsvLayout()
    dim = None
    table = None
    for lineno, cells in _read_rows(path, layout):
        raw = _int_field(cells, 0, "node_id", path, lineno)
        vals = cells[1:]
        if dim is None:
            dim = len(vals)
            table = np.zeros((mapper.num_nodes, dim), dtype=np.float32)
        if len(vals) != dim:
            raise IngestError(f"{path}:{lineno}: expected {dim} features, got {len(vals)}")
        dense, seen = mapper.map_node(raw)
        if not seen:
            continue
        try:
            table[dense] = [float(v) for v in vals]
        except ValueError:
            raise IngestError(f"{path}:{lineno}: non-numeric feature cell") from None
    if table is None:
        raise IngestError(f"{path}: no feature rows")
    return table


def graph_from_edges(result: EdgeParseResult, directed: bool = False,
                     node_feats: Optional[np.ndarray] = None) -> MultiGraph:
    """Build the training MultiGraph (sentinel slot included) from a parse result."""
    edges = result.edges
    src = np.fromiter((e.src for e in edges), dtype=np.int64, count=len(edges))
    dst = np.fromiter((e.dst for e in edges), dtype=np.int64, count=len(edges))
    et = np.fromiter((e.etype for e in edges), dtype=np.int64, count=len(edges))
    ts = np.fromiter((e.ts for e in edges), dtype=np.int64, count=len(edges))
    feats = [e.feat for e in edges]
    if all(f is None for f in feats):
        feats = None
    return build_graph_arrays(src, dst, et, ts, result.mapper.num_nodes,
                              result.mapper.num_edge_types, directed=directed,
                              node_feats=node_feats, edge_feats=feats,
                              raw_id_map=result.raw_id_map())


def save_id_map(mapper: IdMapper, result: EdgeParseResult, path) -> None:
    """Write the sidecar re-index map: role,raw_id,dense_id per line.

    Header comments carry the dataset kind, node counts, and the bipartite
    offset so the mapper round-trips.
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# kind={mapper.kind.value}\n")
        f.write(f"# num_nodes={mapper.num_nodes}\n")
        f.write(f"# sentinel_id={mapper.sentinel_id}\n")
        f.write(f"# num_edge_types={mapper.num_edge_types}\n")
        if mapper.offset is not None:
            f.write(f"# offset_u={mapper.offset.offset_u}\n")
        for role, raw, dense in result.raw_id_map():
            f.write(f"{role},{raw},{dense}\n")


def load_id_map(path) -> IdMapper:
    meta = {}
    node_map = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
                continue
            role, raw, dense = line.split(",")
            if role == "n":
                node_map[int(raw)] = int(dense)
    kind = DatasetKind(meta["kind"])
    offset = BipartiteOffset(int(meta["offset_u"])) if "offset_u" in meta else None
    return IdMapper(kind, num_nodes=int(meta["num_nodes"]),
                    sentinel_id=int(meta["sentinel_id"]),
                    num_edge_types=int(meta["num_edge_types"]),
                    node_map=node_map if kind is DatasetKind.A else None,
                    offset=offset)
