import numpy as np
import pytest

from tlp import ingest
from tlp.graph import load_graph, save_graph
from tlp.ingest import DatasetKind, IngestError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestParseEdges:
    def test_kind_b_offset_and_shift(self, tmp_path):
        # users {0, 2}, items {0, 1}: offset is 1 + max user id = 3
        p = write(tmp_path / "e.csv", "0,0,1,100\n2,1,1,200\n")
        res = ingest.parse_edges(p, DatasetKind.B)
        assert res.offset.offset_u == 3
        assert [(e.src, e.dst) for e in res.edges] == [(0, 3), (2, 4)]

    def test_empty_file_rejected(self, tmp_path):
        p = write(tmp_path / "e.csv", "")
        with pytest.raises(IngestError, match="no edges"):
            ingest.parse_edges(p, DatasetKind.A)

    def test_all_empty_feature_cells_mean_absent(self, tmp_path):
        row_plain = "1,2,0,20," + ",".join([""] * 768)
        p = write(tmp_path / "e.csv", "0,1,0,10\n" + row_plain + "\n")
        res = ingest.parse_edges(p, DatasetKind.B)
        assert res.edge_feat_nonempty == 0
        assert all(e.feat is None for e in res.edges)
        assert res.malformed_rows == 0

    def test_partial_feature_row_is_malformed_but_kept(self, tmp_path):
        cells = [""] * 768
        cells[5] = "1.5"
        p = write(tmp_path / "e.csv", "0,1,0,10," + ",".join(cells) + "\n")
        res = ingest.parse_edges(p, DatasetKind.B)
        assert res.malformed_rows == 1
        assert len(res.edges) == 1 and res.edges[0].feat is None

    def test_full_feature_vector_row(self, tmp_path):
        feat = ",".join(str(float(i)) for i in range(768))
        p = write(tmp_path / "e.csv", f"0,1,0,10,{feat}\n1,0,0,20\n")
        res = ingest.parse_edges(p, DatasetKind.B)
        assert res.edge_feat_dim == 768
        assert res.edge_feat_nonempty == 1
        assert res.edges[0].feat is not None and len(res.edges[0].feat) == 768
        assert res.edges[1].feat is None

    def test_non_integer_field_rejected_with_line(self, tmp_path):
        p = write(tmp_path / "e.csv", "0,1,0,10\n0,x,0,10\n")
        with pytest.raises(IngestError, match=r":2"):
            ingest.parse_edges(p, DatasetKind.A)

    def test_kind_a_dense_reindex(self, tmp_path):
        p = write(tmp_path / "e.csv", "100,7,0,1\n7,900,1,2\n")
        res = ingest.parse_edges(p, DatasetKind.A)
        # sorted raw ids 7,100,900 -> 0,1,2
        assert res.mapper.node_map == {7: 0, 100: 1, 900: 2}
        assert [(e.src, e.dst) for e in res.edges] == [(1, 0), (0, 2)]
        assert res.mapper.sentinel_id == 3
        assert res.mapper.num_nodes == 4

    def test_order_preserving(self, tmp_path):
        rows = "\n".join(f"{i},{i + 1},0,{i}" for i in range(10))
        p = write(tmp_path / "e.csv", rows + "\n")
        res = ingest.parse_edges(p, DatasetKind.A)
        assert [e.ts for e in res.edges] == list(range(10))

    def test_round_trip_edge_multiset(self, tmp_path, rng):
        rows = []
        for _ in range(200):
            rows.append((int(rng.integers(0, 30)), int(rng.integers(0, 30)),
                         int(rng.integers(0, 4)), int(rng.integers(0, 1000))))
        p = write(tmp_path / "e.csv", "\n".join(",".join(map(str, r)) for r in rows) + "\n")
        res = ingest.parse_edges(p, DatasetKind.A)
        g = ingest.graph_from_edges(res)
        save_graph(g, tmp_path / "g.tlpg")
        g2 = load_graph(tmp_path / "g.tlpg")
        multiset = sorted(zip(g.edge_src, g.edge_dst, g.edge_etype, g.edge_ts))
        multiset2 = sorted(zip(g2.edge_src, g2.edge_dst, g2.edge_etype, g2.edge_ts))
        assert multiset == multiset2
        assert len(multiset) == len(rows)


class TestParseQueries:
    def _mapper_b(self, tmp_path):
        p = write(tmp_path / "e.csv", "0,0,1,100\n2,1,1,200\n")
        return ingest.parse_edges(p, DatasetKind.B).mapper

    def test_labeled_row(self, tmp_path):
        edges = write(tmp_path / "e.csv", "1,2,5,0,0\n".replace(" ", ""))
        res = ingest.parse_edges(write(tmp_path / "t.csv", "1,2,5,10\n2,3,0,20\n"),
                                 DatasetKind.A)
        q = write(tmp_path / "q.csv", "1,2,5,1000,2000,1\n")
        out = ingest.parse_queries(q, True, res.mapper)
        query = out.queries[0]
        assert (query.src, query.dst, query.etype) == (0, 1, 5)
        assert (query.start_ts, query.end_ts, query.label) == (1000, 2000, 1)

    def test_start_after_end_rejected(self, tmp_path):
        res = ingest.parse_edges(write(tmp_path / "t.csv", "1,2,5,10\n"), DatasetKind.A)
        q = write(tmp_path / "q.csv", "1,2,5,2000,1000\n")
        with pytest.raises(IngestError, match="start_ts"):
            ingest.parse_queries(q, False, res.mapper)

    def test_kind_b_query_remap(self, tmp_path):
        mapper = self._mapper_b(tmp_path)
        q = write(tmp_path / "q.csv", "0,1,1,0,9,0\n")
        out = ingest.parse_queries(q, True, mapper)
        assert (out.queries[0].src, out.queries[0].dst) == (0, 4)

    def test_missing_label_rejected(self, tmp_path):
        mapper = self._mapper_b(tmp_path)
        q = write(tmp_path / "q.csv", "0,1,1,0,9\n")
        with pytest.raises(IngestError, match="label"):
            ingest.parse_queries(q, True, mapper)

    def test_unseen_node_maps_to_sentinel(self, tmp_path):
        res = ingest.parse_edges(write(tmp_path / "t.csv", "1,2,0,10\n"), DatasetKind.A)
        q = write(tmp_path / "q.csv", "1,99,0,0,9\n")
        out = ingest.parse_queries(q, False, res.mapper)
        assert out.unseen_nodes == 1
        assert out.queries[0].dst == res.mapper.sentinel_id

    def test_kind_b_unseen_item(self, tmp_path):
        mapper = self._mapper_b(tmp_path)
        q = write(tmp_path / "q.csv", "0,50,1,0,9\n")  # item 50 unseen
        out = ingest.parse_queries(q, False, mapper)
        assert out.unseen_nodes == 1
        assert out.queries[0].dst == mapper.sentinel_id


class TestNodeFeatures:
    def test_parse_and_map(self, tmp_path):
        res = ingest.parse_edges(write(tmp_path / "t.csv", "10,20,0,1\n"), DatasetKind.A)
        nf = write(tmp_path / "nf.csv", "10,1.0,2.0\n20,3.0,4.0\n99,8.0,9.0\n")
        table = ingest.parse_node_features(nf, res.mapper)
        assert table.shape == (3, 2)  # 2 nodes + sentinel
        np.testing.assert_allclose(table[res.mapper.node_map[10]], [1.0, 2.0])
        np.testing.assert_allclose(table[res.mapper.sentinel_id], [0.0, 0.0])

    def test_inconsistent_width_rejected(self, tmp_path):
        res = ingest.parse_edges(write(tmp_path / "t.csv", "0,1,0,1\n"), DatasetKind.A)
        nf = write(tmp_path / "nf.csv", "0,1.0,2.0\n1,3.0\n")
        with pytest.raises(IngestError, match="expected 2"):
            ingest.parse_node_features(nf, res.mapper)


class TestIdMapSidecar:
    def test_round_trip_kind_a(self, tmp_path):
        res = ingest.parse_edges(write(tmp_path / "t.csv", "100,7,2,1\n"), DatasetKind.A)
        ingest.save_id_map(res.mapper, res, tmp_path / "map.txt")
        m2 = ingest.load_id_map(tmp_path / "map.txt")
        assert m2.kind is DatasetKind.A
        assert m2.node_map == res.mapper.node_map
        assert m2.sentinel_id == res.mapper.sentinel_id
        assert m2.num_edge_types == res.mapper.num_edge_types

    def test_round_trip_kind_b(self, tmp_path):
        res = ingest.parse_edges(write(tmp_path / "t.csv", "0,0,1,100\n2,1,1,200\n"),
                                 DatasetKind.B)
        ingest.save_id_map(res.mapper, res, tmp_path / "map.txt")
        m2 = ingest.load_id_map(tmp_path / "map.txt")
        assert m2.kind is DatasetKind.B
        assert m2.offset.offset_u == 3
        assert m2.map_node(1, is_item=True) == (4, True)
