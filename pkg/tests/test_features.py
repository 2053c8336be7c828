import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tlp import features
from tlp.embedding import EmbeddingTable
from tlp.graph import TemporalEdge, build_graph
from tlp.ingest import Query
from conftest import graph_of, random_edge_list
from oracles import brute_pair, brute_triplet, brute_unary, two_hop_matrix


def emb_for(g, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    return EmbeddingTable(dim=dim, vectors=rng.normal(size=(g.num_nodes, dim))
                          .astype(np.float32), order="first")


class TestCrossing:
    def test_identical_unit(self):
        cos, dot = features.crossing_features([1.0, 0.0], [1.0, 0.0])
        assert (cos, dot) == (1.0, 1.0)

    def test_orthogonal(self):
        cos, dot = features.crossing_features([1.0, 0.0], [0.0, 1.0])
        assert (cos, dot) == (0.0, 0.0)

    def test_hand_arithmetic(self):
        cos, dot = features.crossing_features([3.0, 4.0], [4.0, 3.0])
        assert dot == pytest.approx(24.0, abs=1e-12)
        assert cos == pytest.approx(24.0 / 25.0, abs=1e-12)

    def test_zero_vector_convention(self):
        cos, dot = features.crossing_features([0.0, 0.0], [1.0, 2.0])
        assert (cos, dot) == (0.0, 0.0)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            features.crossing_features([1.0], [1.0, 2.0])

    @given(st.lists(st.integers(-5, 5), min_size=2, max_size=6),
           st.lists(st.integers(-5, 5), min_size=2, max_size=6))
    def test_cosine_bounded(self, a, b):
        n = min(len(a), len(b))
        cos, _ = features.crossing_features(np.array(a[:n], float),
                                            np.array(b[:n], float))
        assert -1.0 - 1e-12 <= cos <= 1.0 + 1e-12


class TestScalarOps:
    def test_isolated_node(self):
        g = build_graph([TemporalEdge(0, 1)], 3, 1)
        assert features.node_unary(g, 2) == (0, 0, 0)

    def test_parallel_edges_unary(self):
        g = build_graph([TemporalEdge(0, 1, 1), TemporalEdge(0, 1, 2)], 2, 3)
        assert features.node_unary(g, 0) == (2, 1, 2)

    def test_triangle_vertex(self):
        g = build_graph([TemporalEdge(0, 1), TemporalEdge(1, 2), TemporalEdge(2, 0)], 3, 1)
        assert features.node_unary(g, 0) == (2, 2, 1)

    def test_pair_disconnected(self):
        g = build_graph([TemporalEdge(0, 1)], 4, 1)
        assert features.pair_binary(g, 2, 3) == (0, 0, 0)

    def test_pair_two_hop_path(self):
        g = build_graph([TemporalEdge(0, 1), TemporalEdge(1, 2)], 3, 1)
        assert features.pair_binary(g, 0, 2) == (0, 1, 0)

    def test_pair_multiplicity(self):
        # u-v 2 parallel (types 0, 1), u-w 2 parallel, w-v 3 parallel
        edges = [TemporalEdge(0, 1, 0), TemporalEdge(0, 1, 1),
                 TemporalEdge(0, 2), TemporalEdge(0, 2),
                 TemporalEdge(2, 1), TemporalEdge(2, 1), TemporalEdge(2, 1)]
        g = build_graph(edges, 3, 2)
        assert features.pair_binary(g, 0, 1) == (2, 6, 2)

    def test_triplet_counts(self):
        edges = [TemporalEdge(0, 1, 1)] * 3 + [TemporalEdge(1, 0, 0)]
        g = build_graph(edges, 2, 2)
        assert features.triplet_count(g, 0, 1, 1) == 3
        assert features.triplet_count(g, 1, 0, 1) == 3  # undirected match
        assert features.triplet_count(g, 0, 1, 0) == 1
        assert features.triplet_count(g, 0, 0, 1) == 0

    def test_self_loop_conventions(self):
        g = build_graph([TemporalEdge(0, 0, 1), TemporalEdge(0, 1, 0)], 2, 2)
        assert features.node_unary(g, 0) == (3, 2, 2)  # loop holds 2 slots
        assert features.pair_binary(g, 0, 0)[0] == 1   # but counts once
        assert features.triplet_count(g, 0, 0, 1) == 1


class TestBruteForceEquivalence:
    def test_random_graphs(self, rng):
        for _ in range(10):
            edges, n, t = random_edge_list(rng, max_nodes=30, max_edges=120,
                                           self_loops=True)
            g = graph_of(edges, n, t)
            nodes = range(n)
            for u in nodes:
                assert features.node_unary(g, u) == brute_unary(edges, u)
            for _ in range(30):
                u = int(rng.integers(0, n))
                v = int(rng.integers(0, n))
                r = int(rng.integers(0, t))
                assert features.pair_binary(g, u, v) == brute_pair(edges, u, v, nodes)
                assert features.triplet_count(g, u, v, r) == brute_triplet(edges, u, v, r)

    def test_two_hop_matches_matrix_oracle(self, rng):
        edges, n, t = random_edge_list(rng, max_nodes=25, max_edges=100,
                                       self_loops=True)
        g = graph_of(edges, n, t)
        M = two_hop_matrix(edges, n)
        fx = features.FeatureExtractor(g, families=("subgraph",))
        us, vs = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        got = fx.two_hop(us.ravel(), vs.ravel()).reshape(n, n)
        np.testing.assert_array_equal(got, M)

    def test_symmetry_undirected(self, rng):
        edges, n, t = random_edge_list(rng, max_nodes=25, max_edges=100)
        g = graph_of(edges, n, t)
        for _ in range(40):
            u = int(rng.integers(0, n))
            v = int(rng.integers(0, n))
            r = int(rng.integers(0, t))
            assert features.pair_binary(g, u, v) == features.pair_binary(g, v, u)
            assert features.triplet_count(g, u, v, r) == features.triplet_count(g, v, u, r)


class TestExtractorBatch:
    def test_matches_scalar_ops(self, rng):
        edges, n, t = random_edge_list(rng, max_nodes=30, max_edges=150)
        g = graph_of(edges, n, t)
        emb = emb_for(g)
        fx = features.FeatureExtractor(g, emb,
                                       families=("subgraph", "crossing", "raw", "line"))
        us = rng.integers(0, n, size=60)
        vs = rng.integers(0, n, size=60)
        rs = rng.integers(0, t, size=60)
        df = fx.matrix(us, vs, rs)
        for i in range(60):
            u, v, r = int(us[i]), int(vs[i]), int(rs[i])
            du = features.node_unary(g, u)
            dv = features.node_unary(g, v)
            pb = features.pair_binary(g, u, v)
            row = df.iloc[i]
            assert (row.src_degree, row.src_distinct_neighbors,
                    row.src_distinct_etypes) == du
            assert (row.dst_degree, row.dst_distinct_neighbors,
                    row.dst_distinct_etypes) == dv
            assert (row.one_hop_count, row.two_hop_count,
                    row.pair_distinct_etypes) == pb
            assert row.triplet_count == features.triplet_count(g, u, v, r)
            cos, dot = features.crossing_features(emb.vectors[u], emb.vectors[v])
            assert row.emb_cosine == pytest.approx(cos, abs=1e-12)
            assert row.emb_dot == pytest.approx(dot, abs=1e-12)
            assert (row.src_id, row.dst_id, row.etype) == (u, v, r)
            assert row.src_emb_0 == pytest.approx(float(emb.vectors[u][0]))

    def test_exclude_self_matches_edge_removal(self, rng):
        for _ in range(6):
            edges, n, t = random_edge_list(rng, max_nodes=20, max_edges=60,
                                           self_loops=True)
            g = graph_of(edges, n, t)
            fx = features.FeatureExtractor(g, families=("subgraph",))
            # featurize each edge with exclusion, compare against a graph
            # rebuilt without that one edge instance
            for i in rng.choice(len(edges), size=min(12, len(edges)), replace=False):
                s, d, r, _ = edges[i]
                rest = [e for j, e in enumerate(edges) if j != i]
                g2 = graph_of(rest, n, t)
                fx2 = features.FeatureExtractor(g2, families=("subgraph",))
                got = fx.matrix(np.array([s]), np.array([d]), np.array([r]),
                                exclude_self=True).iloc[0]
                want = fx2.matrix(np.array([s]), np.array([d]), np.array([r])).iloc[0]
                for col in features.SUBGRAPH_COLUMNS:
                    if col == "two_hop_count":
                        continue  # removing the u-v edge never affects 2-paths
                    assert got[col] == want[col], (col, s, d, r)

    def test_exclude_self_noop_for_non_edges(self, rng):
        edges, n, t = random_edge_list(rng, max_nodes=20, max_edges=50)
        g = graph_of(edges, n, t)
        fx = features.FeatureExtractor(g, families=("subgraph",))
        # query triples that are not edges: exclusion must change nothing
        us, vs, rs = [], [], []
        triples = {(min(s, d), max(s, d), r) for s, d, r, _ in edges}
        rng2 = np.random.default_rng(99)
        while len(us) < 20:
            u, v, r = int(rng2.integers(0, n)), int(rng2.integers(0, n)), int(rng2.integers(0, t))
            if (min(u, v), max(u, v), r) not in triples:
                us.append(u)
                vs.append(v)
                rs.append(r)
        a = fx.matrix(np.array(us), np.array(vs), np.array(rs))
        b = fx.matrix(np.array(us), np.array(vs), np.array(rs), exclude_self=True)
        assert a.equals(b)

    def test_unknown_family_rejected(self, rng):
        g = build_graph([TemporalEdge(0, 1)], 2, 1)
        with pytest.raises(ValueError, match="unknown feature families"):
            features.FeatureExtractor(g, families=("subgraph", "bogus"))

    def test_crossing_requires_embeddings(self):
        g = build_graph([TemporalEdge(0, 1)], 2, 1)
        with pytest.raises(ValueError, match="embedding"):
            features.FeatureExtractor(g, families=("crossing",))

    def test_node_range_checked(self):
        g = build_graph([TemporalEdge(0, 1)], 2, 1)
        fx = features.FeatureExtractor(g, families=("subgraph",))
        with pytest.raises(ValueError, match="out of range"):
            fx.matrix(np.array([0]), np.array([5]), np.array([0]))

    def test_binary_adjacency_variant(self):
        edges = [TemporalEdge(0, 1), TemporalEdge(0, 1),
                 TemporalEdge(1, 2), TemporalEdge(1, 2)]
        g = build_graph(edges, 3, 1)
        fx = features.FeatureExtractor(g, families=("subgraph",), binary_adjacency=True)
        row = fx.matrix(np.array([0]), np.array([2]), np.array([0])).iloc[0]
        assert row.two_hop_count == 1  # 2*2 walks collapse to 1 binary path
        row2 = fx.matrix(np.array([0]), np.array([1]), np.array([0])).iloc[0]
        assert row2.one_hop_count == 1


class TestFeaturize:
    def test_fixed_schema_width(self, rng):
        edges, n, t = random_edge_list(rng, max_nodes=15, max_edges=40)
        nf = rng.normal(size=(n, 3)).astype(np.float32)
        g = graph_of(edges, n, t, node_feats=nf)
        emb = emb_for(g)
        q1 = Query(0, 1, 0, 0, 10)
        q2 = Query(2, 3, 1, 5, 6)
        r1 = features.featurize(g, emb, q1)
        r2 = features.featurize(g, emb, q2)
        # 3 + 3 + 3 + 1 + 2 + raw (src, dst, etype + 2 * nf_dim)
        assert len(r1) == len(r2) == 3 + 3 + 3 + 1 + 2 + 3 + 6

    def test_line_family_adds_embedding_columns(self, rng):
        edges, n, t = random_edge_list(rng, max_nodes=15, max_edges=40)
        g = graph_of(edges, n, t)
        emb = emb_for(g, dim=4)
        row = features.featurize(g, emb, Query(0, 1, 0, 0, 10),
                                 families=("subgraph", "crossing", "raw", "line"))
        assert len(row) == 10 + 2 + 3 + 8

    def test_isolated_pair_zero_embeddings(self):
        g = build_graph([TemporalEdge(0, 1)], 4, 1)
        emb = EmbeddingTable(dim=3, vectors=np.zeros((4, 3), np.float32))
        row = features.featurize(g, emb, Query(2, 3, 0, 0, 1)).as_dict()
        assert all(v == 0.0 for k, v in row.items() if k not in ("src_id", "dst_id", "etype"))
        assert row["emb_cosine"] == 0.0 and row["emb_dot"] == 0.0

    def test_time_invariance(self, rng):
        edges, n, t = random_edge_list(rng, max_nodes=15, max_edges=40)
        g = graph_of(edges, n, t)
        emb = emb_for(g)
        a = features.featurize(g, emb, Query(0, 1, 0, 0, 1))
        b = features.featurize(g, emb, Query(0, 1, 0, 12345, 99999))
        np.testing.assert_array_equal(a.values, b.values)

    def test_works_for_train_instances(self):
        from tlp.trainset import TrainInstance
        g = build_graph([TemporalEdge(0, 1)], 2, 1)
        row = features.featurize(g, None, TrainInstance(0, 1, 0, 1),
                                 families=("subgraph", "raw"))
        assert row.as_dict()["one_hop_count"] == 1.0
