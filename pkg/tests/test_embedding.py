import numpy as np
import pytest

from tlp import embedding
from tlp.embedding import AliasTable, EmbeddingTable, LineConfig
from tlp.graph import TemporalEdge, build_graph
from oracles import fd_gradients, logistic_objective


def clique_pair_graph(size=5, bridge=False):
    edges = []
    for block in (0, size):
        for i in range(size):
            for j in range(i + 1, size):
                edges.append(TemporalEdge(block + i, block + j, 0, 0))
    if bridge:
        edges.append(TemporalEdge(0, size, 0, 0))
    return build_graph(edges, 2 * size, 1)


def mean_cos(vectors, pairs):
    out = []
    for u, v in pairs:
        a, b = vectors[u], vectors[v]
        out.append(float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b))))
    return float(np.mean(out))


def separation(vectors, size=5):
    within = [(i, j) for i in range(size) for j in range(i + 1, size)]
    within += [(size + i, size + j) for i in range(size) for j in range(i + 1, size)]
    cross = [(i, size + j) for i in range(size) for j in range(size)]
    return mean_cos(vectors, within), mean_cos(vectors, cross)


class TestAliasTable:
    def test_uniform_frequencies(self, rng):
        table = embedding.build_alias_table([1.0, 1.0])
        draws = table.draw(rng, 100_000)
        freq = np.bincount(draws, minlength=2) / 100_000
        assert abs(freq[0] - 0.5) < 0.02 and abs(freq[1] - 0.5) < 0.02

    def test_three_to_one(self, rng):
        table = embedding.build_alias_table([3.0, 1.0])
        draws = table.draw(rng, 100_000)
        freq = np.bincount(draws, minlength=2) / 100_000
        assert abs(freq[0] - 0.75) < 0.02 and abs(freq[1] - 0.25) < 0.02

    def test_degenerate_mass(self, rng):
        table = embedding.build_alias_table([0.0, 5.0])
        draws = table.draw(rng, 5000)
        assert (draws == 1).all()

    def test_matches_categorical_within_3_sigma(self, rng):
        weights = rng.random(12) + 0.05
        p = weights / weights.sum()
        table = embedding.build_alias_table(weights)
        n = 100_000
        freq = np.bincount(table.draw(rng, n), minlength=12) / n
        sigma = np.sqrt(p * (1 - p) / n)
        assert (np.abs(freq - p) <= 3 * sigma).all()

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            embedding.build_alias_table([0.0, 0.0])
        with pytest.raises(ValueError):
            embedding.build_alias_table([1.0, -0.5])
        with pytest.raises(ValueError):
            embedding.build_alias_table([])


class TestGradientStep:
    def test_zero_vectors_fixed_point(self):
        u, v = np.zeros(4), np.zeros(4)
        negs = [np.zeros(4)]
        nu, nv, nn = embedding.line_gradient_step(u, v, negs, 0.1)
        assert not nu.any() and not nv.any() and not nn[0].any()

    def test_lr_zero_no_change(self, rng):
        u, v = rng.normal(size=4), rng.normal(size=4)
        negs = [rng.normal(size=4)]
        nu, nv, nn = embedding.line_gradient_step(u, v, negs, 0.0)
        np.testing.assert_array_equal(nu, u)
        np.testing.assert_array_equal(nv, v)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError, match="dimension"):
            embedding.line_gradient_step(np.zeros(4), np.zeros(3), [], 0.1)

    def test_returns_copies(self, rng):
        u = rng.normal(size=4)
        before = u.copy()
        embedding.line_gradient_step(u, rng.normal(size=4), [], 0.1)
        np.testing.assert_array_equal(u, before)

    def test_matches_finite_differences(self, rng):
        # entries small enough that the saturation clamp stays inactive
        for _ in range(25):
            dim = int(rng.integers(2, 9))
            k = int(rng.integers(0, 4))
            u = rng.uniform(-0.5, 0.5, dim)
            v = rng.uniform(-0.5, 0.5, dim)
            negs = [rng.uniform(-0.5, 0.5, dim) for _ in range(k)]
            nu, nv, nn = embedding.line_gradient_step(u, v, negs, 1.0)
            gu_fd, gv_fd, gn_fd = fd_gradients(u, v, negs)
            for got, fd in [(nu - u, gu_fd), (nv - v, gv_fd)] + [
                    (nn[i] - negs[i], gn_fd[i]) for i in range(k)]:
                denom = max(np.linalg.norm(fd), 1e-9)
                assert np.linalg.norm(got - fd) / denom < 1e-5

    def test_objective_increases_along_step(self, rng):
        u = rng.uniform(-0.5, 0.5, 6)
        v = rng.uniform(-0.5, 0.5, 6)
        negs = [rng.uniform(-0.5, 0.5, 6) for _ in range(2)]
        before = logistic_objective(u, v, negs)
        nu, nv, nn = embedding.line_gradient_step(u, v, negs, 0.01)
        after = logistic_objective(nu, nv, nn)
        assert after > before

    def test_batch_of_one_matches_scalar(self, rng):
        emb = rng.normal(size=(5, 4)).astype(np.float32)
        tgt = rng.normal(size=(5, 4)).astype(np.float32)
        u_new, v_new, negs_new = embedding.line_gradient_step(
            emb[0], tgt[1], [tgt[2], tgt[3]], 0.05)
        e2, t2 = emb.copy(), tgt.copy()
        embedding._batch_update(e2, t2, np.array([0]), np.array([1]),
                                np.array([[2, 3]]), 0.05)
        np.testing.assert_allclose(e2[0], u_new, rtol=1e-5)
        np.testing.assert_allclose(t2[1], v_new, rtol=1e-5)
        np.testing.assert_allclose(t2[2], negs_new[0], rtol=1e-5)
        np.testing.assert_allclose(t2[3], negs_new[1], rtol=1e-5)


class TestTrainLine:
    def test_rejects_empty_graph(self):
        g = build_graph([], 4, 1)
        with pytest.raises(ValueError, match="no edges"):
            embedding.train_line(g, LineConfig(dim=4))

    def test_rejects_dim_zero(self):
        g = build_graph([TemporalEdge(0, 1)], 2, 1)
        with pytest.raises(ValueError, match="dim"):
            embedding.train_line(g, LineConfig(dim=0))

    def test_single_edge_pulls_pair_together(self):
        g = build_graph([TemporalEdge(0, 1)], 2, 1)
        cfg = LineConfig(dim=8, order="first", epochs=400, seed=3, batch_size=16)
        table = embedding.train_line(g, cfg)
        a, b = table.vectors[0], table.vectors[1]
        cos = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
        assert cos > 0.0

    @pytest.mark.parametrize("order", ["first", "second"])
    def test_two_clique_separation(self, order):
        g = clique_pair_graph(size=5)
        cfg = LineConfig(dim=8, order=order, epochs=300, seed=7, batch_size=64)
        table = embedding.train_line(g, cfg)
        within, cross = separation(table.vectors, size=5)
        assert within > cross

    def test_both_concatenates(self):
        g = clique_pair_graph(size=4)
        cfg = LineConfig(dim=6, order="both", epochs=50, seed=1)
        table = embedding.train_line(g, cfg)
        assert table.dim == 12 and table.vectors.shape == (8, 12)
        assert table.context is not None and table.context.shape == (8, 6)

    def test_context_presence_matches_order(self):
        g = clique_pair_graph(size=4)
        assert embedding.train_line(g, LineConfig(dim=4, order="first", epochs=20,
                                                  seed=1)).context is None
        assert embedding.train_line(g, LineConfig(dim=4, order="second", epochs=20,
                                                  seed=1)).context is not None

    def test_deterministic_given_seed(self):
        g = clique_pair_graph(size=4)
        cfg = LineConfig(dim=6, order="both", epochs=30, seed=5)
        a = embedding.train_line(g, cfg)
        b = embedding.train_line(g, cfg)
        np.testing.assert_array_equal(a.vectors, b.vectors)
        c = embedding.train_line(g, LineConfig(dim=6, order="both", epochs=30, seed=6))
        assert not np.array_equal(a.vectors, c.vectors)

    def test_no_nan_anywhere(self, rng):
        from conftest import graph_of, random_edge_list
        for _ in range(3):
            edges, n, t = random_edge_list(rng, max_nodes=40, max_edges=200)
            g = graph_of(edges, n, t)
            table = embedding.train_line(g, LineConfig(dim=8, order="both",
                                                       epochs=40, seed=2))
            assert np.isfinite(table.vectors).all()

    def test_isolated_nodes_embed_to_zero(self):
        g = build_graph([TemporalEdge(0, 1)], 4, 1)  # nodes 2, 3 isolated
        table = embedding.train_line(g, LineConfig(dim=4, order="first",
                                                   epochs=20, seed=0))
        assert not table.vectors[2].any() and not table.vectors[3].any()

    def test_threads_mode_still_separates(self):
        g = clique_pair_graph(size=5)
        cfg = LineConfig(dim=8, order="first", epochs=300, seed=7,
                         batch_size=64, threads=2)
        table = embedding.train_line(g, cfg)
        assert np.isfinite(table.vectors).all()
        within, cross = separation(table.vectors, size=5)
        assert within > cross


class TestSerialization:
    def test_binary_round_trip(self, tmp_path, rng):
        vec = rng.normal(size=(7, 5)).astype(np.float32)
        table = EmbeddingTable(dim=5, vectors=vec, order="first")
        embedding.save_embeddings(table, tmp_path / "e.tlpe")
        t2 = embedding.load_embeddings(tmp_path / "e.tlpe")
        np.testing.assert_array_equal(t2.vectors, vec)
        assert t2.dim == 5 and t2.order == "first"

    def test_text_round_trip(self, tmp_path, rng):
        vec = rng.normal(size=(4, 3)).astype(np.float32)
        table = EmbeddingTable(dim=3, vectors=vec, order="both")
        embedding.save_embeddings_text(table, tmp_path / "e.txt")
        t2 = embedding.load_embeddings_text(tmp_path / "e.txt")
        np.testing.assert_array_equal(t2.vectors, vec)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.tlpe").write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(ValueError, match="not an embedding"):
            embedding.load_embeddings(tmp_path / "x.tlpe")
