import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

from tlp import graph as tg


def random_edge_list(rng, max_nodes=100, max_edges=500, max_etypes=8,
                     self_loops=False):
    """(edges, num_nodes, num_etypes) with edges as (src, dst, etype, ts)."""
    n = int(rng.integers(2, max_nodes + 1))
    m = int(rng.integers(1, max_edges + 1))
    t = int(rng.integers(1, max_etypes + 1))
    src = rng.integers(0, n, size=m)
    dst = rng.integers(0, n, size=m)
    if not self_loops:
        clash = src == dst
        while clash.any():
            dst[clash] = rng.integers(0, n, size=int(clash.sum()))
            clash = src == dst
    et = rng.integers(0, t, size=m)
    ts = rng.integers(0, 10_000, size=m)
    edges = list(zip(src.tolist(), dst.tolist(), et.tolist(), ts.tolist()))
    return edges, n, t


def graph_of(edges, n, t, directed=False, node_feats=None):
    return tg.build_graph(
        [tg.TemporalEdge(s, d, r, ts) for s, d, r, ts in edges], n, t,
        directed=directed, node_feats=node_feats)


@pytest.fixture
def rng():
    return np.random.default_rng(20240)
