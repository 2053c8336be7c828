"""Time-agnostic link prediction over temporal multigraphs.

Submodules mirror the pipeline stages: graph and ingest (data), analysis
(exploratory reports), trainset (shuffle negative sampling), embedding
(first/second-order proximity), features (crossing + subgraph statistics),
gbdt (boosted trees), metrics (AUC / T-score), synth (planted graphs), and
pipeline/cli (orchestration).
"""

from . import (analysis, embedding, features, gbdt, graph, ingest, metrics,
               pipeline, synth, trainset)

__all__ = ["analysis", "embedding", "features", "gbdt", "graph", "ingest",
           "metrics", "pipeline", "synth", "trainset"]
__version__ = "0.1.0"
