"""File-based pipeline orchestration with a reproducibility manifest.

Each stage reads its input artifacts from the working directory, validates
they exist, writes its own artifacts, and appends a manifest entry with
input/output checksums, the stage config, the seed, and wall time.  Stages
hand off through files only, so every stage is independently runnable and
resumable.  Rerunning with identical inputs and config reproduces every
artifact bit-for-bit in single-threaded mode (the manifest itself records
wall time and is exempt).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from . import analysis, embedding, features, gbdt, ingest, metrics, synth, trainset
from .graph import load_graph, save_graph

STAGES = ("ingest", "analyze", "build-train", "embed", "featurize", "train",
          "predict", "eval")

ALL_FAMILIES = ("subgraph", "crossing", "raw", "line")

# ablation rows: cumulative feature-family combinations, fixed order
ABLATION_ROWS = (
    ("raw", ("raw",)),
    ("raw+line", ("raw", "line")),
    ("raw+subgraph", ("raw", "subgraph")),
    ("raw+line+subgraph", ("raw", "line", "subgraph")),
    ("raw+line+crossing", ("raw", "line", "crossing")),
    ("all", ("raw", "line", "crossing", "subgraph")),
)


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    workdir: str
    kind: ingest.DatasetKind = ingest.DatasetKind.A
    seed: int = 42
    threads: int = 1
    families: tuple = ALL_FAMILIES
    binary_adjacency: bool = False
    with_etype: bool = False
    leave_self_out: bool = False
    # featurize train instances as if their own edge were absent, matching
    # the query-time distribution (queries are never edges of the graph)
    exclude_self: bool = True
    edges_csv: Optional[str] = None
    queries_labeled_csv: Optional[str] = None
    queries_test_csv: Optional[str] = None
    node_feats_csv: Optional[str] = None
    sampler: trainset.SamplerConfig = field(default_factory=trainset.SamplerConfig)
    line: embedding.LineConfig = field(default_factory=embedding.LineConfig)
    gbdt: gbdt.GbdtConfig = field(default_factory=gbdt.GbdtConfig)
    synth: synth.SynthConfig = field(default_factory=synth.SynthConfig)

    def __post_init__(self):
        if "crossing" in self.families and "line" not in self.families:
            raise ValueError("crossing features require the line family")
        # the pipeline seed cascades; set per-stage seeds after construction
        # (or via `<stage>.seed` config keys) to diverge
        for stage_cfg in (self.sampler, self.line, self.gbdt, self.synth):
            stage_cfg.seed = self.seed
        self.line.threads = self.threads

    # artifact paths ---------------------------------------------------------
    def path(self, name: str) -> str:
        return os.path.join(self.workdir, name)

    @property
    def graph_path(self):
        return self.path("graph.tlpg")

    @property
    def id_map_path(self):
        return self.path("id_map.txt")

    @property
    def analysis_path(self):
        return self.path("analysis.csv")

    @property
    def trainset_path(self):
        return self.path("trainset.csv")

    @property
    def trainset_manifest_path(self):
        return self.path("trainset_manifest.json")

    @property
    def embeddings_path(self):
        return self.path("embeddings.tlpe")

    @property
    def features_train_path(self):
        return self.path("features_train.csv")

    @property
    def features_test_path(self):
        return self.path("features_test.csv")

    @property
    def model_path(self):
        return self.path("model.txt")

    @property
    def predictions_path(self):
        return self.path("predictions.csv")

    @property
    def metrics_path(self):
        return self.path("metrics.csv")

    @property
    def ablation_path(self):
        return self.path("ablation.csv")

    @property
    def manifest_path(self):
        return self.path("manifest.json")

    def input_edges(self):
        return self.edges_csv or self.path("edges_train.csv")

    def input_queries_labeled(self):
        return self.queries_labeled_csv or self.path("queries_train.csv")

    def input_queries_test(self):
        return self.queries_test_csv or self.path("queries_test.csv")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require(stage: str, paths) -> None:
    for p in paths:
        if p and not os.path.exists(p):
            raise PipelineError(f"missing input for stage {stage}: {p}")


def _cfg_dict(obj) -> dict:
    if dataclasses.is_dataclass(obj):
        d = dataclasses.asdict(obj)
        return {k: (v.value if isinstance(v, ingest.DatasetKind) else v)
                for k, v in d.items()}
    return dict(obj)


# -- stages --------------------------------------------------------------------

def _stage_ingest(cfg: PipelineConfig) -> dict:
    inputs = [cfg.input_edges()]
    if cfg.node_feats_csv:
        inputs.append(cfg.node_feats_csv)
    _require("ingest", inputs)
    res = ingest.parse_edges(cfg.input_edges(), cfg.kind)
    node_feats = None
    if cfg.node_feats_csv:
        node_feats = ingest.parse_node_features(cfg.node_feats_csv, res.mapper)
    g = ingest.graph_from_edges(res, node_feats=node_feats)
    save_graph(g, cfg.graph_path)
    ingest.save_id_map(res.mapper, res, cfg.id_map_path)
    return {"inputs": inputs, "outputs": [cfg.graph_path, cfg.id_map_path],
            "info": {"num_nodes": g.num_nodes, "num_edges": g.num_edges,
                     "num_edge_types": g.num_edge_types,
                     "malformed_rows": res.malformed_rows,
                     "edge_feat_nonempty": res.edge_feat_nonempty,
                     "edge_feat_dim": res.edge_feat_dim}}


def _stage_analyze(cfg: PipelineConfig) -> dict:
    inputs = [cfg.graph_path, cfg.id_map_path, cfg.input_queries_labeled()]
    _require("analyze", inputs)
    g = load_graph(cfg.graph_path)
    mapper = ingest.load_id_map(cfg.id_map_path)
    queries = ingest.parse_queries(cfg.input_queries_labeled(), True, mapper).queries
    labels = np.array([q.label for q in queries])
    rows = []
    for with_etype in (False, True):
        rep = analysis.existence_report(g, queries, with_etype)
        rows.append({"metric": f"existence_with_etype={with_etype}",
                     "value": rep.exist_in_graph,
                     "detail": json.dumps(dataclasses.asdict(rep), sort_keys=True)})
        naive_auc = metrics.auc(analysis.naive_predict(g, queries, with_etype), labels)
        rows.append({"metric": f"naive_auc_with_etype={with_etype}",
                     "value": naive_auc.auc, "detail": ""})
    pool = analysis.pool_from_queries(queries)
    for stat in ("mode", "mean"):
        for with_etype in (False, True):
            bound = analysis.label_aggregate_bound(
                pool, queries, stat=stat, with_etype=with_etype,
                leave_self_out=cfg.leave_self_out)
            rows.append({"metric": f"bound_{stat}_with_etype={with_etype}",
                         "value": bound.auc, "detail": ""})
    pd.DataFrame(rows).to_csv(cfg.analysis_path, index=False)
    return {"inputs": inputs, "outputs": [cfg.analysis_path],
            "info": {"num_queries": len(queries)}}


def _stage_build_train(cfg: PipelineConfig) -> dict:
    _require("build-train", [cfg.graph_path])
    g = load_graph(cfg.graph_path)
    src, dst, et, label, info = trainset.assemble_train_arrays(g, cfg.sampler)
    trainset.save_train_set(cfg.trainset_path, src, dst, et, label)
    with open(cfg.trainset_manifest_path, "w", encoding="utf-8") as f:
        f.write(info.to_json())
    return {"inputs": [cfg.graph_path],
            "outputs": [cfg.trainset_path, cfg.trainset_manifest_path],
            "info": {"n_final": info.n_final, "n_collisions": info.n_collisions}}


def _stage_embed(cfg: PipelineConfig) -> dict:
    _require("embed", [cfg.graph_path])
    g = load_graph(cfg.graph_path)
    table = embedding.train_line(g, cfg.line)
    embedding.save_embeddings(table, cfg.embeddings_path)
    return {"inputs": [cfg.graph_path], "outputs": [cfg.embeddings_path],
            "info": {"dim": table.dim, "order": table.order}}


def _featurize_frames(cfg: PipelineConfig, families=None):
    g = load_graph(cfg.graph_path)
    emb = None
    fams = tuple(families if families is not None else cfg.families)
    if "crossing" in fams or "line" in fams:
        emb = embedding.load_embeddings(cfg.embeddings_path)
    extractor = features.FeatureExtractor(g, emb, families=fams,
                                          binary_adjacency=cfg.binary_adjacency)
    src, dst, et, label = trainset.load_train_set(cfg.trainset_path)
    train_df = extractor.matrix(src, dst, et, labels=label,
                                exclude_self=cfg.exclude_self)

    mapper = ingest.load_id_map(cfg.id_map_path)
    qres = ingest.parse_queries(cfg.input_queries_test(), True, mapper)
    qs = qres.queries
    test_df = extractor.matrix(
        np.array([q.src for q in qs]), np.array([q.dst for q in qs]),
        np.array([q.etype for q in qs]),
        labels=np.array([q.label for q in qs]))
    return train_df, test_df


def _stage_featurize(cfg: PipelineConfig) -> dict:
    inputs = [cfg.graph_path, cfg.trainset_path, cfg.id_map_path,
              cfg.input_queries_test()]
    if "crossing" in cfg.families or "line" in cfg.families:
        inputs.append(cfg.embeddings_path)
    _require("featurize", inputs)
    train_df, test_df = _featurize_frames(cfg)
    features.save_features(train_df, cfg.features_train_path)
    features.save_features(test_df, cfg.features_test_path)
    return {"inputs": inputs,
            "outputs": [cfg.features_train_path, cfg.features_test_path],
            "info": {"n_train": len(train_df), "n_test": len(test_df),
                     "columns": len(train_df.columns)}}


def _fit_from_frame(df: pd.DataFrame, cfg: PipelineConfig) -> gbdt.GbdtModel:
    names = [c for c in df.columns if c != "label"]
    X = df[names].to_numpy(np.float64)
    y = df["label"].to_numpy(np.int64)
    return gbdt.fit(X, y, cfg.gbdt, feature_names=names)


def _stage_train(cfg: PipelineConfig) -> dict:
    _require("train", [cfg.features_train_path])
    df = features.load_features(cfg.features_train_path)
    if "label" not in df.columns:
        raise PipelineError("train: features file has no label column")
    model = _fit_from_frame(df, cfg)
    gbdt.save_model(model, cfg.model_path)
    return {"inputs": [cfg.features_train_path], "outputs": [cfg.model_path],
            "info": {"final_train_logloss": model.train_losses[-1]}}


def _stage_predict(cfg: PipelineConfig) -> dict:
    _require("predict", [cfg.model_path, cfg.features_test_path])
    model = gbdt.load_model(cfg.model_path)
    df = features.load_features(cfg.features_test_path)
    X = df[model.feature_names].to_numpy(np.float64)
    probs = gbdt.predict_proba(model, X)
    with open(cfg.predictions_path, "w", encoding="utf-8") as f:
        for p in probs:
            f.write(repr(float(p)) + "\n")
    return {"inputs": [cfg.model_path, cfg.features_test_path],
            "outputs": [cfg.predictions_path], "info": {"n": len(probs)}}


def _stage_eval(cfg: PipelineConfig) -> dict:
    _require("eval", [cfg.predictions_path, cfg.features_test_path])
    probs = np.loadtxt(cfg.predictions_path, ndmin=1)
    df = features.load_features(cfg.features_test_path)
    if "label" not in df.columns:
        raise PipelineError("eval: features file has no label column")
    res = metrics.auc(probs, df["label"].to_numpy(np.int64))
    out = pd.DataFrame([{"metric": "auc", "value": res.auc,
                         "n_pos": res.n_pos, "n_neg": res.n_neg}])
    out.to_csv(cfg.metrics_path, index=False)
    return {"inputs": [cfg.predictions_path, cfg.features_test_path],
            "outputs": [cfg.metrics_path], "info": {"auc": res.auc}}


_STAGE_FUNCS = {
    "ingest": _stage_ingest,
    "analyze": _stage_analyze,
    "build-train": _stage_build_train,
    "embed": _stage_embed,
    "featurize": _stage_featurize,
    "train": _stage_train,
    "predict": _stage_predict,
    "eval": _stage_eval,
}


def run_pipeline(cfg: PipelineConfig, stages=STAGES) -> dict:
    """Run the ordered stage subset; returns (and writes) the run manifest."""
    for s in stages:
        if s not in _STAGE_FUNCS:
            raise PipelineError(f"unknown stage {s!r}; valid: {', '.join(STAGES)}")
    os.makedirs(cfg.workdir, exist_ok=True)
    manifest = {"seed": cfg.seed, "stages": []}
    for s in stages:
        t0 = time.perf_counter()
        result = _STAGE_FUNCS[s](cfg)
        entry = {
            "stage": s,
            "seed": cfg.seed,
            "config": {
                "kind": cfg.kind.value,
                "families": list(cfg.families),
                "sampler": _cfg_dict(cfg.sampler),
                "line": _cfg_dict(cfg.line),
                "gbdt": _cfg_dict(cfg.gbdt),
            },
            "inputs": {p: _sha256(p) for p in result["inputs"]},
            "outputs": {p: _sha256(p) for p in result["outputs"]},
            "info": result.get("info", {}),
            "wall_time_s": round(time.perf_counter() - t0, 6),
        }
        manifest["stages"].append(entry)
    with open(cfg.manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


def run_synth(cfg: PipelineConfig) -> dict:
    """Generate synthetic data into the workdir (competition CSV layout)."""
    os.makedirs(cfg.workdir, exist_ok=True)
    data = synth.generate(cfg.synth)
    paths = synth.write_synth_csvs(data, cfg.workdir)
    return paths


def ablate(cfg: PipelineConfig) -> pd.DataFrame:
    """Fixed-order feature-family ablation over identical splits and seeds.

    Featurizes once with every family and slices columns per row, which is
    exactly the subset an extractor restricted to those families emits.
    """
    _require("ablate", [cfg.graph_path, cfg.embeddings_path, cfg.trainset_path,
                        cfg.id_map_path, cfg.input_queries_test()])
    train_df, test_df = _featurize_frames(cfg, families=ALL_FAMILIES)
    g = load_graph(cfg.graph_path)
    emb = embedding.load_embeddings(cfg.embeddings_path)
    rows = []
    for name, fams in ABLATION_ROWS:
        cols = list(features.FeatureExtractor(g, emb, families=fams,
                                              binary_adjacency=cfg.binary_adjacency).columns)
        model = _fit_from_frame(train_df[cols + ["label"]], cfg)
        probs = gbdt.predict_proba(model, test_df[cols].to_numpy(np.float64))
        res = metrics.auc(probs, test_df["label"].to_numpy(np.int64))
        rows.append({"features": name, "auc": res.auc,
                     "n_pos": res.n_pos, "n_neg": res.n_neg})
    out = pd.DataFrame(rows)
    out.to_csv(cfg.ablation_path, index=False)
    return out


# -- flat key=value config files -------------------------------------------------

_BOOL_FIELDS = {"independent_columns", "binary_adjacency", "leave_self_out",
                "with_etype", "has_header", "exclude_self"}
_FLOAT_FIELDS = {"neg_ratio", "lr_init", "learning_rate", "subsample",
                 "reg_lambda", "intra_edge_prob", "inter_edge_prob",
                 "type_affinity", "test_fraction", "base_score_eps"}
_STR_FIELDS = {"order", "kind", "workdir", "edges_csv", "queries_labeled_csv",
               "queries_test_csv", "node_feats_csv", "delimiter"}


def load_config_file(path) -> dict:
    """Flat `key = value` file; '#' starts a comment."""
    kv = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = line.split("=", 1)
            kv[key.strip()] = val.strip()
    return kv


def _cast(field_name: str, raw: str):
    if field_name == "families":
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    if field_name in _BOOL_FIELDS:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean {raw!r} for {field_name}")
    if field_name in _FLOAT_FIELDS:
        return float(raw)
    if field_name in _STR_FIELDS:
        return raw
    if raw.lower() == "none":
        return None
    return int(raw)


def apply_config(cfg: PipelineConfig, kv: dict) -> PipelineConfig:
    """Apply flat keys (e.g. 'line.dim', 'gbdt.num_trees', 'seed') to a config."""
    for key, raw in kv.items():
        if "." in key:
            section, fname = key.split(".", 1)
            obj = getattr(cfg, section, None)
            if obj is None or not dataclasses.is_dataclass(obj):
                raise ValueError(f"unknown config section {section!r}")
        else:
            obj, fname = cfg, key
        if not hasattr(obj, fname):
            raise ValueError(f"unknown config key {key!r}")
        val = _cast(fname, raw)
        if fname == "kind":
            val = ingest.DatasetKind(val)
        setattr(obj, fname, val)
    if "seed" in kv:  # top-level seed cascades unless stage seeds are explicit
        for section in ("sampler", "line", "gbdt", "synth"):
            if f"{section}.seed" not in kv:
                getattr(cfg, section).seed = cfg.seed
    cfg.line.threads = cfg.threads
    return cfg
