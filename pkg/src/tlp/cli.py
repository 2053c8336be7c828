"""Command-line interface: one subcommand per pipeline stage.

Exit code 0 on success; on failure a single machine-parsable line
``ERROR <subcommand>: <message>`` goes to stderr and the exit code is 1.
Every randomized stage takes --seed (default 42).
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import analysis, embedding, features, gbdt, ingest, metrics, pipeline, synth, trainset
from .graph import load_graph, save_graph


def _add_seed(p):
    p.add_argument("--seed", type=int, default=42, help="random seed (default 42)")


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="tlp",
        description="Time-agnostic link prediction pipeline over temporal multigraphs.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("ingest", help="parse edge CSV into a binary graph file")
    p.add_argument("--edges", required=True)
    p.add_argument("--kind", choices=["A", "B"], default="A")
    p.add_argument("--node-feats", default=None)
    p.add_argument("--out-graph", required=True)
    p.add_argument("--out-map", required=True)

    p = sub.add_parser("analyze", help="existence / naive / label-aggregation reports")
    p.add_argument("mode", choices=["existence", "naive", "bound"])
    p.add_argument("--graph", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--with-etype", action="store_true")
    p.add_argument("--stat", choices=["mode", "mean"], default="mode")
    p.add_argument("--leave-self-out", action="store_true")
    p.add_argument("--csv", action="store_true", help="emit CSV instead of text")

    p = sub.add_parser("synth", help="generate a planted-community dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--num-nodes", type=int, default=None)
    p.add_argument("--num-communities", type=int, default=None)
    p.add_argument("--num-edge-types", type=int, default=None)
    p.add_argument("--num-edges", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=None)
    _add_seed(p)

    p = sub.add_parser("build-train", help="positives + shuffled negatives train set")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--neg-ratio", type=float, default=1.0)
    p.add_argument("--sample-size", type=int, default=None)
    p.add_argument("--independent-columns", action="store_true")
    _add_seed(p)

    p = sub.add_parser("embed", help="train first/second-order edge-sampling embeddings")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--text-out", default=None, help="also write the text format")
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--order", choices=["first", "second", "both"], default="both")
    p.add_argument("--epochs", type=int, default=100,
                   help="edge samples = epochs * num_edges")
    p.add_argument("--neg-k", type=int, default=5)
    p.add_argument("--lr-init", type=float, default=0.025)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--threads", type=int, default=1,
                   help=">1 enables lock-free (non-deterministic) training")
    _add_seed(p)

    p = sub.add_parser("featurize", help="assemble the feature matrix CSV")
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--instances", default=None, help="train-set CSV (src,dst,etype,label)")
    p.add_argument("--queries", default=None, help="query CSV (needs --map)")
    p.add_argument("--map", default=None)
    p.add_argument("--labeled", action="store_true", help="queries carry labels")
    p.add_argument("--families", default="subgraph,crossing,raw,line")
    p.add_argument("--binary-adjacency", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-gbdt", help="fit the boosted-tree classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--num-trees", type=int, default=500)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--max-bins", type=int, default=255)
    p.add_argument("--subsample", type=float, default=1.0)
    _add_seed(p)

    p = sub.add_parser("predict", help="score a feature CSV with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="metrics over predictions")
    p.add_argument("mode", choices=["auc", "tscore"])
    p.add_argument("--predictions", default=None)
    p.add_argument("--labels", default=None,
                   help="CSV with a label column, or one label per line")
    p.add_argument("--auc-self", type=float, default=None)
    p.add_argument("--auc-all", default=None, help="comma-separated participant AUCs")
    p.add_argument("--sample-std", action="store_true",
                   help="use sample (n-1) std in the T-score")
    p.add_argument("--csv", action="store_true")

    p = sub.add_parser("ablate", help="feature-family ablation table")
    p.add_argument("--workdir", required=True)
    p.add_argument("--config", default=None)
    _add_seed(p)

    p = sub.add_parser("run", help="run pipeline stages in order")
    p.add_argument("--workdir", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--stages", default=",".join(pipeline.STAGES))
    p.add_argument("--threads", type=int, default=1)
    _add_seed(p)
    return ap


def _pipeline_config(args) -> pipeline.PipelineConfig:
    cfg = pipeline.PipelineConfig(workdir=args.workdir, seed=args.seed)
    kv = {}
    if args.config:
        kv = pipeline.load_config_file(args.config)
    if getattr(args, "threads", None):
        cfg.threads = args.threads
    pipeline.apply_config(cfg, kv)
    if "seed" not in kv:  # CLI seed cascades when the file does not set one
        pipeline.apply_config(cfg, {"seed": str(args.seed)})
    return cfg


def _labels_from(path):
    try:
        df = features.load_features(path)
        if "label" in df.columns:
            return df["label"].to_numpy(np.int64)
    except Exception:
        pass
    return np.loadtxt(path, ndmin=1).astype(np.int64)


def _cmd_ingest(args):
    res = ingest.parse_edges(args.edges, ingest.DatasetKind(args.kind))
    node_feats = None
    if args.node_feats:
        node_feats = ingest.parse_node_features(args.node_feats, res.mapper)
    g = ingest.graph_from_edges(res, node_feats=node_feats)
    save_graph(g, args.out_graph)
    ingest.save_id_map(res.mapper, res, args.out_map)
    print(f"graph: {g.num_nodes} nodes, {g.num_edges} edges, "
          f"{g.num_edge_types} edge types -> {args.out_graph}")
    if res.malformed_rows:
        print(f"malformed rows: {res.malformed_rows}")
    if res.edge_feat_dim:
        print(f"edge features: dim {res.edge_feat_dim}, "
              f"non-empty {res.edge_feat_nonempty}/{g.num_edges}")
    return 0


def _cmd_analyze(args):
    g = load_graph(args.graph)
    mapper = ingest.load_id_map(args.map)
    queries = ingest.parse_queries(args.queries, True, mapper).queries
    labels = np.array([q.label for q in queries])
    if args.mode == "existence":
        rep = analysis.existence_report(g, queries, args.with_etype)
        if args.csv:
            print("metric,count,share")
            for name, count, pct in rep.as_rows():
                print(f"{name},{count},{pct}")
        else:
            print(analysis.format_report(rep))
    elif args.mode == "naive":
        scores = analysis.naive_predict(g, queries, args.with_etype)
        res = metrics.auc(scores, labels)
        if args.csv:
            print("metric,value,n_pos,n_neg")
            print(f"naive_auc,{res.auc:.9f},{res.n_pos},{res.n_neg}")
        else:
            print(f"naive strategy AUC (with_etype={args.with_etype}): {res.auc:.9f}")
    else:
        pool = analysis.pool_from_queries(queries)
        res = analysis.label_aggregate_bound(pool, queries, stat=args.stat,
                                             with_etype=args.with_etype,
                                             leave_self_out=args.leave_self_out)
        if args.csv:
            print("metric,value,n_pos,n_neg")
            print(f"bound_{args.stat},{res.auc:.9f},{res.n_pos},{res.n_neg}")
        else:
            print(f"label-aggregation bound AUC ({args.stat}, "
                  f"with_etype={args.with_etype}): {res.auc:.9f}")
    return 0


def _cmd_synth(args):
    cfg = synth.SynthConfig(seed=args.seed)
    if args.config:
        kv = pipeline.load_config_file(args.config)
        pcfg = pipeline.PipelineConfig(workdir=args.out_dir, seed=args.seed)
        pipeline.apply_config(pcfg, kv)
        cfg = pcfg.synth
    for name, attr in (("num_nodes", "num_nodes"), ("num_communities", "num_communities"),
                       ("num_edge_types", "num_edge_types"), ("num_edges", "num_edges_target"),
                       ("test_fraction", "test_fraction")):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, attr, val)
    cfg.seed = args.seed
    data = synth.generate(cfg)
    import os
    os.makedirs(args.out_dir, exist_ok=True)
    paths = synth.write_synth_csvs(data, args.out_dir)
    print(f"edges: {data.n_train_edges} train -> {paths['edges']}")
    print(f"queries: {len(data.train_queries)} train, "
          f"{len(data.test_queries)} test -> {args.out_dir}")
    return 0


def _cmd_build_train(args):
    g = load_graph(args.graph)
    cfg = trainset.SamplerConfig(seed=args.seed, neg_ratio=args.neg_ratio,
                                 sample_size=args.sample_size,
                                 independent_columns=args.independent_columns)
    src, dst, et, label, info = trainset.assemble_train_arrays(g, cfg)
    trainset.save_train_set(args.out, src, dst, et, label)
    with open(args.manifest, "w", encoding="utf-8") as f:
        f.write(info.to_json())
    print(f"train set: {info.n_final} instances "
          f"({info.n_positive} pos, {info.n_collisions} collisions dropped) -> {args.out}")
    return 0


def _cmd_embed(args):
    g = load_graph(args.graph)
    cfg = embedding.LineConfig(dim=args.dim, order=args.order, epochs=args.epochs,
                               neg_k=args.neg_k, lr_init=args.lr_init,
                               seed=args.seed, batch_size=args.batch_size,
                               threads=args.threads)
    table = embedding.train_line(g, cfg)
    embedding.save_embeddings(table, args.out)
    if args.text_out:
        embedding.save_embeddings_text(table, args.text_out)
    print(f"embeddings: {table.vectors.shape[0]} x {table.dim} "
          f"(order={table.order}) -> {args.out}")
    return 0


def _cmd_featurize(args):
    g = load_graph(args.graph)
    fams = tuple(s.strip() for s in args.families.split(",") if s.strip())
    emb = None
    if "crossing" in fams or "line" in fams:
        if not args.embeddings:
            raise ValueError("crossing/line families need --embeddings")
        emb = embedding.load_embeddings(args.embeddings)
    extractor = features.FeatureExtractor(g, emb, families=fams,
                                          binary_adjacency=args.binary_adjacency)
    if (args.instances is None) == (args.queries is None):
        raise ValueError("pass exactly one of --instances / --queries")
    if args.instances:
        src, dst, et, label = trainset.load_train_set(args.instances)
        df = extractor.matrix(src, dst, et, labels=label)
    else:
        if not args.map:
            raise ValueError("--queries needs --map")
        mapper = ingest.load_id_map(args.map)
        qs = ingest.parse_queries(args.queries, args.labeled, mapper).queries
        labels = np.array([q.label for q in qs]) if args.labeled else None
        df = extractor.matrix(np.array([q.src for q in qs]),
                              np.array([q.dst for q in qs]),
                              np.array([q.etype for q in qs]), labels=labels)
    features.save_features(df, args.out)
    print(f"features: {len(df)} rows x {len(df.columns)} cols -> {args.out}")
    return 0


def _cmd_train_gbdt(args):
    df = features.load_features(args.features)
    if "label" not in df.columns:
        raise ValueError("features file has no label column")
    cfg = gbdt.GbdtConfig(num_trees=args.num_trees, max_depth=args.max_depth,
                          learning_rate=args.learning_rate,
                          min_samples_leaf=args.min_samples_leaf,
                          max_bins=args.max_bins, subsample=args.subsample,
                          seed=args.seed)
    names = [c for c in df.columns if c != "label"]
    model = gbdt.fit(df[names].to_numpy(np.float64),
                     df["label"].to_numpy(np.int64), cfg, feature_names=names)
    gbdt.save_model(model, args.out)
    print(f"model: {len(model.trees)} trees, "
          f"final train logloss {model.train_losses[-1]:.6f} -> {args.out}")
    return 0


def _cmd_predict(args):
    model = gbdt.load_model(args.model)
    df = features.load_features(args.features)
    X = df[model.feature_names].to_numpy(np.float64)
    probs = gbdt.predict_proba(model, X)
    with open(args.out, "w", encoding="utf-8") as f:
        for p in probs:
            f.write(repr(float(p)) + "\n")
    print(f"predictions: {len(probs)} rows -> {args.out}")
    return 0


def _cmd_eval(args):
    if args.mode == "auc":
        if not args.predictions or not args.labels:
            raise ValueError("eval auc needs --predictions and --labels")
        scores = np.loadtxt(args.predictions, ndmin=1)
        labels = _labels_from(args.labels)
        res = metrics.auc(scores, labels)
        if args.csv:
            print("metric,value,n_pos,n_neg")
            print(f"auc,{res.auc:.9f},{res.n_pos},{res.n_neg}")
        else:
            print(f"auc {res.auc:.9f} (n_pos={res.n_pos}, n_neg={res.n_neg})")
    else:
        if args.auc_self is None or not args.auc_all:
            raise ValueError("eval tscore needs --auc-self and --auc-all")
        all_auc = tuple(float(x) for x in args.auc_all.split(","))
        t = metrics.tscore(metrics.TscoreInput(args.auc_self, all_auc),
                           sample_std=args.sample_std)
        if args.csv:
            print("metric,value")
            print(f"tscore,{t:.9f}")
        else:
            print(f"tscore {t:.9f}")
    return 0


def _cmd_ablate(args):
    cfg = _pipeline_config(args)
    table = pipeline.ablate(cfg)
    width = max(len(r) for r in table["features"])
    for _, row in table.iterrows():
        print(f"{row['features']:<{width}}  {row['auc']:.9f}")
    print(f"-> {cfg.ablation_path}")
    return 0


def _cmd_run(args):
    cfg = _pipeline_config(args)
    stages = tuple(s.strip() for s in args.stages.split(",") if s.strip())
    manifest = pipeline.run_pipeline(cfg, stages)
    for entry in manifest["stages"]:
        info = entry["info"]
        extra = f" auc={info['auc']:.9f}" if "auc" in info else ""
        print(f"stage {entry['stage']}: ok ({entry['wall_time_s']:.2f}s){extra}")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "analyze": _cmd_analyze,
    "synth": _cmd_synth,
    "build-train": _cmd_build_train,
    "embed": _cmd_embed,
    "featurize": _cmd_featurize,
    "train-gbdt": _cmd_train_gbdt,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.cmd](args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # one-line machine-parsable failure
        print(f"ERROR {args.cmd}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
