"""Command line front end: one subcommand per pipeline stage, a shared JSON
config file with dotted-key overrides, atomic artifact writes, and
machine-readable one-line JSON summaries on stdout.

Exit codes: 0 success, 1 usage error, 2 data error, 3 I/O error.
"""

import argparse
import io
import json
import logging
import os
import sys

import numpy as np

from . import corpus as corpus_mod
from . import encoder as enc
from . import evaluation as eval_mod
from . import index as index_mod
from . import ontology as onto_mod
from . import training as train_mod
from .artifacts import write_text_atomic
from .config import apply_overrides, load_config
from .errors import ArtifactError, DataError, NetworkError, UsageError

log = logging.getLogger("belforge")

SUBCOMMANDS = [
    "ontology-build", "corpus-compile", "corpus-subset", "pairs", "train",
    "finetune", "index-build", "link", "evaluate", "stats",
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="belforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="|".join(SUBCOMMANDS))
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config override, e.g. train.epochs=3")
        p.add_argument("--quiet", action="store_true",
                       help="suppress progress output on stderr")
        p.add_argument("--seed", type=int, help="override the pipeline seed")
        if name in ("train", "finetune"):
            p.add_argument("--epochs", type=int, help="number of training epochs")
        if name == "pairs":
            p.add_argument("--stage", choices=["pretrain", "finetune"],
                           default="pretrain")
        if name in ("index-build", "link", "evaluate"):
            p.add_argument("--params", help="encoder params artifact to use")
        if name == "link":
            p.add_argument("--mention", help="link a single mention")
            p.add_argument("--input", help="file with one mention per line")
            p.add_argument("--top-k", type=int, dest="top_k")
            p.add_argument("--index", choices=["flat", "ivf"], dest="index_kind")
        if name == "evaluate":
            p.add_argument("--index", choices=["flat", "ivf"], dest="index_kind")
    return parser


def _open_input(path, what, mode="r"):
    if not path:
        raise UsageError(f"config does not name a path for {what}")
    try:
        if "b" in mode:
            return open(path, mode)
        return open(path, mode, encoding="utf-8")
    except OSError as e:
        raise ArtifactError(f"cannot open {what} at {path}: {e}") from e


def _summary(payload):
    sys.stdout.write(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def _filter_config(cfg):
    o = cfg["ontology"]
    patterns = [(e["pattern"], frozenset(e["vocabs"]))
                for e in o["descriptive_subterms"]]
    return onto_mod.FilterConfig(
        drop_vocabs=frozenset(o["drop_vocabs"]),
        descriptive_subterm_patterns=patterns,
        drop_tuis=frozenset(o["drop_tuis"]),
        drug_vocabs=frozenset(o["drug_vocabs"]),
        dedupe_case_insensitive=o["dedupe_case_insensitive"],
        bridge_vocab=o["bridge_vocab"],
        crosswalk_vocab=o["crosswalk_vocab"],
        crosswalk_language=o["crosswalk_language"],
    )


def _load_ontology(cfg):
    with _open_input(cfg["paths"]["ontology"], "ontology") as f:
        return onto_mod.parse_ontology(f)


def _train_configs(cfg, epochs=None):
    t = cfg["train"]
    train_cfg = train_mod.TrainConfig(
        learning_rate=t["learning_rate"], weight_decay=t["weight_decay"],
        batch_size=t["batch_size"],
        epochs=epochs if epochs is not None else t["epochs"],
        seed=cfg["seed"])
    mining_cfg = train_mod.MiningConfig(
        margin=cfg["mining"]["margin"],
        sample_anchors=cfg["mining"]["sample_anchors"])
    loss_cfg = train_mod.MsLossConfig(
        alpha=cfg["loss"]["alpha"], beta=cfg["loss"]["beta"],
        base=cfg["loss"]["base"])
    return train_cfg, mining_cfg, loss_cfg


def _resolve_params_path(cfg, args):
    if getattr(args, "params", None):
        return args.params
    paths = cfg["paths"]
    if paths["params_finetuned"] and os.path.exists(paths["params_finetuned"]):
        return paths["params_finetuned"]
    return paths["params_pretrained"]


def _abbreviations(cfg):
    abbrev = cfg["corpus"]["abbreviations"]
    if abbrev is None:
        return corpus_mod.DEFAULT_ABBREVIATIONS
    return frozenset(abbrev)


def cmd_ontology_build(cfg, args):
    paths = cfg["paths"]
    with _open_input(paths["concepts"], "concepts") as f:
        concepts, malformed = onto_mod.parse_concepts(
            f, cfg["ontology"]["column_map"])
    sty = []
    if paths["semantic_types"]:
        with _open_input(paths["semantic_types"], "semantic types") as f:
            sty, _ = onto_mod.parse_semantic_types(f)
    crosswalk = []
    if paths["crosswalk"]:
        with _open_input(paths["crosswalk"], "crosswalk") as f:
            crosswalk, _ = onto_mod.parse_crosswalk(f)
    groups = onto_mod.SemanticGroupMap({})
    if paths["semantic_groups"]:
        with _open_input(paths["semantic_groups"], "semantic groups") as f:
            groups = onto_mod.SemanticGroupMap(json.load(f))

    records, stats = onto_mod.build_ontology(
        concepts, sty, groups, crosswalk, _filter_config(cfg))
    buf = io.StringIO()
    onto_mod.serialize_ontology(records, buf)
    write_text_atomic(paths["ontology"], buf.getvalue())
    write_text_atomic(paths["ontology_stats"], stats.to_json() + "\n")
    _summary({"command": "ontology-build", "records": len(records),
              "malformed_lines": malformed,
              "steps": [{"step": n, "remaining": c} for n, c in stats.steps]})
    return 0


def _load_article_map(cfg):
    paths = cfg["paths"]
    if paths["article_map_tsv"]:
        with _open_input(paths["article_map_tsv"], "article map TSV") as f:
            return corpus_mod.load_article_map_tsv(f)
    sp = cfg["corpus"]["sparql"]
    if sp["endpoint"]:
        return corpus_mod.load_article_map_sparql(
            sp["endpoint"], sp["site_url"], sp["property_id"], sp["language"])
    raise UsageError("no article map source configured (TSV path or SPARQL endpoint)")


def cmd_corpus_compile(cfg, args):
    paths = cfg["paths"]
    amap = _load_article_map(cfg)
    ontology = None
    if paths["ontology"] and os.path.exists(paths["ontology"]):
        ontology = _load_ontology(cfg)
    with _open_input(paths["dump"], "wiki dump", mode="rb") as f:
        sentences, mentions, stats = corpus_mod.compile_corpus(
            corpus_mod.parse_dump(f), amap,
            abbreviations=_abbreviations(cfg), ontology=ontology)
    full = corpus_mod.CorpusSlice(sentences=sentences, mentions=mentions)
    buf = io.StringIO()
    corpus_mod.serialize_corpus(full, buf)
    write_text_atomic(paths["corpus"], buf.getvalue())
    write_text_atomic(paths["corpus_stats"], stats.to_json() + "\n")
    _summary({"command": "corpus-compile", "sentences": stats.sentences,
              "mentions": stats.mentions, "map_entries": len(amap.entries)})
    return 0


def cmd_corpus_subset(cfg, args):
    paths = cfg["paths"]
    with _open_input(paths["corpus"], "corpus") as f:
        full = corpus_mod.parse_corpus(f)
    ontology = _load_ontology(cfg)
    train, val = corpus_mod.build_star_subset(
        full.sentences, full.mentions, ontology,
        split_ratio=cfg["corpus"]["split_ratio"], seed=cfg["seed"])
    for part, path in ((train, paths["train_corpus"]), (val, paths["val_corpus"])):
        buf = io.StringIO()
        corpus_mod.serialize_corpus(part, buf)
        write_text_atomic(path, buf.getvalue())
    _summary({"command": "corpus-subset",
              "train_mentions": len(train.mentions),
              "val_mentions": len(val.mentions)})
    return 0


def cmd_pairs(cfg, args):
    paths = cfg["paths"]
    ontology = _load_ontology(cfg)
    if args.stage == "pretrain":
        pairs = train_mod.generate_pretrain_pairs(ontology)
        out_path = paths["pretrain_pairs"]
    else:
        with _open_input(paths["train_corpus"], "train corpus") as f:
            star = corpus_mod.parse_corpus(f)
        pairs = train_mod.generate_finetune_pairs(
            star, ontology, per_mention_cap=cfg["finetune"]["per_mention_cap"])
        out_path = paths["finetune_pairs"]
    buf = io.StringIO()
    written = train_mod.write_pairs(pairs, buf)
    write_text_atomic(out_path, buf.getvalue())
    _summary({"command": "pairs", "stage": args.stage, "pairs": written})
    return 0


def _initial_params(cfg):
    paths = cfg["paths"]
    if paths["params_init"] and os.path.exists(paths["params_init"]):
        return enc.load_params(paths["params_init"])
    e = cfg["encoder"]
    return enc.init_params(
        cfg["seed"], n_min=e["n_min"], n_max=e["n_max"], buckets=e["buckets"],
        hidden=e["hidden"], dim=e["dim"],
        normalize_output=e["normalize_output"], lowercase=e["lowercase"])


def cmd_train(cfg, args):
    paths = cfg["paths"]
    params = _initial_params(cfg)
    with _open_input(paths["pretrain_pairs"], "pretrain pairs") as f:
        pairs = train_mod.read_pairs(f)
    train_cfg, mining_cfg, loss_cfg = _train_configs(cfg, epochs=args.epochs)
    params, loss_log = train_mod.run_training(
        params, pairs, train_cfg, mining_cfg, loss_cfg, train_cfg.epochs,
        checkpoint_dir=paths["checkpoint_dir"])
    enc.save_params(paths["params_pretrained"], params)
    train_mod.write_loss_log(paths["pretrain_loss_log"], loss_log)
    _summary({"command": "train", "epochs": train_cfg.epochs,
              "pairs": len(pairs), "loss_log": loss_log})
    return 0


def cmd_finetune(cfg, args):
    paths = cfg["paths"]
    if not paths["params_pretrained"] or not os.path.exists(paths["params_pretrained"]):
        raise ArtifactError(
            f"finetune requires the pretrained params artifact at "
            f"{paths['params_pretrained']}")
    params = enc.load_params(paths["params_pretrained"])
    with _open_input(paths["finetune_pairs"], "finetune pairs") as f:
        pairs = train_mod.read_pairs(f)
    epochs = args.epochs if args.epochs is not None else cfg["finetune"]["epochs"]
    train_cfg, mining_cfg, loss_cfg = _train_configs(cfg, epochs=epochs)
    params, loss_log = train_mod.run_training(
        params, pairs, train_cfg, mining_cfg, loss_cfg, epochs,
        checkpoint_dir=paths["checkpoint_dir"])
    enc.save_params(paths["params_finetuned"], params)
    train_mod.write_loss_log(paths["finetune_loss_log"], loss_log)
    _summary({"command": "finetune", "epochs": epochs,
              "pairs": len(pairs), "loss_log": loss_log})
    return 0


def cmd_index_build(cfg, args):
    paths = cfg["paths"]
    params = enc.load_params(_resolve_params_path(cfg, args))
    ontology = _load_ontology(cfg)
    if not ontology:
        raise DataError("cannot build an index from an empty ontology")
    embeddings = np.vstack([enc.encode(params, r.text) for r in ontology])
    ids = np.array([r.term_id for r in ontology], dtype=np.int64)

    icfg = cfg["index"]
    k = min(icfg["pca_k"], embeddings.shape[0] - 1, embeddings.shape[1])
    transform = index_mod.fit_pca(embeddings, k)
    compressed = index_mod.apply_pca(transform, embeddings)
    flat = index_mod.build_flat(compressed, ids)
    nlist = min(icfg["nlist"], len(ids))
    ivf = index_mod.build_ivf(compressed, ids, nlist, seed=cfg["seed"],
                              kmeans_iters=icfg["kmeans_iters"])
    ivf.nprobe = min(icfg["nprobe"], nlist)
    index_mod.save_pca(paths["pca"], transform)
    index_mod.save_flat(paths["flat_index"], flat)
    index_mod.save_ivf(paths["ivf_index"], ivf)
    _summary({"command": "index-build", "terms": len(ids), "pca_k": k,
              "nlist": nlist})
    return 0


def _load_link_stack(cfg, args):
    params = enc.load_params(_resolve_params_path(cfg, args))
    transform = index_mod.load_pca(cfg["paths"]["pca"])
    kind = getattr(args, "index_kind", None) or "flat"
    if kind == "ivf":
        index = index_mod.load_ivf(cfg["paths"]["ivf_index"])
    else:
        index = index_mod.load_flat(cfg["paths"]["flat_index"])
    ontology = _load_ontology(cfg)
    id_to_cui = {r.term_id: r.cui for r in ontology}
    return params, transform, index, id_to_cui, ontology


def cmd_link(cfg, args):
    params, transform, index, id_to_cui, _ontology = _load_link_stack(cfg, args)
    top_k = args.top_k or cfg["index"]["top_k"]

    def link_one(mention):
        cui, neighbors = index_mod.link_mention(
            mention, params, transform, index, id_to_cui, top_k=top_k)
        return {
            "mention": mention, "predicted_cui": cui,
            "score": neighbors[0].score,
            "top_k": [{"term_id": n.term_id, "cui": id_to_cui[n.term_id],
                       "score": n.score} for n in neighbors],
        }

    if args.mention is not None:
        result = link_one(args.mention)
        _summary(result)
        return 0
    if not args.input:
        raise UsageError("link requires --mention or --input")
    lines = []
    errors = 0
    with _open_input(args.input, "mention list") as f:
        for raw in f:
            mention = raw.rstrip("\n")
            try:
                lines.append(json.dumps(link_one(mention), sort_keys=True,
                                        separators=(",", ":")))
            except DataError as e:
                errors += 1
                lines.append(json.dumps({"mention": mention, "error": str(e)},
                                        sort_keys=True, separators=(",", ":")))
    write_text_atomic(cfg["paths"]["link_output"],
                      "\n".join(lines) + ("\n" if lines else ""))
    _summary({"command": "link", "mentions": len(lines), "errors": errors})
    return 0


def cmd_evaluate(cfg, args):
    paths = cfg["paths"]
    params, transform, index, id_to_cui, ontology = _load_link_stack(cfg, args)
    with _open_input(paths["gold_corpus"], "gold corpus") as f:
        gold_slice = corpus_mod.parse_corpus(f)
    group_by_cui = {}
    for r in ontology:
        group_by_cui.setdefault(r.cui, r.group)
    gold = [
        eval_mod.GoldMention(mention=m.anchor, gold_cui=m.cui,
                             group=group_by_cui.get(m.cui, "OTHER"))
        for m in gold_slice.mentions
    ]
    graph = eval_mod.RelationGraph()
    if paths["relations"]:
        with _open_input(paths["relations"], "relations") as f:
            rows, _ = onto_mod.parse_relations(f)
        graph = eval_mod.build_relation_graph(rows)

    predictions = {}
    for g in gold:
        if g.mention in predictions:
            continue
        try:
            cui, _ = index_mod.link_mention(
                g.mention, params, transform, index, id_to_cui,
                top_k=cfg["index"]["top_k"])
            predictions[g.mention] = cui
        except DataError:
            pass
    report = eval_mod.evaluate(predictions, gold, graph,
                               metadata={"seed": cfg["seed"]})
    write_text_atomic(paths["report"], eval_mod.report_to_json(report) + "\n")
    if not args.quiet:
        sys.stderr.write(eval_mod.render_report(report))
    _summary({"command": "evaluate", "mentions": report.total.count,
              "accuracy": report.total.accuracy,
              "one_dist_accuracy": report.total.one_dist_accuracy})
    return 0


def cmd_stats(cfg, args):
    payload = {"command": "stats"}
    for key in ("ontology_stats", "corpus_stats"):
        path = cfg["paths"][key]
        if path and os.path.exists(path):
            with open(path, encoding="utf-8") as f:
                payload[key] = json.load(f)
    _summary(payload)
    return 0


_HANDLERS = {
    "ontology-build": cmd_ontology_build,
    "corpus-compile": cmd_corpus_compile,
    "corpus-subset": cmd_corpus_subset,
    "pairs": cmd_pairs,
    "train": cmd_train,
    "finetune": cmd_finetune,
    "index-build": cmd_index_build,
    "link": cmd_link,
    "evaluate": cmd_evaluate,
    "stats": cmd_stats,
}


def run(argv):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        raise UsageError("a subcommand is required")
    logging.basicConfig(stream=sys.stderr,
                        level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = load_config(args.config)
    apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return _HANDLERS[args.command](cfg, args)


def main(argv=None):
    try:
        return run(sys.argv[1:] if argv is None else argv)
    except UsageError as e:
        sys.stderr.write(f"usage error: {e}\n")
        _build_parser().print_usage(sys.stderr)
        return 1
    except (DataError, NetworkError) as e:
        sys.stderr.write(f"data error: {e}\n")
        return 2
    except (ArtifactError, OSError) as e:
        sys.stderr.write(f"i/o error: {e}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
