"""Pipeline configuration: one JSON file, deep-merged over defaults, with
dotted-key command-line overrides.
"""

import copy
import json

from .errors import DataError, UsageError

DEFAULTS = {
    "seed": 0,
    "paths": {
        "concepts": None,
        "semantic_types": None,
        "relations": None,
        "crosswalk": None,
        "semantic_groups": None,
        "ontology": "out/ontology.jsonl",
        "ontology_stats": "out/ontology_stats.json",
        "dump": None,
        "article_map_tsv": None,
        "corpus": "out/corpus.xml",
        "corpus_stats": "out/corpus_stats.json",
        "train_corpus": "out/train.xml",
        "val_corpus": "out/val.xml",
        "gold_corpus": None,
        "pretrain_pairs": "out/pretrain_pairs.txt",
        "finetune_pairs": "out/finetune_pairs.txt",
        "params_init": None,
        "params_pretrained": "out/pretrained.params",
        "params_finetuned": "out/finetuned.params",
        "checkpoint_dir": None,
        "pretrain_loss_log": "out/pretrain_losses.json",
        "finetune_loss_log": "out/finetune_losses.json",
        "pca": "out/pca.bin",
        "flat_index": "out/flat.index",
        "ivf_index": "out/ivf.index",
        "link_output": "out/links.jsonl",
        "report": "out/report.json",
    },
    "ontology": {
        "column_map": {"cui": 0, "language": 1, "vocab": 2, "source_code": 3, "text": 4},
        "drop_vocabs": [],
        # entries: {"pattern": "...", "vocabs": [...]}
        "descriptive_subterms": [],
        "drop_tuis": [],
        "drug_vocabs": [],
        "dedupe_case_insensitive": True,
        "bridge_vocab": "SNOMEDCT_US",
        "crosswalk_vocab": "SNOMEDCT_NL",
        "crosswalk_language": "DUT",
    },
    "corpus": {
        "sparql": {
            "endpoint": None,
            "site_url": "https://nl.wikipedia.org/",
            "property_id": "P2892",
            "language": "nl",
        },
        "abbreviations": None,   # null -> built-in default list
        "split_ratio": 0.8,
    },
    "encoder": {
        "n_min": 2,
        "n_max": 4,
        "buckets": 4096,
        "hidden": 64,
        "dim": 32,
        "normalize_output": True,
        "lowercase": False,
    },
    "train": {
        "learning_rate": 1e-4,
        "weight_decay": 0.01,
        "batch_size": 512,
        "epochs": 1,
    },
    "mining": {"margin": 0.2, "sample_anchors": False},
    "loss": {"alpha": 2.0, "beta": 50.0, "base": 0.5},
    "finetune": {"per_mention_cap": 50, "epochs": 1},
    "index": {"pca_k": 256, "nlist": 64, "nprobe": 8, "kmeans_iters": 10, "top_k": 10},
}


def _deep_merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path):
    try:
        with open(path, encoding="utf-8") as f:
            user = json.load(f)
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    except ValueError as e:
        raise DataError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(user, dict):
        raise DataError(f"config {path}: top level must be a JSON object")
    return _deep_merge(DEFAULTS, user)


def apply_overrides(cfg, overrides):
    """Apply ``section.key=value`` overrides; values parse as JSON, falling
    back to plain strings."""
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except ValueError:
            value = raw
        node = cfg
        keys = dotted.split(".")
        for key in keys[:-1]:
            if not isinstance(node.get(key), dict):
                node[key] = {}
            node = node[key]
        node[keys[-1]] = value
    return cfg
