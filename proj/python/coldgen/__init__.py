"""Generative recommendation under cold-start: identifiers, training and evaluation."""

import json

from . import _coldgen
from ._coldgen import (
    Codebook,
    Error,
    ParseError,
    UnsupportedError,
    ValidationError,
    lloyd_kmeans,
    ndcg_at_k,
    paired_t_test,
    recall_at_k,
    run_root,
    train_bkm,
    train_opq,
    train_rq,
)

__all__ = [
    "Codebook",
    "Error",
    "ParseError",
    "UnsupportedError",
    "ValidationError",
    "codebook_from_json",
    "config_digest",
    "default_config",
    "lloyd_kmeans",
    "ndcg_at_k",
    "normalize_config",
    "paired_t_test",
    "recall_at_k",
    "run_experiment",
    "run_root",
    "synthesize",
    "train_bkm",
    "train_opq",
    "train_rq",
]


def default_config():
    """Experiment config with every field at its default."""
    return json.loads(_coldgen.default_config_json())


def normalize_config(config):
    """Fill defaults and validate; raises ValidationError on bad keys or values."""
    return json.loads(_coldgen.normalize_config_json(json.dumps(config or {})))


def config_digest(config):
    return _coldgen.config_digest(json.dumps(config or {}))


def run_experiment(config=None, root=None, force=False, until="eval"):
    """Run (or reuse) every stage; returns run_dir, config_digest and the report dicts."""
    out = _coldgen.run_experiment(json.dumps(config or {}), str(root or ""), force, until)
    return json.loads(out)


def synthesize(config=None):
    """Synthetic corpus as (interactions TSV, item metadata JSONL) text."""
    return _coldgen.synthesize(json.dumps(config or {}))


def codebook_from_json(text):
    return _coldgen.codebook_from_json(text if isinstance(text, str) else json.dumps(text))
