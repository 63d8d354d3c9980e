import json
import math

import numpy as np
import pytest

import coldgen

TINY = {
    "synth": {"n_users": 150, "n_items": 80, "latent_dim": 4, "cold_item_fraction": 0.1, "title_vocab_size": 60},
    "identifiers": {"codes_per_level": 4, "levels": 2},
    "model": {"hidden": 8},
    "train": {"epochs": 1},
    "eval": {"K": 5},
    "seed": 3,
}


def test_metrics():
    ranked = ["a", "b", "c", "d"]
    assert coldgen.recall_at_k(ranked, "c", 3) == 1
    assert coldgen.recall_at_k(ranked, "d", 3) == 0
    assert abs(coldgen.ndcg_at_k(ranked, "c", 10) - 0.5) <= 1e-12


def test_paired_t_test():
    r = coldgen.paired_t_test([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    assert r["df"] == 4
    assert abs(r["t"] - 4.2426) <= 1e-3
    assert abs(r["p"] - 0.0132) <= 1e-3


def test_quantizers():
    x = np.random.default_rng(0).normal(size=(120, 8))
    km = coldgen.lloyd_kmeans(x, 4, seed=1)
    assert km["centroids"].shape == (4, 8)
    trace = km["objective_trace"]
    assert all(b <= a for a, b in zip(trace, trace[1:]))

    rq = coldgen.train_rq(x, 3, 8, seed=1)
    assert rq.kind == "rq"
    codes = rq.quantize(x[0])
    assert len(codes) == 3
    assert rq.reconstruct(codes).shape == (8,)
    assert coldgen.codebook_from_json(rq.to_json()).digest() == rq.digest()

    opq = coldgen.train_opq(x, 4, 6, seed=1)
    r = np.asarray(opq.rotation)
    assert np.abs(r.T @ r - np.eye(8)).max() <= 1e-6

    bkm = coldgen.train_bkm(x, 2, 3, seed=1)
    for sizes in bkm.node_sizes():
        assert max(sizes) - min(sizes) <= 1


def test_config_validation():
    cfg = coldgen.default_config()
    assert cfg["eval"]["K"] == 10
    assert coldgen.normalize_config({}) == cfg
    with pytest.raises(coldgen.ValidationError):
        coldgen.normalize_config({"bogus": 1})
    with pytest.raises(coldgen.ValidationError):
        coldgen.normalize_config({"protocol": {"train_fraction": 1.5}})
    assert coldgen.config_digest(TINY) == coldgen.config_digest(json.loads(json.dumps(TINY)))
    assert coldgen.config_digest(TINY) != coldgen.config_digest({**TINY, "seed": 4})


def test_synthesize():
    tsv, jsonl = coldgen.synthesize({"n_users": 50, "n_items": 30, "latent_dim": 3, "seed": 1})
    assert tsv.count("\n") > 50
    assert all(json.loads(line)["item_id"] for line in jsonl.splitlines())


def test_run_experiment_is_deterministic(tmp_path):
    a = coldgen.run_experiment(TINY, root=tmp_path / "a")
    b = coldgen.run_experiment(TINY, root=tmp_path / "b")
    assert a["config_digest"] == coldgen.config_digest(TINY)
    assert [r["setting"] for r in a["reports"]] == ["item_cold", "user_cold"]
    assert a["reports"] == b["reports"]
    recall = a["reports"][0]["partitions"]["warm_test"]["recall"]
    assert recall is None or 0.0 <= recall <= 1.0

    partial = coldgen.run_experiment(TINY, root=tmp_path / "c", until="split")
    assert partial["reports"] == []
    with pytest.raises(coldgen.ValidationError):
        coldgen.run_experiment(TINY, root=tmp_path / "d", until="nowhere")
    assert not math.isnan(a["reports"][1]["partitions"]["warm_test"]["ndcg"] or 0.0)
