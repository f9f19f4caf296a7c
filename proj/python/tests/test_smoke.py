# Copyright 2026  The openmod authors
# Apache 2.0

import json
import os
import pathlib

import numpy as np
import pytest

import openmod_py as om

CONFIGS = pathlib.Path(os.environ.get(
    "OPENMOD_CONFIGS", pathlib.Path(__file__).resolve().parents[2] / "configs" / "tiny"))


def test_wer_examples():
    r = om.wer("a b c d".split(), "a x c".split())
    assert (r["S"], r["D"], r["I"], r["wer"]) == (1, 1, 0, 0.5)
    assert om.wer(["a"], "a b b".split())["wer"] == 2.0
    with pytest.raises(om.OpenmodError):
        om.wer([], ["a"])


def test_lr_schedule_endpoints():
    assert om.lr_schedule(0, 100, 5e-4, 0.5) == 0.0
    assert om.lr_schedule(50, 100, 5e-4, 0.5) == pytest.approx(5e-4)
    assert om.lr_schedule(100, 100, 5e-4, 0.5) == pytest.approx(0.0)


def test_kmeans_separates_clouds():
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal(0, 0.1, (6, 2)), rng.normal(5, 0.1, (6, 2))])
    labels, centroids, objective = om.kmeans(pts, 2, 20, 1)
    assert len(set(labels[:6])) == 1 and len(set(labels[6:])) == 1
    assert labels[0] != labels[6]
    assert centroids.shape == (2, 2)
    assert all(b <= a + 1e-12 for a, b in zip(objective, objective[1:]))


def test_cluster_prompt_apply():
    x = np.random.default_rng(1).normal(size=(3, 4))
    w = np.random.default_rng(2).normal(size=(2, 4))
    y, u = om.cluster_prompt_apply(x, w, np.zeros(2), np.zeros((2, 4)))
    assert np.array_equal(y, x)
    assert np.allclose(u.sum(axis=1), 1.0)


def test_tensor_round_trip(tmp_path):
    x = np.arange(6, dtype=np.float64).reshape(2, 3)
    om.write_tensor(tmp_path / "x.omsr", x)
    assert (tmp_path / "x.omsr").read_bytes()[:4] == b"OMSR"
    assert np.array_equal(om.read_tensor(tmp_path / "x.omsr"), x)


def test_corpus_and_pipeline(tmp_path):
    corpus = tmp_path / "corpus"
    counts = om.generate_corpus((CONFIGS / "corpus.json").read_text(), corpus)
    assert counts == {"train": 24, "val": 4, "test": 4}
    records = om.load_manifest(corpus)
    assert len(records) == 32

    tf = om.word_frequency_table(corpus, "train")
    assert sum(tf.values()) == sum(len(r["words"]) for r in records if r["split"] == "train")
    assert all(iou == 1.0 for _, iou in om.vocab_iou_at_topk(tf, tf, [1, 3, 5]))
    assert om.cross_domain_term_counts({"x": 12}, {}, 10, 10) == 1

    split = om.common_word_split(corpus, 1)
    for rid in split["train"]:
        words = next(r["words"] for r in records if r["id"] == rid)
        assert all(tf[w] > 1 for w in words)

    model = (CONFIGS / "model.json").read_text()
    pre = om.run_stage("pretrain", corpus, tmp_path / "pre",
                       (CONFIGS / "pretrain.json").read_text(), model_config_json=model)
    assert pre["stage"] == "pretrained"
    asr = om.run_stage("asr", corpus, tmp_path / "asr", (CONFIGS / "asr.json").read_text(),
                       init=str(tmp_path / "pre"))
    assert asr["stage"] == "asr"
    prompt = om.run_stage("prompt", corpus, tmp_path / "prompt",
                          (CONFIGS / "prompt.json").read_text(), init=str(tmp_path / "asr"),
                          tf_threshold=1)
    tunable, total, ratio = om.count_tunable(tmp_path / "prompt")
    assert tunable == prompt["tunable"] and 0 < ratio <= 0.05

    rep = om.evaluate(tmp_path / "asr", corpus, "visual", "test", 2)
    assert len(rep["utterances"]) == 4
    errors = rep["S"] + rep["D"] + rep["I"]
    assert rep["wer"] == pytest.approx(errors / rep["M"])

    with pytest.raises(om.OpenmodError):
        om.run_stage("asr", corpus, tmp_path / "bad", (CONFIGS / "asr.json").read_text(),
                     init=str(tmp_path / "asr"))


def test_default_configs_parse():
    cfg = json.loads(om.default_corpus_config())
    assert cfg["vocab_size"] == 200
    assert json.loads(om.default_stage_config("asr"))["steps"] == 3000
