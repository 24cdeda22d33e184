import math

import pytest

import epar


def test_config_presets_and_overrides():
    small = epar.config("small")
    assert small["word_dim"] == "100"
    tuned = epar.config("small", {"lstm_units": "16"})
    assert tuned["lstm_units"] == "16"
    with pytest.raises(epar.ConfigError):
        epar.config("small", {"no_such_key": "1"})


def test_tfidf_scores_prefer_the_matching_document():
    scores = epar.tfidf_scores(["the haunted castle is old .", "a river runs .", "castle walls ."], "haunted castle")
    assert len(scores) == 3
    assert scores[0] == max(scores)
    assert scores[1] == 0.0
    assert all(math.isfinite(s) for s in scores)


def test_synthetic_records_and_selection():
    records, gold = epar.synthetic(instances=5, seed=3)
    assert len(records) == 5
    for r in records:
        assert r["answer"] in r["candidates"]
        assert r["id"] in gold
        picked = epar.two_hop_select(r, 3)
        assert len(picked) == 3
        assert len(set(picked)) == 3


def test_train_load_predict_trace(tmp_path):
    data = tmp_path / "data"
    epar.write_synthetic(data, train=8, dev=4, seed=5)
    overrides = {"word_dim": "6", "lstm_units": "3", "proposer_hidden": "4", "assembler_hidden": "4", "epochs": "1"}
    summary = epar.train(data, tmp_path / "model", "small", overrides)
    assert summary["steps"] >= 1
    assert all(math.isfinite(x) for x in summary["losses"])
    assert 0.0 <= summary["best_dev"] <= 1.0

    model = epar.Model.load(tmp_path / "model")
    assert model.config["lstm_units"] == "3"
    records, _ = epar.synthetic(instances=2, seed=11)
    for r in records:
        assert model.predict(r) in r["candidates"]
        trace = model.trace(r)
        assert trace["id"] == r["id"]
        assert trace["chains"]
