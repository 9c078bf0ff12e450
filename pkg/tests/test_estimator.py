import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from kgtext import KG2TextGenerator
from kgtext.kg_core import instance_to_record
from kgtext.validation import check_choice, check_dataset, check_graphs, check_positive

from conftest import subset

TINY = dict(d_graph=16, d_model=16, vocab_size=200, steps=3, dropout=0.0,
            extra={"heads": 2, "ff_dim": 32, "lower_layers": 1, "encoder_layers": 1, "decoder_layers": 1,
                   "max_gen_len": 6})


def test_get_set_params_and_clone():
    est = KG2TextGenerator(lr=1e-3, strategy="rdfs")
    params = est.get_params()
    assert params["lr"] == 1e-3 and params["strategy"] == "rdfs" and params["beam_size"] == 8
    est.set_params(beam_size=2)
    assert clone(est).get_params()["beam_size"] == 2


def test_predict_before_fit_raises(synthetic16):
    with pytest.raises(NotFittedError):
        KG2TextGenerator().predict(synthetic16)


def test_invalid_params_raise_at_fit(synthetic16):
    with pytest.raises(ValueError):
        KG2TextGenerator(strategy="zigzag").fit(synthetic16)
    with pytest.raises(ValueError):
        KG2TextGenerator(extra={"bogus": 1}).fit(synthetic16)


def test_fit_predict_score_roundtrip(synthetic16, tmp_path):
    data = subset(synthetic16, 4)
    est = KG2TextGenerator(decoding="greedy", **TINY).fit(data)
    assert est.n_steps_ == 3 and len(est.history_) == 3
    preds = est.predict(data)
    assert len(preds) == 4 and all(isinstance(p, str) for p in preds)
    assert 0.0 <= est.score(data) <= 1.0
    records = [instance_to_record(i) for i in data]
    assert est.predict([{"triples": r["triples"]} for r in records]) == preds
    est.save(tmp_path / "m.ckpt")
    again = KG2TextGenerator.load(tmp_path / "m.ckpt")
    again.set_params(decoding="greedy")
    assert again.predict(data) == preds


def test_fit_accepts_records(synthetic16):
    records = [instance_to_record(i) for i in subset(synthetic16, 3)]
    est = KG2TextGenerator(**TINY).fit(records)
    assert len(est.relations_) >= 1


def test_validation_helpers(synthetic16, toy_graph):
    assert check_dataset(synthetic16) is synthetic16
    assert len(check_dataset(list(subset(synthetic16, 3)))) == 3
    assert check_graphs(toy_graph) == [toy_graph]
    with pytest.raises(TypeError):
        check_dataset("path.jsonl")
    with pytest.raises(ValueError):
        check_dataset([])
    with pytest.raises(TypeError):
        check_graphs([toy_graph, {"triples": []}])
    with pytest.raises(ValueError):
        check_positive("k", 0)
    assert check_positive("k", 0, allow_zero=True) == 0
    with pytest.raises(ValueError):
        check_choice("s", "x", ("a", "b"))
