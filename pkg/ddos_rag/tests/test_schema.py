"""
Tests the various schema involved in the project that are not tested elsewhere.
"""
import json

import pytest

import ddos_rag as dr
from ddos_rag import embed_mlp, evaluation, flow, gbdt, knowledge_base


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    data = evaluation.generate_synthetic(4, seed=11)
    s = flow.fit_standardizer([x for x, _ in data])
    model = gbdt.train([(s.apply(x), label) for x, label in data], {"rounds": 2, "max_depth": 2})
    mlp = embed_mlp.init_mlp([9, 4, 16, 6], seed=0)
    kb = knowledge_base.build_kb(data, s, model, embedder=mlp)

    filename = str(tmp_path_factory.mktemp("schema") / "kb.jsonl")
    knowledge_base.save_kb(kb, filename)
    with open(knowledge_base.metadata_path(filename)) as infile:
        metadata = json.load(infile)

    return {"standardizer": s, "gbdt": model, "mlp": mlp, "kb": kb, "metadata": metadata}


def test_list_schemas():
    assert dr.schema.list_schemas() == ["exemplar", "gbdt", "kb_metadata", "mlp", "run_config", "standardizer"]


@pytest.mark.parametrize("name", ["five_regimes", "student_models"])
def test_packaged_run_configs(name):
    assert dr.schema.validate(dr.data.get_run_config(name), "run_config") is True


def test_artifacts(artifacts):
    assert dr.schema.validate(artifacts["standardizer"].to_json(), "standardizer")
    assert dr.schema.validate(artifacts["gbdt"].to_json(), "gbdt")
    assert dr.schema.validate(artifacts["mlp"].to_json(), "mlp")
    assert dr.schema.validate(artifacts["metadata"], "kb_metadata")

    for x in artifacts["kb"]:
        assert dr.schema.validate(x.to_json(), "exemplar")


def test_invalid_documents(artifacts):
    doc = artifacts["standardizer"].to_json()
    doc["means"] = doc["means"][:8]

    errors = dr.schema.validate(doc, "standardizer", return_errors=True)
    assert len(errors) == 1

    with pytest.raises(ValueError) as exc:
        dr.schema.validate(doc, "standardizer")
    assert "Error validating schema 'standardizer'" in str(exc.value)

    exemplar = artifacts["kb"][0].to_json()
    exemplar["label"] = "SYN"
    assert dr.schema.validate(exemplar, "exemplar", return_errors=True) is not True


def test_get_schema():
    ret = dr.schema.get_schema("run_config")
    assert "model_ref" in ret["definitions"]

    ret["required"].append("bogus")
    assert "bogus" not in dr.schema.get_schema("run_config")["required"]

    with pytest.raises(KeyError):
        dr.schema.get_schema("flow_report")
    with pytest.raises(KeyError):
        dr.schema.validate({}, "flow_report")
