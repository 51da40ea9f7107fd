"""
Tests run configuration loading, overrides and grid validation.
"""
import copy
import json

import pytest

import ddos_rag as dr
from ddos_rag import constants, evaluation, flow, gbdt, knowledge_base
from ddos_rag.client import LLMClient, ModelKind, ModelRef
from ddos_rag.data import data_getters
from ddos_rag.exceptions import ConfigurationError

from . import test_helper as th


@pytest.fixture(scope="module")
def artifact_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("artifacts")
    data = evaluation.generate_synthetic(10, seed=21)
    s = flow.fit_standardizer([x for x, _ in data])
    model = gbdt.train([(s.apply(x), label) for x, label in data], {"rounds": 5})
    kb = knowledge_base.build_kb(data, s, model, LLMClient(ModelRef.rule_oracle()))

    s.save(str(path / "standardizer.json"))
    model.save(str(path / "gbdt.json"))
    knowledge_base.save_kb(kb, str(path / "kb.jsonl"))
    return str(path)


@pytest.fixture
def base_config():
    return data_getters.get_run_config("five_regimes")


def test_packaged_five_regimes(artifact_dir):
    cfg = dr.RunConfig.packaged("five_regimes", artifact_dir, environ={})

    assert [x.name for x in cfg.grid] == ["No KB", "Short KB", "COT", "One-Shot", "Few-Shot"]
    assert cfg.per_class == 100
    assert cfg.model.kind is ModelKind.RULE_ORACLE
    assert cfg.payload_threshold == 60
    assert cfg.rate_threshold == 1

    detectors = cfg.detector_configs()
    assert [x.k for x in detectors] == [0, 0, 0, 1, 3]
    assert all(x.kb is not None and x.gbdt is not None for x in detectors)

    pool = evaluation.generate_synthetic(12, seed=3)
    reports = evaluation.run_experiment(detectors, pool, 10, cfg.seed)
    assert all(x.macro_f1 == 1.0 for x in reports)


def test_load_from_file(tmp_path, artifact_dir, base_config):
    base_config["standardizer"] = artifact_dir + "/standardizer.json"
    base_config["gbdt_model"] = artifact_dir + "/gbdt.json"
    base_config["knowledge_base"] = artifact_dir + "/kb.jsonl"
    filename = tmp_path / "run.json"
    filename.write_text(json.dumps(base_config))

    cfg = dr.RunConfig.load(str(filename), {"seed": 9, "per_class": 4, "endpoint": None}, environ={})
    assert cfg.seed == 9
    assert cfg.per_class == 4
    assert cfg.knowledge_base == artifact_dir + "/kb.jsonl"

    artifacts = cfg.load_artifacts()
    assert len(artifacts["kb"]) == 60
    assert artifacts["mlp"] is None


def test_model_overrides(artifact_dir, base_config):
    base_config["model"] = {"kind": "REMOTE", "name": "llama3.2:1b"}
    environ = {"DDOS_RAG_ENDPOINT": "http://env:1", "DDOS_RAG_TIMEOUT_MS": "5000"}

    cfg = dr.RunConfig.from_json(base_config, artifact_dir, environ=environ)
    assert cfg.model.endpoint == "http://env:1"
    assert cfg.model.timeout_ms == 5000

    overrides = {"endpoint": "http://flag:2", "model_name": "gemma3:4b", "retries": 0, "max_in_flight": 8}
    cfg = dr.RunConfig.from_json(base_config, artifact_dir, overrides, environ)
    assert cfg.model.endpoint == "http://flag:2"
    assert cfg.model.name == "gemma3:4b"
    assert cfg.model.retries == 0
    assert cfg.model.max_in_flight == 8
    assert all(x.model == cfg.model for x in cfg.grid)


def test_student_models(artifact_dir):
    cfg = dr.RunConfig.packaged("student_models", artifact_dir, environ={})

    assert len(cfg.grid) == 20
    assert sorted(set(x.model.name for x in cfg.grid)) == sorted(constants.STUDENT_MODELS)
    assert cfg.grid[4].name == "llama3.2:1b / Few-Shot"
    assert all(x.model.endpoint == constants.LLM_ENDPOINT for x in cfg.grid)


def test_entry_model_and_default_names(artifact_dir, base_config):
    base_config["grid"] = [
        {"regime": "COT"},
        {"regime": "COT", "model": {"kind": "REMOTE", "name": "gemma3:1b", "endpoint": "http://edge:3"}},
        {"regime": "ONE_SHOT", "retrieval_space": "signature"},
    ]
    cfg = dr.RunConfig.from_json(base_config, artifact_dir, environ={})

    assert [x.name for x in cfg.grid] == ["COT", "gemma3:1b / COT", "One-Shot"]
    assert cfg.grid[0].model.kind is ModelKind.RULE_ORACLE
    assert cfg.grid[1].model.kind is ModelKind.REMOTE
    assert cfg.grid[1].model.endpoint == "http://edge:3"
    assert cfg.grid[2].retrieval_space == "signature"


@pytest.mark.parametrize("change", [
    lambda c: c["grid"].append({"name": "COT", "regime": "COT"}),
    lambda c: c["grid"].append({"regime": "FEW_SHOT", "k": 5}),
    lambda c: c["grid"].append({"regime": "COT", "k": 2}),
    lambda c: c["grid"].append({"regime": "ONE_SHOT", "retrieval_space": "custom"}),
    lambda c: c["grid"].append({"regime": "NO_KB", "temperature": 0.2}),
    lambda c: c.update({"gbdt_model": None, "grid": [{"regime": "ONE_SHOT", "retrieval_space": "signature"}]}),
    lambda c: c.update({"knowledge_base": None}),
    lambda c: c.update({"standardizer": "missing.json"}),
    lambda c: c.update({"grid": []}),
    lambda c: c.update({"model": {"kind": "ORACLE"}}),
    lambda c: c.pop("model"),
])
def test_invalid_configs(artifact_dir, base_config, change):
    config = copy.deepcopy(base_config)
    change(config)

    with pytest.raises(ConfigurationError):
        dr.RunConfig.from_json(config, artifact_dir, environ={})


def test_load_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        dr.RunConfig.load(str(tmp_path / "absent.json"))

    broken = tmp_path / "broken.json"
    broken.write_text("{\"standardizer\": ")
    with pytest.raises(ConfigurationError):
        dr.RunConfig.load(str(broken))

    with pytest.raises(KeyError):
        dr.RunConfig.packaged("no_such_config", str(tmp_path))


def test_data_getters():
    assert data_getters.list_directories() == ["columns", "configs", "flows"]
    assert th.compare_lists(list(data_getters.get_column_map()), list(constants.FEATURE_ORDER) + ["label"])
    assert data_getters.get_file_name("flows", "sample_flows.csv").endswith("sample_flows.csv")
    assert data_getters.get_file("flows", "sample_flows.csv").startswith("Protocol Type,Rate")

    with pytest.raises(OSError):
        data_getters.get_file("flows", "absent.csv")
