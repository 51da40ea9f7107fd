"""
Runs the ddos-rag command line end to end with the rule oracle.
"""
import json
import os

import pandas as pd
import pytest

from ddos_rag import cli, evaluation, flow, knowledge_base, prompting
from ddos_rag.data import data_getters

from . import test_helper as th


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """
    Extracts a synthetic CSV and trains every artifact through the CLI.
    """
    path = tmp_path_factory.mktemp("cli")
    files = {x: str(path / x) for x in ["flows.csv", "features.jsonl", "standardizer.json", "gbdt.json", "mlp.json",
                                         "kb.jsonl"]}
    flow.write_csv(files["flows.csv"], evaluation.generate_synthetic(20, seed=4))

    steps = [
        ["extract", "--input", files["flows.csv"], "--out", files["features.jsonl"],
         "--standardizer-out", files["standardizer.json"]],
        ["train", "--features", files["features.jsonl"], "--standardizer", files["standardizer.json"],
         "--out", files["gbdt.json"], "--rounds", "10"],
        ["train-mlp", "--features", files["features.jsonl"], "--standardizer", files["standardizer.json"],
         "--out", files["mlp.json"], "--h1", "8", "--epochs", "3"],
        ["build-kb", "--features", files["features.jsonl"], "--standardizer", files["standardizer.json"],
         "--model", files["gbdt.json"], "--mlp", files["mlp.json"], "--teacher-kind", "RULE_ORACLE",
         "--out", files["kb.jsonl"]],
    ]
    for argv in steps:
        assert cli.main(["-q"] + argv) == cli.EXIT_OK, argv[0]

    files["dir"] = str(path)
    return files


def _write_config(directory, **changes):
    config = data_getters.get_run_config("five_regimes")
    config["mlp_model"] = "mlp.json"
    config.update(changes)

    filename = os.path.join(directory, "run-%d.json" % len(os.listdir(directory)))
    with open(filename, "w") as outfile:
        json.dump(config, outfile)
    return filename


def test_extract_sample(tmp_path, capsys):
    out = str(tmp_path / "features.jsonl")
    argv = ["extract", "--input", data_getters.get_file_name("flows", "sample_flows.csv"), "--out", out,
            "--standardizer-out", str(tmp_path / "std.json")]

    assert cli.main(argv) == cli.EXIT_OK

    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "rows: 8 accepted, 2 rejected"
    assert lines[1].startswith("row 7: ")
    assert lines[2].startswith("row 9: ")

    records, rows = flow.read_features(out)
    assert rows == [1, 2, 3, 4, 5, 6, 8, 10]
    assert [x[1] for x in records[:6]] == [label for _, label in th.fixture_flows()]


def test_extract_repeatable(tmp_path, workdir):
    outputs = []
    for num in range(2):
        out = str(tmp_path / ("features-%d.jsonl" % num))
        std = str(tmp_path / ("std-%d.json" % num))
        argv = ["-q", "extract", "--input", workdir["flows.csv"], "--out", out, "--standardizer-out", std]
        assert cli.main(argv) == cli.EXIT_OK

        with open(out, "rb") as infile, open(std, "rb") as stdfile:
            outputs.append((infile.read(), stdfile.read()))

    assert outputs[0] == outputs[1]


def test_trained_artifacts(workdir):
    records, _ = flow.read_features(workdir["features.jsonl"])
    assert len(records) == 120

    kb = knowledge_base.load_kb(workdir["kb.jsonl"], flow.Standardizer.load(workdir["standardizer.json"]))
    assert len(kb) == 120
    assert kb.has_signatures
    assert kb.has_rationales
    assert "custom" in kb.spaces
    assert os.path.isfile(knowledge_base.metadata_path(workdir["kb.jsonl"]))


def test_build_kb_teacher_thresholds(tmp_path, workdir):
    with th.StubServer() as stub:
        argv = ["-q", "build-kb", "--features", workdir["features.jsonl"], "--standardizer",
                workdir["standardizer.json"], "--teacher-kind", "REMOTE", "--teacher-name", "teacher-7b",
                "--endpoint", stub.endpoint, "--payload-threshold", "75", "--rate-threshold", "2",
                "--out", str(tmp_path / "kb.jsonl")]
        assert cli.main(argv) == cli.EXIT_OK

    assert len(stub.requests) == 120
    assert all(prompting.scaffold_text(75.0, 2.0) in x["prompt"] for x in stub.requests)


@pytest.mark.parametrize("space,width", [("feature", 9), ("signature", 6), ("custom", 16)])
def test_embed(tmp_path, workdir, space, width):
    out = str(tmp_path / "emb.csv")
    argv = ["embed", "--features", workdir["features.jsonl"], "--standardizer", workdir["standardizer.json"],
            "--space", space, "--model", workdir["gbdt.json"], "--mlp", workdir["mlp.json"], "--out", out]

    assert cli.main(argv) == cli.EXIT_OK
    assert pd.read_csv(out, header=None).shape == (120, width)


def test_embed_requires_model(tmp_path, workdir):
    argv = ["embed", "--features", workdir["features.jsonl"], "--standardizer", workdir["standardizer.json"],
            "--space", "signature", "--out", str(tmp_path / "emb.csv")]

    assert cli.main(argv) == cli.EXIT_CONFIG


def test_detect(tmp_path, workdir, capsys):
    config = _write_config(workdir["dir"])
    out = str(tmp_path / "report.jsonl")
    flows = [x for x, _ in th.fixture_flows()]
    features = str(tmp_path / "unlabeled.jsonl")
    flow.write_features(features, [(x, None) for x in flows])

    argv = ["detect", "--config", config, "--flows", features, "--entry", "Few-Shot", "--out", out,
            "--emit-prompts"]
    assert cli.main(argv) == cli.EXIT_OK
    assert "Few-Shot: 6 flows, 0 parse failures, 0 failed calls" in capsys.readouterr().out

    with open(out) as infile:
        lines = [json.loads(x) for x in infile]
    assert [x["predicted"] for x in lines] == [label.name for _, label in th.fixture_flows()]
    assert all(len(x["retrieved_ids"]) == 3 for x in lines)
    assert lines[0]["prompt"].count("Example ") == 3

    argv[argv.index("Few-Shot")] = "Zero-Shot"
    assert cli.main(argv) == cli.EXIT_CONFIG


def test_detect_transport_failure(tmp_path, workdir):
    model = {"kind": "REMOTE", "name": "llama3.2:1b", "endpoint": "http://127.0.0.1:%d" % th.free_port(),
             "retries": 0, "backoff_s": 0.0}
    config = _write_config(workdir["dir"], model=model)

    argv = ["detect", "--config", config, "--flows", workdir["features.jsonl"], "--out", str(tmp_path / "r.jsonl")]
    assert cli.main(argv) == cli.EXIT_FAILURE

    with open(str(tmp_path / "r.jsonl")) as infile:
        first = json.loads(infile.readline())
    assert first["transport_status"] == "TRANSPORT_ERROR"
    assert first["predicted"] == "PARSE_FAILURE"


def test_evaluate(tmp_path, workdir, capsys):
    config = _write_config(workdir["dir"])
    out_dir = str(tmp_path / "results")

    argv = ["evaluate", "--config", config, "--data", workdir["features.jsonl"], "--out-dir", out_dir,
            "--per-class", "10"]
    assert cli.main(argv) == cli.EXIT_OK

    table = capsys.readouterr().out
    assert "Macro avg" in table
    assert "Few-Shot" in table
    for name in ["report.json", "tables.md", "precision.csv", "recall.csv", "f1.csv"]:
        assert os.path.isfile(os.path.join(out_dir, name))

    with open(os.path.join(out_dir, "report.json")) as infile:
        reports = json.load(infile)
    assert [x["num_samples"] for x in reports] == [60] * 5
    assert [x["transport_failures"] for x in reports] == [0] * 5


def test_evaluate_transport_failure(tmp_path, workdir):
    model = {"kind": "REMOTE", "name": "llama3.2:1b", "endpoint": "http://127.0.0.1:%d" % th.free_port(),
             "retries": 0, "backoff_s": 0.0}
    config = _write_config(workdir["dir"], model=model)
    out_dir = str(tmp_path / "results")

    argv = ["evaluate", "--config", config, "--data", workdir["features.jsonl"], "--out-dir", out_dir,
            "--per-class", "2"]
    assert cli.main(argv) == cli.EXIT_FAILURE

    with open(os.path.join(out_dir, "report.json")) as infile:
        reports = json.load(infile)
    assert all(x["error"] is None for x in reports)
    assert [x["transport_failures"] for x in reports] == [12] * 5
    assert [x["parse_failure_rate"] for x in reports] == [1.0] * 5


def test_config_errors(tmp_path, workdir):
    out = str(tmp_path / "results")
    missing = str(tmp_path / "absent.json")
    assert cli.main(["evaluate", "--config", missing, "--data", workdir["features.jsonl"], "--out-dir", out]) == 2

    config = _write_config(workdir["dir"], grid=[{"regime": "ONE_SHOT", "retrieval_space": "custom"}],
                           mlp_model=None)
    assert cli.main(["evaluate", "--config", config, "--data", workdir["features.jsonl"], "--out-dir", out]) == 2

    # Not enough flows per class for the requested sample
    config = _write_config(workdir["dir"])
    argv = ["evaluate", "--config", config, "--data", workdir["features.jsonl"], "--out-dir", out,
            "--per-class", "50"]
    assert cli.main(argv) == cli.EXIT_FAILURE


def test_parser():
    with pytest.raises(SystemExit):
        cli.main([])

    with pytest.raises(SystemExit):
        cli.main(["-v", "-q", "extract"])

    args = cli.build_parser().parse_args(["train", "--features", "f", "--standardizer", "s", "--out", "o",
                                          "--lambda", "2.5"])
    assert args.reg_lambda == 2.5
    assert args.func is cli.cmd_train
