"""
Tests metrics, stratified sampling, experiment sweeps and result tables.
"""
import time

import numpy as np
import pandas as pd
import pytest

import ddos_rag as dr
from ddos_rag import client, evaluation, flow, knowledge_base, statistics
from ddos_rag.client import LLMClient, ModelRef
from ddos_rag.evaluation import ConfusionMatrix
from ddos_rag.exceptions import ConfigurationError, EvaluationError
from ddos_rag.pipeline import DetectionResult, DetectorConfig
from ddos_rag.prompting import PromptConfig, Regime

from . import test_helper as th

_labels = list(dr.ClassLabel)


def _pairs_from_counts(counts):
    pairs = []
    for row in range(6):
        for col in range(7):
            predicted = None if col == 6 else _labels[col]
            pairs.extend([(_labels[row], predicted)] * int(counts[row, col]))
    return pairs


@pytest.fixture(scope="module")
def five_regimes():
    kb_data = evaluation.generate_synthetic(20, seed=99)
    s = flow.fit_standardizer([x for x, _ in kb_data])
    kb = knowledge_base.build_kb(kb_data, s, teacher=LLMClient(ModelRef.rule_oracle()))

    grid = []
    for regime in Regime:
        grid.append(DetectorConfig(PromptConfig(regime), ModelRef.rule_oracle(), s, kb=kb))
    return grid


def test_metric_oracle():
    rng = np.random.default_rng(17)

    for trial in range(20):
        counts = rng.integers(0, 8, size=(6, 7))
        # Empty some classes and columns so that zero denominators occur
        if trial % 3 == 0:
            counts[rng.integers(0, 6), :] = 0
        if trial % 4 == 0:
            counts[:, rng.integers(0, 6)] = 0

        report = evaluation.score(_pairs_from_counts(counts))
        expected = th.brute_force_metrics(counts.tolist())

        assert np.array_equal(report.confusion.counts, counts)
        for metric in ["precision", "recall", "f1"]:
            values = [report.row(metric)[c] for c in range(6)]
            assert th.isclose_lists(expected[metric], values)
            assert abs(getattr(report, "macro_" + metric) - np.mean(expected[metric])) < 1e-12

        total = counts.sum()
        assert abs(report.accuracy - np.trace(counts[:, :6]) / total) < 1e-12
        assert abs(report.parse_failure_rate - counts[:, 6].sum() / total) < 1e-12


def test_zero_denominators():
    # PSH/ACK flows are never predicted as PSH/ACK and nothing else is either
    pairs = [("ICMP", "ICMP"), ("PSHACK", "TCP"), ("PSHACK", None), ("TCP", "TCP")]
    report = evaluation.score(pairs)

    assert report.precision["PSHACK"] == 0.0
    assert report.recall["PSHACK"] == 0.0
    assert report.f1["PSHACK"] == 0.0
    assert report.precision["UDP"] == 0.0
    assert report.precision["TCP"] == 0.5
    assert report.recall["TCP"] == 1.0
    assert report.predicted_distribution == {"ICMP": 1, "UDP": 0, "TCP": 2, "PSHACK": 0, "RSTFIN": 0, "BENIGN": 0,
                                             "PARSE_FAILURE": 1}


def test_parse_failures_false_negatives_only():
    pairs = [("UDP", "UDP"), ("UDP", None), ("ICMP", "ICMP")]
    report = evaluation.score(pairs)

    assert report.precision["UDP"] == 1.0
    assert report.recall["UDP"] == 0.5
    assert report.precision["ICMP"] == 1.0
    assert report.parse_failure_rate == pytest.approx(1.0 / 3)

    assert evaluation.score([("UDP", "PARSE_FAILURE")]).parse_failure_rate == 1.0


def test_score_order_invariant():
    rng = np.random.default_rng(23)
    pairs = _pairs_from_counts(rng.integers(0, 6, size=(6, 7)))
    report = evaluation.score(pairs)

    for _ in range(5):
        shuffled = [pairs[i] for i in rng.permutation(len(pairs))]
        again = evaluation.score(shuffled)
        assert again.confusion == report.confusion
        assert again.to_json() == report.to_json()


def test_score_merge_adds_matrices():
    rng = np.random.default_rng(24)
    first = _pairs_from_counts(rng.integers(0, 6, size=(6, 7)))
    second = _pairs_from_counts(rng.integers(0, 6, size=(6, 7)))

    merged = evaluation.score(first + second)
    added = evaluation.score(first).confusion + evaluation.score(second).confusion
    assert merged.confusion == added
    assert merged.to_json() == evaluation.report_from_matrix(added).to_json()


def test_score_counts_transport_failures():
    results = [
        DetectionResult(0, dr.ClassLabel.UDP, "The answer is UDP.", None),
        DetectionResult(1, None, "no idea", None, error="no answer line"),
        DetectionResult(2, None, None, None, (), 0.0, "TRANSPORT_ERROR", "connection refused"),
        DetectionResult(3, None, None, None, (), 0.0, "PROTOCOL_ERROR", "HTTP 404"),
    ]
    report = evaluation.score(zip(["UDP", "UDP", "ICMP", "TCP"], results))

    assert report.transport_failures == 2
    assert report.predicted_distribution["PARSE_FAILURE"] == 3
    assert report.to_json()["transport_failures"] == 2

    assert evaluation.score([("UDP", "UDP"), ("TCP", None)]).transport_failures == 0


def test_statistics_shapes():
    assert statistics.list_statistics() == ["f1", "precision", "recall"]

    with pytest.raises(KeyError):
        statistics.wrap_statistics("specificity", np.zeros((6, 7)))
    with pytest.raises(ValueError):
        statistics.wrap_statistics("f1", np.zeros((6, 6)))

    with pytest.raises(EvaluationError):
        evaluation.score([])


def test_confusion_matrix():
    a = ConfusionMatrix.from_pairs([("ICMP", "UDP"), ("BENIGN", None)])
    b = ConfusionMatrix.from_pairs([("ICMP", "UDP")])

    total = a + b
    assert total.counts[0, 1] == 2
    assert total.counts[5, 6] == 1
    assert total.total == 3
    assert list(total.row_sums()) == [2, 0, 0, 0, 0, 1]
    assert total == ConfusionMatrix.from_pairs([("ICMP", "UDP")] * 2 + [("BENIGN", None)])

    doc = total.to_json()
    assert doc["columns"][-1] == "PARSE_FAILURE"
    assert len(doc["counts"]) == 6

    with pytest.raises(ValueError):
        ConfusionMatrix(np.zeros((6, 6)))
    with pytest.raises(ValueError):
        total.counts[0, 0] = 5


### Sampling


def test_stratified_sample():
    pool = evaluation.generate_synthetic(30, seed=1)
    sample = evaluation.stratified_sample(pool, 10, seed=3)

    assert len(sample) == 60
    assert [x[1] for x in sample] == [label for label in _labels for _ in range(10)]
    assert len(set(id(x) for x in sample)) == 60

    again = evaluation.stratified_sample(pool, 10, seed=3)
    assert again == sample
    assert evaluation.stratified_sample(pool, 10, seed=4) != sample
    assert evaluation.stratified_sample(pool, 0) == []

    with pytest.raises(EvaluationError):
        evaluation.stratified_sample(pool, 31)

    icmp_only = [x for x in pool if x[1] is dr.ClassLabel.ICMP]
    with pytest.raises(EvaluationError):
        evaluation.stratified_sample(icmp_only, 1)


def test_synthetic_rule_consistent():
    data = evaluation.generate_synthetic(50, seed=8)

    assert len(data) == 300
    for x, label in data:
        assert client.rule_oracle(x)[0] is label
        # The 3-decimal description keeps the same rule outcome
        assert client.rule_oracle(flow.parse_description(dr.describe(x)))[0] is label

    assert evaluation.generate_synthetic(5, seed=8) == evaluation.generate_synthetic(5, seed=8)


### Experiments


def test_five_regime_sweep(tmp_path, five_regimes):
    pool = evaluation.generate_synthetic(120, seed=0)

    start = time.perf_counter()
    first = dr.run_experiment(five_regimes, pool, 100, seed=0)
    second = dr.run_experiment(five_regimes, pool, 100, seed=0)
    assert time.perf_counter() - start < 30.0

    assert [x.name for x in first] == ["No KB", "Short KB", "COT", "One-Shot", "Few-Shot"]
    for report in first:
        assert not report.failed
        assert report.num_samples == 600
        assert report.macro_f1 == 1.0
        assert report.parse_failure_rate == 0.0
        assert report.transport_failures == 0
        assert list(report.confusion.row_sums()) == [100] * 6

    evaluation.write_tables(first, str(tmp_path / "run1"))
    evaluation.write_tables(second, str(tmp_path / "run2"))
    for name in ["report.json", "tables.md", "precision.csv", "recall.csv", "f1.csv"]:
        with open(str(tmp_path / "run1" / name), "rb") as one, open(str(tmp_path / "run2" / name), "rb") as two:
            assert one.read() == two.read(), name


def test_failed_configuration(tmp_path, five_regimes):
    class Unbuildable(object):
        name = "Broken"

        def fingerprint(self):
            raise ConfigurationError("Unbuildable:fingerprint: knowledge base missing.")

    pool = evaluation.generate_synthetic(5, seed=2)
    reports = evaluation.run_experiment([five_regimes[0], Unbuildable()], pool, 5)

    assert not reports[0].failed
    assert reports[1].failed
    assert "knowledge base missing" in reports[1].error

    table = evaluation.results_table(reports, "f1")
    assert list(table.columns) == evaluation.TABLE_COLUMNS
    assert list(table.index) == ["No KB", "Broken"]
    assert table.loc["No KB", "Macro avg"] == 1.0
    assert np.isnan(table.loc["Broken", "Benign"])

    evaluation.write_tables(reports, str(tmp_path))
    with open(str(tmp_path / "tables.md")) as infile:
        text = infile.read()
    assert "| Broken | ERROR |" in text
    assert "| No KB | 1.00 | 1.00 |" in text

    df = pd.read_csv(str(tmp_path / "precision.csv"), index_col=0)
    assert list(df.columns) == ["ICMP", "UDP", "TCP", "PSH/ACK", "RST/FIN", "Benign", "Macro avg"]

    with pytest.raises(EvaluationError):
        evaluation.run_experiment([], pool, 5)
    with pytest.raises(KeyError):
        evaluation.results_table(reports, "accuracy")


def test_report_json(five_regimes):
    pool = evaluation.generate_synthetic(3, seed=6)
    report = evaluation.run_experiment(five_regimes[2:3], pool, 3)[0]

    doc = report.to_json()
    assert doc["name"] == "COT"
    assert doc["config_fingerprint"] == five_regimes[2].fingerprint()
    assert doc["confusion"]["counts"][0][0] == 3
