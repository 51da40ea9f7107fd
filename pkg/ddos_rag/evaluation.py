"""
Evaluation protocol: stratified sampling, confusion matrices, per-class and macro
metrics, experiment sweeps and their result tables.
"""

import dataclasses
import json
import logging
import os

import numpy as np
import pandas as pd

from . import constants
from . import pipeline
from . import statistics
from .constants import ClassLabel
from .exceptions import EvaluationError
from .flow import FlowFeatures

logger = logging.getLogger(__name__)

PARSE_FAILURE = pipeline.PARSE_FAILURE
TABLE_COLUMNS = [x.display_name for x in constants.CLASS_ORDER] + ["Macro avg"]


class ConfusionMatrix(object):
    """
    Counts with true classes as rows and predicted classes plus a parse-failure column
    as columns, both in canonical class order.
    """

    def __init__(self, counts=None):
        if counts is None:
            counts = np.zeros((constants.NUM_CLASSES, constants.NUM_CLASSES + 1), dtype=int)
        counts = np.array(counts, dtype=int)
        if counts.shape != (constants.NUM_CLASSES, constants.NUM_CLASSES + 1):
            raise ValueError("ConfusionMatrix: expected shape (6, 7), found %s." % str(counts.shape))
        if np.any(counts < 0):
            raise ValueError("ConfusionMatrix: counts must be nonnegative.")
        counts.flags.writeable = False
        self.counts = counts

    @classmethod
    def from_pairs(cls, pairs):
        """
        Counts (true label, predicted label or None) pairs.
        """
        counts = np.zeros((constants.NUM_CLASSES, constants.NUM_CLASSES + 1), dtype=int)
        for true, pred in pairs:
            row = ClassLabel.parse(true).index
            col = constants.NUM_CLASSES if pred is None else ClassLabel.parse(pred).index
            counts[row, col] += 1
        return cls(counts)

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    @property
    def total(self):
        return int(np.sum(self.counts))

    def row_sums(self):
        return np.sum(self.counts, axis=1)

    def to_json(self):
        return {
            "rows": list(constants.CANONICAL_LABELS),
            "columns": list(constants.CANONICAL_LABELS) + [PARSE_FAILURE],
            "counts": self.counts.tolist()
        }


@dataclasses.dataclass
class EvalReport:
    """
    Metrics of one detector configuration. A configuration that failed carries only
    its ``error``.
    """

    name: str
    precision: dict = None
    recall: dict = None
    f1: dict = None
    macro_precision: float = None
    macro_recall: float = None
    macro_f1: float = None
    accuracy: float = None
    parse_failure_rate: float = None
    predicted_distribution: dict = None
    confusion: ConfusionMatrix = None
    config_fingerprint: str = None
    num_samples: int = 0
    transport_failures: int = 0
    error: str = None

    @property
    def failed(self):
        return self.error is not None

    def row(self, metric):
        """
        Table row for a metric: six per-class values then the macro average.
        """
        if self.failed:
            return [np.nan] * len(TABLE_COLUMNS)
        values = getattr(self, metric)
        return [values[x.value] for x in constants.CLASS_ORDER] + [getattr(self, "macro_" + metric)]

    def to_json(self):
        ret = dataclasses.asdict(self)
        ret["confusion"] = self.confusion.to_json() if self.confusion is not None else None
        return ret


def score(results, name=None, config_fingerprint=None):
    """
    Scores (true label, outcome) pairs.

    Parameters
    ----------
    results : list of tuple
        The outcome is a DetectionResult, a ClassLabel (or label string), or None for
        an unparseable answer.

    Returns
    -------
    EvalReport
        Per-class precision, recall and F1 with zero-denominator ratios reported as 0;
        parse failures count as false negatives of their true class only. Detection
        results whose model call failed or never ran score as parse failures and are
        counted in ``transport_failures``.
    """

    results = list(results)
    if len(results) == 0:
        raise EvaluationError("score: No results to score.")

    pairs = []
    transport_failures = 0
    for true, outcome in results:
        if isinstance(outcome, pipeline.DetectionResult):
            if outcome.transport_status != "OK":
                transport_failures += 1
            outcome = outcome.predicted
        elif outcome == PARSE_FAILURE:
            outcome = None
        pairs.append((true, outcome))

    cm = ConfusionMatrix.from_pairs(pairs)
    report = report_from_matrix(cm, name, config_fingerprint)
    report.transport_failures = transport_failures
    return report


def report_from_matrix(cm, name=None, config_fingerprint=None):
    counts = cm.counts
    per_class = {key: statistics.wrap_statistics(key, counts) for key in statistics.list_statistics()}

    distribution = {label: int(count) for label, count in zip(constants.CANONICAL_LABELS, np.sum(counts, axis=0))}
    distribution[PARSE_FAILURE] = int(np.sum(counts[:, -1]))

    def as_dict(values):
        return {label: float(v) for label, v in zip(constants.CANONICAL_LABELS, values)}

    return EvalReport(
        name=name,
        precision=as_dict(per_class["precision"]),
        recall=as_dict(per_class["recall"]),
        f1=as_dict(per_class["f1"]),
        macro_precision=statistics.macro(per_class["precision"]),
        macro_recall=statistics.macro(per_class["recall"]),
        macro_f1=statistics.macro(per_class["f1"]),
        accuracy=statistics.accuracy(counts),
        parse_failure_rate=statistics.parse_failure_rate(counts),
        predicted_distribution=distribution,
        confusion=cm,
        config_fingerprint=config_fingerprint,
        num_samples=cm.total)


### Sampling


def stratified_indices(labels, per_class, seed=0):
    """
    Indices of ``per_class`` records of every class, drawn without replacement by a
    seeded shuffle, grouped in canonical class order.
    """
    if per_class < 0:
        raise EvaluationError("stratified_sample: per_class must be nonnegative.")

    labels = [ClassLabel.parse(x) for x in labels]
    rng = np.random.default_rng(seed)

    ret = []
    for label in constants.CLASS_ORDER:
        idx = np.array([num for num, x in enumerate(labels) if x is label], dtype=int)
        if idx.shape[0] < per_class:
            raise EvaluationError("stratified_sample: Class %s has %d records, %d requested." %
                                  (label.value, idx.shape[0], per_class))
        if per_class == 0:
            continue
        ret.extend(rng.permutation(idx)[:per_class].tolist())
    return ret


def stratified_sample(data, per_class, seed=0):
    """
    ``per_class`` (flow, label) records per class; deterministic per seed.
    """
    data = list(data)
    idx = stratified_indices([x[1] for x in data], per_class, seed)
    return [data[x] for x in idx]


### Experiments


def run_experiment(grid, data, per_class, seed=0):
    """
    Evaluates every detector configuration on the same stratified sample.

    Parameters
    ----------
    grid : list of DetectorConfig
        The configurations, reported in this order.
    data : list of (FlowFeatures, ClassLabel)
        The labeled pool to sample from.
    per_class : int
        Records per class.
    seed : int
        Sampling seed.

    Returns
    -------
    list of EvalReport
        A configuration that raises yields a report carrying only the error.
    """

    grid = list(grid)
    if len(grid) == 0:
        raise EvaluationError("run_experiment: The detector grid is empty.")

    sample = stratified_sample(data, per_class, seed)
    flows = [x[0] for x in sample]
    labels = [x[1] for x in sample]
    logger.info("run_experiment: %d configurations on %d samples", len(grid), len(sample))

    reports = []
    for cfg in grid:
        name = getattr(cfg, "name", None)
        try:
            fingerprint = cfg.fingerprint()
            results = pipeline.detect_batch(cfg, flows)
            report = score(zip(labels, results), name, fingerprint)
        except Exception as exc:
            logger.warning("run_experiment: configuration '%s' failed: %s", name, str(exc))
            report = EvalReport(name=name, num_samples=len(sample), error="%s: %s" % (type(exc).__name__, str(exc)))
        else:
            if report.transport_failures:
                logger.warning("run_experiment: configuration '%s': %d of %d model calls failed", name,
                               report.transport_failures, len(sample))
            logger.info("run_experiment: %s macro-F1 %.4f (parse failures %.4f)", name, report.macro_f1,
                        report.parse_failure_rate)
        reports.append(report)

    return reports


### Tables


def results_table(reports, metric="f1"):
    """
    One row per report in Table column order (six classes then the macro average).
    """
    if metric not in statistics.list_statistics():
        raise KeyError("results_table: Metric '%s' not recognized." % metric)

    index = [x.name for x in reports]
    return pd.DataFrame([x.row(metric) for x in reports], index=index, columns=TABLE_COLUMNS)


def _markdown_table(df, title):
    lines = ["### %s" % title, ""]
    lines.append("| Configuration | " + " | ".join(df.columns) + " |")
    lines.append("|---" * (len(df.columns) + 1) + "|")
    for name, row in df.iterrows():
        cells = ["ERROR" if np.isnan(x) else "%.2f" % x for x in row]
        lines.append("| %s | %s |" % (name, " | ".join(cells)))
    return "\n".join(lines)


def write_tables(reports, directory):
    """
    Writes ``precision.csv``, ``recall.csv``, ``f1.csv``, ``tables.md`` and
    ``report.json`` into a directory.
    """
    os.makedirs(directory, exist_ok=True)

    sections = []
    for metric in ["precision", "recall", "f1"]:
        df = results_table(reports, metric)
        df.to_csv(os.path.join(directory, metric + ".csv"), index_label="configuration", float_format="%.6f")
        sections.append(_markdown_table(df, metric.capitalize() if metric != "f1" else "F1"))

    with open(os.path.join(directory, "tables.md"), "w") as outfile:
        outfile.write("\n\n".join(sections) + "\n")

    with open(os.path.join(directory, "report.json"), "w") as outfile:
        json.dump([x.to_json() for x in reports], outfile, indent=2, sort_keys=True)

    logger.info("Wrote %d report rows to %s", len(reports), directory)


### Synthetic data


def _uniform(rng, lo, hi):
    return float(rng.uniform(lo, hi))


def _flood_shape(rng):
    # Small packets at a high rate pass the benign gate
    rate = _uniform(rng, 10.0, 10000.0)
    return rate, 1000.0 / rate, _uniform(rng, 20.0, 60.0)


def synthetic_flow(label, rng):
    """
    Draws one flow uniformly inside the rule region of a class.
    """
    label = ClassLabel.parse(label)

    def bit():
        return int(rng.integers(0, 2))

    if label is ClassLabel.BENIGN:
        proto = int(rng.choice([constants.PROTO_ICMP, constants.PROTO_TCP, constants.PROTO_UDP]))
        if bit():
            rate, iat, payload = _flood_shape(rng)
            payload = _uniform(rng, 61.0, 1500.0)
        else:
            rate = _uniform(rng, 0.01, 0.99)
            iat, payload = 1000.0 / rate, _uniform(rng, 20.0, 60.0)
        flags = [bit() for _ in constants.FLAG_FIELDS]
        return FlowFeatures.create(proto, rate, iat, payload, *flags)

    rate, iat, payload = _flood_shape(rng)
    if label is ClassLabel.ICMP:
        return FlowFeatures.create(constants.PROTO_ICMP, rate, iat, payload)
    if label is ClassLabel.UDP:
        return FlowFeatures.create(constants.PROTO_UDP, rate, iat, payload)
    if label is ClassLabel.TCP:
        return FlowFeatures.create(constants.PROTO_TCP, rate, iat, payload, 0, bit(), 1, 0, 0)
    if label is ClassLabel.PSHACK:
        return FlowFeatures.create(constants.PROTO_TCP, rate, iat, payload, 1, 1, bit(), bit(), bit())

    rst, fin = [(1, 0), (0, 1), (1, 1)][int(rng.integers(0, 3))]
    return FlowFeatures.create(constants.PROTO_TCP, rate, iat, payload, 0, bit(), bit(), rst, fin)


def generate_synthetic(per_class, seed=0):
    """
    Rule-consistent labeled flows, ``per_class`` of every class in canonical order.
    """
    rng = np.random.default_rng(seed)
    ret = []
    for label in constants.CLASS_ORDER:
        ret.extend((synthetic_flow(label, rng), label) for _ in range(per_class))
    return ret
