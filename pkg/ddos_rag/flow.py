"""
Flow records: the nine-dimensional feature vector, its standardization, CSV ingestion and
the natural-language flow description.
"""

import dataclasses
import json
import logging
import math
import os
import re

import numpy as np
import pandas as pd

from . import constants
from . import fields
from . import schema
from .constants import ClassLabel
from .data import data_getters
from .exceptions import ConfigurationError, IngestionError, ModelLoadError

logger = logging.getLogger(__name__)

_true_text = {"true", "t", "yes", "y"}
_false_text = {"false", "f", "no", "n"}


@dataclasses.dataclass(frozen=True)
class FlowFeatures:
    """
    One unidirectional flow. Field order is the frozen feature order of
    ``constants.FEATURE_ORDER``.
    """

    proto: int
    rate: float
    iat_ms: float
    payload_len: float
    flag_psh: int = 0
    flag_ack: int = 0
    flag_syn: int = 0
    flag_rst: int = 0
    flag_fin: int = 0

    def __post_init__(self):
        for name in ("rate", "iat_ms", "payload_len"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError("FlowFeatures: %s must be finite and nonnegative, found %r." % (name, value))

        flags = self.flags
        if any(x not in (0, 1) for x in flags):
            raise ValueError("FlowFeatures: flags must be 0 or 1, found %s." % str(flags))

        if self.proto != constants.PROTO_TCP and any(flags):
            raise ValueError("FlowFeatures: non-TCP flow (proto %d) cannot carry TCP flags." % self.proto)

    @classmethod
    def create(cls, proto, rate, iat_ms, payload_len, flag_psh=0, flag_ack=0, flag_syn=0, flag_rst=0, flag_fin=0):
        """
        Builds a flow with coerced types, forcing the flags of non-TCP flows to 0.
        """
        proto = int(proto)
        flags = [int(x) for x in (flag_psh, flag_ack, flag_syn, flag_rst, flag_fin)]
        if proto != constants.PROTO_TCP:
            flags = [0] * len(flags)

        return cls(proto, float(rate), float(iat_ms), float(payload_len), *flags)

    @classmethod
    def from_vector(cls, vec):
        vec = [float(x) for x in vec]
        if len(vec) != constants.NUM_FEATURES:
            raise ValueError("FlowFeatures:from_vector: expected %d values, found %d." %
                             (constants.NUM_FEATURES, len(vec)))
        return cls.create(int(round(vec[0])), vec[1], vec[2], vec[3], *[int(round(x)) for x in vec[4:]])

    @property
    def flags(self):
        return tuple(getattr(self, x) for x in constants.FLAG_FIELDS)

    def as_vector(self):
        """
        Returns the raw vector in feature order as float64.
        """
        return np.array([getattr(self, x) for x in constants.FEATURE_ORDER], dtype=np.double)


@dataclasses.dataclass(frozen=True)
class Standardizer:
    """
    Per-dimension z-score parameters, population convention with a floored stddev.
    """

    means: tuple
    stddevs: tuple

    def __post_init__(self):
        if len(self.means) != len(self.stddevs):
            raise ValueError("Standardizer: means and stddevs differ in length.")
        if any(not (x > 0) for x in self.stddevs):
            raise ValueError("Standardizer: stddevs must be positive.")

    @classmethod
    def identity(cls, size=constants.NUM_FEATURES):
        return cls(tuple([0.0] * size), tuple([1.0] * size))

    def apply(self, x):
        """
        Returns (x - means) / stddevs; ``x`` may be a FlowFeatures, a vector or a matrix.
        """
        if isinstance(x, FlowFeatures):
            x = x.as_vector()
        x = np.asarray(x, dtype=np.double)
        return (x - np.array(self.means)) / np.array(self.stddevs)

    def inverse(self, z):
        z = np.asarray(z, dtype=np.double)
        return z * np.array(self.stddevs) + np.array(self.means)

    ### Serialization

    def to_json(self):
        return {
            "means": list(self.means),
            "stddevs": list(self.stddevs),
            "feature_order": list(constants.FEATURE_ORDER)
        }

    @classmethod
    def from_json(cls, data):
        try:
            schema.validate(data, "standardizer")
        except ValueError as exc:
            raise ModelLoadError("Standardizer:from_json: invalid standardizer.\n%s" % str(exc))

        try:
            return cls(tuple(float(x) for x in data["means"]), tuple(float(x) for x in data["stddevs"]))
        except ValueError as exc:
            raise ModelLoadError("Standardizer:from_json: %s" % str(exc))

    def save(self, filename):
        with open(filename, "w") as outfile:
            json.dump(self.to_json(), outfile, indent=2)
        logger.info("Wrote standardizer to %s", filename)

    @classmethod
    def load(cls, filename):
        if not os.path.isfile(filename):
            raise OSError("Path '%s' not found." % filename)

        with open(filename, "r") as infile:
            try:
                data = json.load(infile)
            except ValueError as exc:
                raise ModelLoadError("Standardizer:load: '%s' is not valid JSON (%s)." % (filename, str(exc)))
        return cls.from_json(data)

    def fingerprint(self):
        return fields.get_hash(self.to_json(), "standardizer")


@dataclasses.dataclass
class IngestResult:
    """
    Accepted records in file order plus the per-row errors of the rejected ones.
    """

    records: list = dataclasses.field(default_factory=list)
    rows: list = dataclasses.field(default_factory=list)
    errors: list = dataclasses.field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]


### Standardization


def fit_standardizer(data):
    """
    Fits per-dimension means and population stddevs.

    Parameters
    ----------
    data : list of FlowFeatures or array-like
        The fitting set, must be nonempty.

    Returns
    -------
    Standardizer
        Zero stddevs are replaced by ``constants.STDDEV_FLOOR``.
    """

    if len(data) == 0:
        raise ValueError("fit_standardizer: Cannot fit a standardizer to an empty set.")

    if isinstance(data[0], FlowFeatures):
        matrix = np.vstack([x.as_vector() for x in data])
    else:
        matrix = np.atleast_2d(np.asarray(data, dtype=np.double))

    means = matrix.mean(axis=0)
    stddevs = np.maximum(matrix.std(axis=0), constants.STDDEV_FLOOR)
    return Standardizer(tuple(means.tolist()), tuple(stddevs.tolist()))


def standardize(s, x):
    return s.apply(x)


### Description


def describe(x):
    """
    Renders the fixed single-paragraph description of a flow.
    """
    name = constants.proto_names.get(x.proto, "OTHER")
    return constants.DESCRIPTION_TEMPLATE.format(
        name=name,
        proto=x.proto,
        rate=x.rate,
        iat=x.iat_ms,
        length=x.payload_len,
        p=x.flag_psh,
        a=x.flag_ack,
        s=x.flag_syn,
        r=x.flag_rst,
        f=x.flag_fin)


description_pattern = re.compile(r"Protocol: (?P<name>[A-Z]+) \((?P<proto>\d+)\)\. "
                                 r"Packet rate: (?P<rate>\d+(?:\.\d+)?) pps\. "
                                 r"Mean inter-arrival time: (?P<iat>\d+(?:\.\d+)?) ms\. "
                                 r"Mean payload length: (?P<length>\d+(?:\.\d+)?) bytes\. "
                                 r"TCP flags: PSH=(?P<p>[01]) ACK=(?P<a>[01]) SYN=(?P<s>[01]) "
                                 r"RST=(?P<r>[01]) FIN=(?P<f>[01])\.")


def parse_description(text):
    """
    Inverts ``describe`` at its 3-decimal precision. The last description in ``text`` wins.
    """
    matches = list(description_pattern.finditer(text))
    if len(matches) == 0:
        raise ValueError("parse_description: No flow description found.")

    m = matches[-1]
    return FlowFeatures.create(
        int(m.group("proto")), float(m.group("rate")), float(m.group("iat")), float(m.group("length")),
        int(m.group("p")), int(m.group("a")), int(m.group("s")), int(m.group("r")), int(m.group("f")))


### Ingestion


def _resolve_column_map(column_map, require_label):
    if column_map is None:
        column_map = "ciciot2023"
    if isinstance(column_map, str):
        try:
            column_map = data_getters.get_column_map(column_map)
        except KeyError:
            raise ConfigurationError("ingest_csv: Column map '%s' not found." % column_map)

    known = set(constants.FEATURE_ORDER) | {"label"}
    unknown = set(column_map) - known
    if len(unknown):
        raise ConfigurationError("ingest_csv: Unknown column map keys: %s." % ", ".join(sorted(unknown)))

    missing = [x for x in constants.FEATURE_ORDER if x not in column_map]
    if require_label and "label" not in column_map:
        missing.append("label")
    if len(missing):
        raise ConfigurationError("ingest_csv: Column map does not cover: %s." % ", ".join(missing))

    return column_map


def _parse_number(text, column):
    try:
        value = float(text)
    except ValueError:
        raise ValueError("malformed numeric value '%s' in column '%s'" % (text, column))
    if not math.isfinite(value):
        raise ValueError("non-finite value '%s' in column '%s'" % (text, column))
    return value


def _parse_flag(text, column):
    lowered = text.strip().lower()
    if lowered in _true_text:
        return 1
    if lowered in _false_text:
        return 0

    value = _parse_number(text, column)
    if value < 0 or value > 1:
        raise ValueError("flag value '%s' in column '%s' outside [0, 1]" % (text, column))
    return int(value >= 0.5)


def _parse_row(row, column_map):
    values = {}
    for field in constants.FEATURE_ORDER:
        column = column_map[field]
        text = row[column]
        if field == "proto":
            proto = _parse_number(text, column)
            if proto < 0:
                raise ValueError("negative protocol number '%s'" % text)
            values[field] = int(round(proto))
        elif field in constants.FLAG_FIELDS:
            values[field] = _parse_flag(text, column)
        else:
            value = _parse_number(text, column)
            if value < 0:
                raise ValueError("negative value '%s' in column '%s'" % (text, column))
            values[field] = value

    return FlowFeatures.create(**values)


def ingest_csv(filename, column_map=None, require_label=True):
    """
    Reads labeled flow records from a CSV file with a header row.

    Parameters
    ----------
    filename : str
        The CSV file.
    column_map : dict or str, optional
        Semantic field -> column name, or the name of a packaged column map. Defaults to
        the CICIoT-2023 column names.
    require_label : bool
        If False the label column may be absent and records carry ``None`` labels.

    Returns
    -------
    IngestResult
        Records ``(FlowFeatures, ClassLabel)`` in file order; rows that fail parsing or
        the flow invariants are skipped and listed in ``errors`` as (row number, message)
        with 1-based data row numbers.
    """

    if not os.path.isfile(filename):
        raise OSError("Path '%s' not found." % filename)

    column_map = _resolve_column_map(column_map, require_label)

    try:
        df = pd.read_csv(filename, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise ConfigurationError("ingest_csv: '%s' has no header row." % filename)

    df.columns = [x.strip() for x in df.columns]
    if not require_label and column_map.get("label") not in df.columns:
        column_map = {k: v for k, v in column_map.items() if k != "label"}

    absent = [column_map[x] for x in column_map if column_map[x] not in df.columns]
    if len(absent):
        raise ConfigurationError("ingest_csv: Missing columns in '%s': %s." % (filename, ", ".join(absent)))

    label_column = column_map.get("label")
    has_label = label_column is not None

    result = IngestResult()
    for num, row in enumerate(df.to_dict("records"), start=1):
        label = None
        if has_label:
            text = row[label_column].strip()
            if text or require_label:
                try:
                    label = ClassLabel.parse(text)
                except KeyError:
                    raise IngestionError("ingest_csv: Label string '%s' on row %d cannot be mapped to a class." %
                                         (text, num))

        try:
            flow = _parse_row(row, column_map)
        except ValueError as exc:
            result.errors.append((num, str(exc)))
            continue

        result.records.append((flow, label))
        result.rows.append(num)

    logger.info("ingest_csv: %d records, %d row errors from %s", len(result.records), len(result.errors), filename)
    for num, msg in result.errors:
        logger.debug("ingest_csv: row %d skipped: %s", num, msg)

    return result


def write_csv(filename, records, column_map=None):
    """
    Writes (FlowFeatures, label) records as a CSV readable by ``ingest_csv`` with the
    same column map.
    """
    column_map = _resolve_column_map(column_map, require_label=False)

    rows = []
    for x, label in records:
        row = {column_map[key]: getattr(x, key) for key in constants.FEATURE_ORDER}
        if "label" in column_map:
            row[column_map["label"]] = label.value if label is not None else ""
        rows.append(row)

    columns = [column_map[key] for key in constants.FEATURE_ORDER]
    if "label" in column_map:
        columns.append(column_map["label"])

    pd.DataFrame(rows, columns=columns).to_csv(filename, index=False, float_format="%.17g")
    logger.info("Wrote %d flows to %s", len(records), filename)


### Features files


def write_features(filename, records, rows=None):
    """
    Writes (FlowFeatures, label) records as JSON Lines ``{row, features, label}``.
    """
    if rows is None:
        rows = list(range(1, len(records) + 1))

    with open(filename, "w") as outfile:
        for row, (x, label) in zip(rows, records):
            line = {"row": row, "features": x.as_vector().tolist(), "label": label.value if label else None}
            outfile.write(json.dumps(line) + "\n")
    logger.info("Wrote %d flows to %s", len(records), filename)


def read_features(filename):
    """
    Reads a JSON Lines features file back into (FlowFeatures, label) records and row ids.
    """
    if not os.path.isfile(filename):
        raise OSError("Path '%s' not found." % filename)

    records = []
    rows = []
    with open(filename, "r") as infile:
        for num, line in enumerate(infile, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                flow = FlowFeatures.from_vector(data["features"])
                label = ClassLabel.parse(data["label"]) if data.get("label") else None
            except (ValueError, KeyError, TypeError) as exc:
                raise IngestionError("read_features: '%s' line %d is malformed (%s)." % (filename, num, str(exc)))
            records.append((flow, label))
            rows.append(data.get("row", num))

    return records, rows
