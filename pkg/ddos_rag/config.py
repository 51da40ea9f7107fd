"""
Run configurations: one JSON document naming the artifacts, the model reference and the
detector grid of a detection or evaluation run.
"""

import copy
import dataclasses
import json
import logging
import os

from . import constants
from . import embed_mlp
from . import flow
from . import gbdt
from . import knowledge_base
from . import schema
from .client import ModelRef
from .data import data_getters
from .exceptions import ConfigurationError
from .pipeline import DetectorConfig
from .prompting import PromptConfig

logger = logging.getLogger(__name__)

_path_keys = ["standardizer", "gbdt_model", "mlp_model", "knowledge_base"]

# CLI flag -> ModelRef field
_model_overrides = {
    "endpoint": "endpoint",
    "model_name": "name",
    "retries": "retries",
    "timeout_ms": "timeout_ms",
    "max_in_flight": "max_in_flight"
}


@dataclasses.dataclass(frozen=True)
class GridEntry:
    name: str
    prompt: PromptConfig
    retrieval_space: str
    model: ModelRef


@dataclasses.dataclass(frozen=True)
class RunConfig:
    standardizer: str
    model: ModelRef
    grid: tuple
    gbdt_model: str = None
    mlp_model: str = None
    knowledge_base: str = None
    strict_fingerprints: bool = False
    seed: int = 0
    per_class: int = 500
    column_map: object = None
    payload_threshold: float = constants.PAYLOAD_THRESHOLD
    rate_threshold: float = constants.RATE_THRESHOLD

    @classmethod
    def from_json(cls, data, base_dir=".", overrides=None, environ=None):
        """
        Validates a run config and resolves it.

        Parameters
        ----------
        data : dict
            The config document.
        base_dir : str
            Relative artifact paths are resolved against this directory.
        overrides : dict, optional
            Scalar overrides: ``seed``, ``per_class`` and the model fields ``endpoint``,
            ``model_name``, ``retries``, ``timeout_ms``, ``max_in_flight``. None values
            are ignored.
        environ : dict, optional
            Environment for ModelRef defaults, ``os.environ`` if not given.
        """

        errors = schema.validate(data, "run_config", return_errors=True)
        if errors is not True:
            raise ConfigurationError("RunConfig: invalid run config:\n%s" % "\n".join(x.message for x in errors))

        data = copy.deepcopy(data)
        overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

        for key in _path_keys:
            if data.get(key):
                path = os.path.join(base_dir, data[key])
                if not os.path.exists(path):
                    raise ConfigurationError("RunConfig: %s '%s' not found." % (key, path))
                data[key] = path
            else:
                data[key] = None

        for key in ["seed", "per_class"]:
            if key in overrides:
                data[key] = overrides[key]

        model_data = dict(data["model"])
        for flag, field in _model_overrides.items():
            if flag in overrides:
                model_data[field] = overrides[flag]
        model = ModelRef.from_json(model_data, environ)

        thresholds = data.get("thresholds", {})
        payload = thresholds.get("payload_len", constants.PAYLOAD_THRESHOLD)
        rate = thresholds.get("rate", constants.RATE_THRESHOLD)

        grid = []
        for entry in data["grid"]:
            grid.append(_grid_entry(entry, data, model, payload, rate, environ))

        names = [x.name for x in grid]
        if len(set(names)) != len(names):
            raise ConfigurationError("RunConfig: grid entry names must be unique, found %s." % str(names))

        return cls(
            standardizer=data["standardizer"],
            model=model,
            grid=tuple(grid),
            gbdt_model=data["gbdt_model"],
            mlp_model=data["mlp_model"],
            knowledge_base=data["knowledge_base"],
            strict_fingerprints=data.get("strict_fingerprints", False),
            seed=data.get("seed", 0),
            per_class=data.get("per_class", 500),
            column_map=data.get("column_map"),
            payload_threshold=payload,
            rate_threshold=rate)

    @classmethod
    def load(cls, filename, overrides=None, environ=None):
        if not os.path.isfile(filename):
            raise ConfigurationError("RunConfig: config file '%s' not found." % filename)

        with open(filename, "r") as infile:
            try:
                data = json.load(infile)
            except ValueError as exc:
                raise ConfigurationError("RunConfig: '%s' is not valid JSON (%s)." % (filename, str(exc)))

        ret = cls.from_json(data, os.path.dirname(os.path.abspath(filename)), overrides, environ)
        logger.info("Read run config %s (%d grid entries)", filename, len(ret.grid))
        return ret

    @classmethod
    def packaged(cls, name, base_dir, overrides=None, environ=None):
        """
        Resolves a run config shipped in ``ddos_rag/data/configs`` against a directory
        holding its artifacts.
        """
        return cls.from_json(data_getters.get_run_config(name), base_dir, overrides, environ)

    ### Artifacts

    def load_artifacts(self):
        """
        Loads the standardizer, the optional GBDT and MLP models and the knowledge base,
        checking the knowledge base fingerprints.
        """
        ret = {"standardizer": flow.Standardizer.load(self.standardizer), "gbdt": None, "mlp": None, "kb": None}
        if self.gbdt_model:
            ret["gbdt"] = gbdt.GbdtModel.load(self.gbdt_model)
        if self.mlp_model:
            ret["mlp"] = embed_mlp.MlpModel.load(self.mlp_model)
        if self.knowledge_base:
            ret["kb"] = knowledge_base.load_kb(
                self.knowledge_base, ret["standardizer"], ret["gbdt"], strict=self.strict_fingerprints)
        return ret

    def detector_configs(self, artifacts=None):
        """
        Builds one DetectorConfig per grid entry, in grid order.
        """
        if artifacts is None:
            artifacts = self.load_artifacts()

        ret = []
        for entry in self.grid:
            ret.append(
                DetectorConfig(
                    prompt=entry.prompt,
                    model=entry.model,
                    standardizer=artifacts["standardizer"],
                    retrieval_space=entry.retrieval_space,
                    gbdt=artifacts["gbdt"],
                    kb=artifacts["kb"],
                    embedder=artifacts["mlp"] if entry.retrieval_space == "custom" else None,
                    name=entry.name))
        return ret


def _grid_entry(entry, data, model, payload, rate, environ):
    prompt = PromptConfig(
        regime=entry["regime"],
        k=entry.get("k"),
        include_rationale=entry.get("include_rationale"),
        payload_threshold=payload,
        rate_threshold=rate,
        max_chars=entry.get("max_chars"))

    space = entry.get("retrieval_space", "feature")
    if space == "signature" and not data["gbdt_model"]:
        raise ConfigurationError("RunConfig: signature retrieval requires gbdt_model.")
    if space == "custom" and not data["mlp_model"]:
        raise ConfigurationError("RunConfig: custom retrieval requires mlp_model.")
    if prompt.k > 0 and not data["knowledge_base"]:
        raise ConfigurationError("RunConfig: regime %s with k=%d requires knowledge_base." %
                                 (prompt.regime.value, prompt.k))

    entry_model = model
    if entry.get("model"):
        merged = model.to_json()
        merged.update(entry["model"])
        if merged["kind"] == "RULE_ORACLE":
            merged["endpoint"] = None
        entry_model = ModelRef.from_json(merged, environ)

    name = entry.get("name")
    if not name:
        name = prompt.regime.display_name
        if entry.get("model"):
            name = "%s / %s" % (entry_model.name, name)

    return GridEntry(name, prompt, space, entry_model)
