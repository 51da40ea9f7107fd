"""
The composite detector: standardize, key, retrieve, prompt, complete and parse, for one
flow or a batch.
"""

import concurrent.futures
import dataclasses
import json
import logging

from . import fields
from . import flow
from . import prompting
from .client import LLMClient, ModelRef
from .exceptions import (ConfigurationError, DdosRagError, ParseFailure, ProtocolError, TransportError)

logger = logging.getLogger(__name__)

PARSE_FAILURE = "PARSE_FAILURE"


@dataclasses.dataclass(frozen=True)
class DetectorConfig:
    """
    Everything a detector needs: prompt template, retrieval space, model reference and
    the trained artifacts.

    ``retrieval_space`` "signature" keys retrieval by the GBDT probability vector,
    "feature" by the standardized flow and "custom" by the MLP embedding of the
    standardized flow.
    """

    prompt: prompting.PromptConfig
    model: ModelRef
    standardizer: flow.Standardizer
    retrieval_space: str = "feature"
    gbdt: object = None
    kb: object = None
    embedder: object = None
    name: str = None

    def __post_init__(self):
        if self.retrieval_space not in ("signature", "feature", "custom"):
            raise ConfigurationError("DetectorConfig: Retrieval space '%s' not recognized." % self.retrieval_space)

        if self.retrieval_space == "signature" and self.gbdt is None:
            raise ConfigurationError("DetectorConfig: Signature retrieval requires a GBDT model.")
        if self.retrieval_space == "custom" and self.embedder is None:
            raise ConfigurationError("DetectorConfig: Custom retrieval requires an MLP embedder.")

        if self.k > 0:
            if self.kb is None:
                raise ConfigurationError("DetectorConfig: Regime %s with k=%d requires a knowledge base." %
                                         (self.prompt.regime.value, self.k))
            if len(self.kb) < self.k:
                raise ConfigurationError("DetectorConfig: Knowledge base holds %d exemplars, k=%d." %
                                         (len(self.kb), self.k))
            if self.retrieval_space not in self.kb.spaces:
                raise ConfigurationError("DetectorConfig: Knowledge base has no '%s' space." % self.retrieval_space)
            if self.retrieval_space == "custom" and self.kb.space_dim("custom") != self.embedder.dims[-2]:
                raise ConfigurationError("DetectorConfig: Embedder width %d does not match the %d-d custom space." %
                                         (self.embedder.dims[-2], self.kb.space_dim("custom")))

        if self.name is None:
            object.__setattr__(self, "name", self.prompt.regime.display_name)

    @property
    def k(self):
        return self.prompt.k

    def fingerprint(self):
        data = {
            "name": self.name,
            "regime": self.prompt.regime.value,
            "k": self.k,
            "retrieval_space": self.retrieval_space,
            "include_rationale": self.prompt.include_rationale,
            "model_kind": self.model.kind.value,
            "model_name": self.model.name,
            "standardizer": self.standardizer.fingerprint(),
            "gbdt": self.gbdt.fingerprint() if self.gbdt is not None else None,
            "mlp": self.embedder.fingerprint() if self.embedder is not None else None,
            "knowledge_base": self.kb.fingerprint() if self.kb is not None else None
        }
        return fields.get_hash(data, "detector")


@dataclasses.dataclass(frozen=True)
class DetectionResult:
    """
    One detection with its intermediates. ``predicted`` is None when the response could
    not be parsed or the model call failed.
    """

    flow_id: int
    predicted: object
    rationale: str
    prompt: prompting.Prompt
    retrieved: tuple = ()
    latency_ms: float = 0.0
    transport_status: str = "OK"
    error: str = None

    @property
    def parse_failed(self):
        return self.predicted is None

    @property
    def predicted_name(self):
        return PARSE_FAILURE if self.predicted is None else self.predicted.value

    @property
    def retrieved_ids(self):
        return [x[0] for x in self.retrieved]

    def to_json(self, emit_prompt=False):
        ret = {
            "flow_id": self.flow_id,
            "predicted": self.predicted_name,
            "rationale": self.rationale,
            "retrieved_ids": self.retrieved_ids,
            "distances": [x[1] for x in self.retrieved],
            "latency_ms": self.latency_ms,
            "transport_status": self.transport_status,
            "error": self.error
        }
        if emit_prompt:
            ret["prompt"] = self.prompt.text if self.prompt is not None else None
        return ret


class Detector(object):
    """
    Runs a DetectorConfig against flows. Shareable across threads.
    """

    def __init__(self, cfg):
        self.cfg = cfg
        self.client = LLMClient(cfg.model, cfg.prompt.payload_threshold, cfg.prompt.rate_threshold)

    def __repr__(self):
        return "Detector(name='%s', regime=%s, k=%d, space=%s)" % (self.cfg.name, self.cfg.prompt.regime.value,
                                                                   self.cfg.k, self.cfg.retrieval_space)

    def __enter__(self):
        return self

    def __exit__(self, *args):
        self.close()

    def close(self):
        self.client.close()

    def query_vector(self, std):
        space = self.cfg.retrieval_space
        if space == "signature":
            return self.cfg.gbdt.predict_proba(std)
        elif space == "custom":
            return self.cfg.embedder.embed(std)
        return std

    def build_prompt(self, x):
        """
        Returns the prompt for a flow and the (id, distance) pairs it quotes.
        """
        cfg = self.cfg
        retrieved = []
        if cfg.k > 0:
            std = cfg.standardizer.apply(x)
            retrieved = cfg.kb.retrieve(self.query_vector(std), cfg.retrieval_space, cfg.k)

        prompt = prompting.build_prompt(cfg.prompt, flow.describe(x), [e for e, _ in retrieved])
        return prompt, tuple((e.id, d) for e, d in retrieved)

    def detect(self, x, flow_id=None):
        prompt, retrieved = self.build_prompt(x)

        try:
            response = self.client.complete(prompt.text)
        except TransportError as exc:
            return DetectionResult(flow_id, None, None, prompt, retrieved, 0.0, "TRANSPORT_ERROR", str(exc))
        except ProtocolError as exc:
            return DetectionResult(flow_id, None, None, prompt, retrieved, 0.0, "PROTOCOL_ERROR", str(exc))

        try:
            label = prompting.parse_answer(response.text, self.cfg.prompt.label_vocabulary)
            error = None
        except ParseFailure as exc:
            label = None
            error = str(exc)

        return DetectionResult(flow_id, label, response.text, prompt, retrieved, response.latency_ms,
                               response.transport_status, error)

    def _detect_isolated(self, item):
        flow_id, x = item
        try:
            return self.detect(x, flow_id)
        except DdosRagError as exc:
            logger.warning("detect: flow %s failed: %s", str(flow_id), str(exc))
            return DetectionResult(flow_id, None, None, None, (), 0.0, "ERROR", str(exc))

    def detect_batch(self, flows, flow_ids=None):
        """
        Detects every flow with at most ``max_in_flight`` concurrent model calls; results
        keep input order and per-flow failures stay in their own result.
        """
        flows = list(flows)
        if flow_ids is None:
            flow_ids = list(range(len(flows)))
        if len(flows) == 0:
            return []

        workers = min(self.client.max_in_flight, len(flows))
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(self._detect_isolated, zip(flow_ids, flows)))

        failed = sum(1 for x in results if x.error is not None)
        logger.info("detect_batch: %s: %d flows, %d without a label", self.cfg.name, len(results), failed)
        return results


def detect(cfg, x, flow_id=None):
    with Detector(cfg) as detector:
        return detector.detect(x, flow_id)


def detect_batch(cfg, flows, flow_ids=None):
    with Detector(cfg) as detector:
        return detector.detect_batch(flows, flow_ids)


def write_report(filename, results, emit_prompts=False):
    """
    Writes detection results as JSON Lines.
    """
    with open(filename, "w") as outfile:
        for result in results:
            outfile.write(json.dumps(result.to_json(emit_prompts)) + "\n")
    logger.info("Wrote %d detection results to %s", len(results), filename)
