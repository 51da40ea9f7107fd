"""Provides an interface to a local generation server and the built-in rule oracle model"""

import concurrent.futures
import dataclasses
import enum
import json
import logging
import os
import threading
import time

import requests

from . import constants
from . import flow
from .constants import ClassLabel
from .exceptions import ConfigurationError, ProtocolError, TransportError

logger = logging.getLogger(__name__)

_env_keys = {
    "endpoint": "DDOS_RAG_ENDPOINT",
    "timeout_ms": "DDOS_RAG_TIMEOUT_MS",
    "retries": "DDOS_RAG_RETRIES",
    "max_in_flight": "DDOS_RAG_MAX_IN_FLIGHT",
}


class ModelKind(enum.Enum):
    REMOTE = "REMOTE"
    RULE_ORACLE = "RULE_ORACLE"


@dataclasses.dataclass(frozen=True)
class ModelRef:
    """
    A reference to the model answering prompts. Only REMOTE models use the endpoint.
    """

    kind: ModelKind
    name: str = "rule-oracle"
    endpoint: str = None
    path: str = constants.LLM_GENERATE_PATH
    timeout_ms: int = constants.LLM_TIMEOUT_MS
    retries: int = constants.LLM_RETRIES
    max_in_flight: int = constants.LLM_MAX_IN_FLIGHT
    backoff_s: float = 0.5

    def __post_init__(self):
        try:
            kind = ModelKind(self.kind.value if isinstance(self.kind, ModelKind) else str(self.kind).upper())
        except ValueError:
            raise ConfigurationError("ModelRef: Model kind '%s' not recognized." % str(self.kind))
        object.__setattr__(self, "kind", kind)

        if kind is ModelKind.REMOTE and not self.endpoint:
            raise ConfigurationError("ModelRef: REMOTE model '%s' requires an endpoint." % self.name)
        if self.retries < 0 or self.max_in_flight < 1 or self.timeout_ms < 1:
            raise ConfigurationError("ModelRef: retries must be >= 0, max_in_flight and timeout_ms >= 1.")

    @classmethod
    def rule_oracle(cls):
        return cls(ModelKind.RULE_ORACLE)

    @classmethod
    def from_json(cls, data, environ=None):
        """
        Builds a reference from a config object; endpoint, timeout, retries and in-flight
        cap fall back to the DDOS_RAG_* environment variables, then to the defaults.
        """
        environ = os.environ if environ is None else environ
        data = dict(data)

        defaults = {
            "endpoint": constants.LLM_ENDPOINT,
            "timeout_ms": constants.LLM_TIMEOUT_MS,
            "retries": constants.LLM_RETRIES,
            "max_in_flight": constants.LLM_MAX_IN_FLIGHT
        }
        for key, env in _env_keys.items():
            if data.get(key) is not None:
                continue
            if env in environ:
                value = environ[env]
                if key != "endpoint":
                    try:
                        value = int(value)
                    except ValueError:
                        raise ConfigurationError("ModelRef: Environment variable %s='%s' is not an integer." %
                                                 (env, value))
                data[key] = value
            else:
                data[key] = defaults[key]

        if str(data.get("kind", "")).upper() == ModelKind.RULE_ORACLE.value:
            data["endpoint"] = None

        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError("ModelRef: %s" % str(exc))

    def to_json(self):
        ret = dataclasses.asdict(self)
        ret["kind"] = self.kind.value
        return ret


@dataclasses.dataclass(frozen=True)
class ModelResponse:
    """
    A completion. ``text`` is present when ``transport_status`` is OK; failed items of
    ``complete_many`` carry the error message instead.
    """

    text: str
    latency_ms: float
    transport_status: str = "OK"
    error: str = None

    @property
    def ok(self):
        return self.transport_status == "OK"


### Rule oracle


def rule_oracle(x, payload_threshold=constants.PAYLOAD_THRESHOLD, rate_threshold=constants.RATE_THRESHOLD):
    """
    Executes the three-step reasoning scaffold on a flow.

    Parameters
    ----------
    x : FlowFeatures
        The flow to classify.
    payload_threshold, rate_threshold : float
        Benign gate: flows with payload_len above the first or rate below the second are
        BENIGN.

    Returns
    -------
    tuple
        (ClassLabel, rationale); the rationale narrates the branches taken and ends with
        "The answer is <LABEL>."
    """

    lines = []
    label = None

    step = "Step 1 (packet-size & rate gate): mean payload length is %.3f B and packet rate is %.3f pps. " % (
        x.payload_len, x.rate)
    if x.payload_len > payload_threshold:
        lines.append(step + "The payload exceeds %g B, so the flow is benign." % payload_threshold)
        label = ClassLabel.BENIGN
    elif x.rate < rate_threshold:
        lines.append(step + "The rate is below %g pps, so the flow is benign." % rate_threshold)
        label = ClassLabel.BENIGN
    else:
        lines.append(step + "Small packets at a high rate pass the gate.")

    if label is None:
        step = "Step 2 (protocol branch): proto is %d. " % x.proto
        if x.proto == constants.PROTO_ICMP:
            lines.append(step + "Protocol 1 means an ICMP flood.")
            label = ClassLabel.ICMP
        elif x.proto == constants.PROTO_UDP:
            lines.append(step + "Protocol 17 means a UDP flood.")
            label = ClassLabel.UDP
        elif x.proto == constants.PROTO_TCP:
            lines.append(step + "Protocol 6 is TCP, so the flags decide.")
        else:
            lines.append(step + "The protocol is neither ICMP, TCP nor UDP, so the flow is benign.")
            label = ClassLabel.BENIGN

    if label is None:
        step = "Step 3 (TCP flag analysis): (PSH, ACK, RST, FIN) = (%d, %d, %d, %d). " % (
            x.flag_psh, x.flag_ack, x.flag_rst, x.flag_fin)
        if x.flag_psh == 1 and x.flag_ack == 1:
            lines.append(step + "PSH and ACK are both set, a PSH/ACK flood.")
            label = ClassLabel.PSHACK
        elif x.flag_rst == 1 or x.flag_fin == 1:
            lines.append(step + "RST or FIN is set, a RST/FIN flood.")
            label = ClassLabel.RSTFIN
        else:
            lines.append(step + "No PSH/ACK or RST/FIN pattern, falling back to a TCP flood.")
            label = ClassLabel.TCP

    lines.append("%s %s." % (constants.ANSWER_PHRASE, label.value))
    return label, "\n".join(lines)


def description_from_prompt(prompt):
    """
    Parses the flow behind the last "Data description: " block of a prompt.
    """
    start = prompt.rfind(constants.DATA_DESCRIPTION_PREFIX)
    if start < 0:
        raise ProtocolError("rule_oracle: Prompt carries no data description.")

    m = flow.description_pattern.match(prompt, start + len(constants.DATA_DESCRIPTION_PREFIX))
    if m is None:
        raise ProtocolError("rule_oracle: Data description does not follow the flow template.")

    return flow.parse_description(m.group(0))


### Client


class LLMClient(object):
    """
    Sends prompts to the model named by a ModelRef. Shareable across threads; each
    thread keeps its own HTTP session until ``close``. Usable as a context manager.
    """

    def __init__(self, ref, payload_threshold=constants.PAYLOAD_THRESHOLD, rate_threshold=constants.RATE_THRESHOLD):
        if not isinstance(ref, ModelRef):
            ref = ModelRef.from_json(ref)
        self.ref = ref
        self.payload_threshold = payload_threshold
        self.rate_threshold = rate_threshold
        self._local = threading.local()
        self._sessions = []
        self._lock = threading.Lock()

        if ref.kind is ModelKind.REMOTE:
            self.url = ref.endpoint.rstrip("/") + "/" + ref.path.lstrip("/")
        else:
            self.url = None

    def __repr__(self):
        return "LLMClient(kind=%s, name='%s', url=%s)" % (self.ref.kind.value, self.ref.name, self.url)

    @property
    def max_in_flight(self):
        return self.ref.max_in_flight

    def __enter__(self):
        return self

    def __exit__(self, *args):
        self.close()

    @property
    def open_sessions(self):
        return len(self._sessions)

    def _session(self):
        if not hasattr(self._local, "session"):
            session = requests.Session()
            with self._lock:
                self._sessions.append(session)
            self._local.session = session
        return self._local.session

    def close(self):
        """
        Closes the HTTP sessions of every thread. Later calls open new sessions.
        """
        with self._lock:
            sessions = self._sessions
            self._sessions = []
            self._local = threading.local()

        for session in sessions:
            session.close()
        if sessions:
            logger.debug("LLMClient: closed %d sessions to %s", len(sessions), self.url)

    def _query_server(self, prompt):
        body = {"model": self.ref.name, "prompt": prompt, "stream": False, "options": {"temperature": 0}}
        logger.debug("POST %s model=%s options=%s", self.url, self.ref.name, sorted(body["options"]))

        last_error = None
        for attempt in range(self.ref.retries + 1):
            if attempt > 0:
                time.sleep(self.ref.backoff_s * (2**(attempt - 1)))

            try:
                resp = self._session().post(self.url, json=body, timeout=self.ref.timeout_ms / 1000.0)
            except (requests.exceptions.ConnectionError, requests.exceptions.Timeout) as exc:
                last_error = "%s: %s" % (type(exc).__name__, str(exc))
                logger.warning("LLMClient: attempt %d of %d to %s failed (%s)", attempt + 1, self.ref.retries + 1,
                               self.url, last_error)
                continue

            if resp.status_code >= 500:
                last_error = "HTTP %d" % resp.status_code
                logger.warning("LLMClient: attempt %d of %d to %s failed (%s)", attempt + 1, self.ref.retries + 1,
                               self.url, last_error)
                continue

            if resp.status_code >= 300:
                raise ProtocolError("LLMClient:complete: HTTP %d from %s: %s" % (resp.status_code, self.url,
                                                                                  resp.text[:200]))

            try:
                data = resp.json()
            except ValueError:
                raise ProtocolError("LLMClient:complete: Response is not JSON: %s" % resp.text[:200])

            if not isinstance(data, dict) or not isinstance(data.get("response"), str):
                raise ProtocolError("LLMClient:complete: Response JSON has no 'response' text: %s" %
                                    json.dumps(data)[:200])
            return data["response"]

        raise TransportError("LLMClient:complete: %d attempts to %s failed, last error: %s" %
                             (self.ref.retries + 1, self.url, last_error))

    def complete(self, prompt):
        """
        Returns the completion of a single prompt at temperature 0.
        """
        if not prompt:
            raise ValueError("LLMClient:complete: Prompt must be nonempty.")

        start = time.perf_counter()
        if self.ref.kind is ModelKind.RULE_ORACLE:
            x = description_from_prompt(prompt)
            _, text = rule_oracle(x, self.payload_threshold, self.rate_threshold)
        else:
            text = self._query_server(prompt)

        return ModelResponse(text, (time.perf_counter() - start) * 1000.0)

    def _complete_captured(self, prompt):
        try:
            return self.complete(prompt)
        except TransportError as exc:
            return ModelResponse(None, 0.0, "TRANSPORT_ERROR", str(exc))
        except ProtocolError as exc:
            return ModelResponse(None, 0.0, "PROTOCOL_ERROR", str(exc))

    def complete_many(self, prompts):
        """
        Completes prompts with at most ``max_in_flight`` concurrent calls. Results keep
        input order; failures come back as non-OK responses.
        """
        prompts = list(prompts)
        if len(prompts) == 0:
            return []

        workers = min(self.max_in_flight, len(prompts))
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(self._complete_captured, prompts))


def complete(ref, prompt):
    with LLMClient(ref) as client:
        return client.complete(prompt)
