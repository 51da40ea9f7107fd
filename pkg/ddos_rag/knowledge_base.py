"""
The exemplar knowledge base: construction, persistence and exact top-k Euclidean
retrieval over the signature, feature or an imported custom space.
"""

import dataclasses
import datetime
import json
import logging
import os

import numpy as np
import pandas as pd

from . import constants
from . import fields
from . import flow
from . import prompting
from . import schema
from .constants import ClassLabel
from .exceptions import ModelLoadError, QueryError

logger = logging.getLogger(__name__)

SPACES = ("signature", "feature", "custom")


@dataclasses.dataclass(frozen=True)
class Exemplar:
    """
    An archived labeled flow that can be quoted in prompts.
    """

    id: int
    features_std: tuple
    description: str
    label: ClassLabel
    signature: tuple = None
    rationale: str = None
    embedding: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "label", ClassLabel.parse(self.label))
        object.__setattr__(self, "features_std", tuple(float(x) for x in self.features_std))
        if len(self.features_std) != constants.NUM_FEATURES:
            raise ValueError("Exemplar: features_std must have %d entries." % constants.NUM_FEATURES)
        if not self.description:
            raise ValueError("Exemplar: description must be nonempty.")

        if self.signature is not None:
            sig = tuple(float(x) for x in self.signature)
            if abs(sum(sig) - 1.0) > 1e-6:
                raise ValueError("Exemplar: signature of exemplar %d sums to %r, not 1." % (self.id, sum(sig)))
            object.__setattr__(self, "signature", sig)

        if self.embedding is not None:
            object.__setattr__(self, "embedding", tuple(float(x) for x in self.embedding))

    def to_json(self):
        ret = {
            "id": self.id,
            "features_std": list(self.features_std),
            "signature": list(self.signature) if self.signature is not None else None,
            "description": self.description,
            "label": self.label.value,
            "rationale": self.rationale
        }
        if self.embedding is not None:
            ret["embedding"] = list(self.embedding)
        return ret

    @classmethod
    def from_json(cls, data):
        schema.validate(data, "exemplar")
        return cls(data["id"], data["features_std"], data["description"], data["label"], data["signature"],
                   data["rationale"], data.get("embedding"))


def _readonly(matrix):
    matrix.flags.writeable = False
    return matrix


class KnowledgeBase(object):
    """
    An immutable, ordered exemplar collection with ids 0..N-1 and one key matrix per
    available retrieval space.
    """

    def __init__(self, exemplars, metadata=None):
        self.exemplars = tuple(exemplars)
        self.metadata = dict(metadata) if metadata else {}

        ids = [x.id for x in self.exemplars]
        if len(set(ids)) != len(ids):
            raise ValueError("KnowledgeBase: duplicate exemplar ids.")
        if ids != list(range(len(ids))):
            raise ValueError("KnowledgeBase: exemplar ids must be 0..N-1 in order.")

        self._ids = _readonly(np.array(ids, dtype=int))
        self._matrices = {}
        self._matrices["feature"] = _readonly(
            np.array([x.features_std for x in self.exemplars], dtype=np.double).reshape(-1, constants.NUM_FEATURES))

        for space, attr in (("signature", "signature"), ("custom", "embedding")):
            present = [getattr(x, attr) is not None for x in self.exemplars]
            if len(present) and all(present):
                try:
                    matrix = np.array([getattr(x, attr) for x in self.exemplars], dtype=np.double)
                except ValueError:
                    matrix = None
                if matrix is None or matrix.ndim != 2:
                    raise ValueError("KnowledgeBase: %s vectors differ in dimensionality." % space)
                self._matrices[space] = _readonly(matrix)
            elif any(present):
                raise ValueError("KnowledgeBase: %s vectors present on some exemplars only." % space)

    def __len__(self):
        return len(self.exemplars)

    def __getitem__(self, idx):
        return self.exemplars[idx]

    def __iter__(self):
        return iter(self.exemplars)

    def __repr__(self):
        return "KnowledgeBase(size=%d, spaces=%s)" % (len(self), ",".join(self.spaces))

    @property
    def spaces(self):
        return tuple(x for x in SPACES if x in self._matrices)

    @property
    def has_signatures(self):
        return "signature" in self._matrices

    @property
    def has_rationales(self):
        return any(x.rationale for x in self.exemplars)

    def matrix(self, space):
        if space not in SPACES:
            raise QueryError("KnowledgeBase: Retrieval space '%s' not recognized." % str(space))
        if space not in self._matrices:
            raise QueryError("KnowledgeBase: Space '%s' is not available in this knowledge base." % space)
        return self._matrices[space]

    def space_dim(self, space):
        if space == "feature":
            return constants.NUM_FEATURES
        if len(self) == 0:
            return None
        return self.matrix(space).shape[1]

    def fingerprint(self):
        """
        Content hash of the exemplars, independent of the metadata.
        """
        return fields.get_hash([x.to_json() for x in self.exemplars], None)

    def replace(self, exemplars=None, metadata=None):
        """
        Returns a new knowledge base with exemplars and/or metadata swapped in.
        """
        exemplars = self.exemplars if exemplars is None else exemplars
        meta = dict(self.metadata)
        meta.update(metadata or {})
        return KnowledgeBase(exemplars, meta)

    ### Retrieval

    def retrieve(self, query, space="feature", k=1):
        """
        Exact top-k by Euclidean distance, ascending, ties broken by lower id.

        Parameters
        ----------
        query : array_like
            Query key in the chosen space.
        space : {"signature", "feature", "custom"}
            The key space.
        k : int
            Number of neighbors; k=0 returns nothing and k > N returns all N.

        Returns
        -------
        list of (Exemplar, float)
        """

        if k < 0:
            raise QueryError("KnowledgeBase:retrieve: k must be nonnegative, found %d." % k)
        if space not in SPACES:
            raise QueryError("KnowledgeBase:retrieve: Retrieval space '%s' not recognized." % str(space))

        if len(self) == 0 or k == 0:
            if space != "feature" and space not in self._matrices and len(self):
                raise QueryError("KnowledgeBase:retrieve: Space '%s' is not available." % space)
            return []

        matrix = self.matrix(space)
        q = np.asarray(query, dtype=np.double).ravel()
        if q.shape[0] != matrix.shape[1]:
            raise QueryError("KnowledgeBase:retrieve: Query has dimension %d, space '%s' has %d." %
                             (q.shape[0], space, matrix.shape[1]))
        if not np.all(np.isfinite(q)):
            raise QueryError("KnowledgeBase:retrieve: Query contains non-finite values.")

        dist = np.sqrt(np.sum((matrix - q)**2, axis=1))
        order = np.lexsort((self._ids, dist))[:k]
        logger.debug("retrieve: %s space, k=%d over %d exemplars", space, k, len(self))
        return [(self.exemplars[x], float(dist[x])) for x in order]


def retrieve(kb, query, space="feature", k=1):
    return kb.retrieve(query, space, k)


### Construction


def build_kb(data, s, m=None, teacher=None, embedder=None):
    """
    Builds one exemplar per labeled flow.

    Parameters
    ----------
    data : list of (FlowFeatures, ClassLabel)
        Archived labeled flows, in exemplar id order.
    s : Standardizer
        Produces the feature-space keys.
    m : GbdtModel, optional
        Fills the probability signatures.
    teacher : LLMClient, optional
        Generates a chain-of-thought rationale per exemplar.
    embedder : MlpModel, optional
        Fills the custom space with the embedding of each standardized flow.

    Returns
    -------
    KnowledgeBase
    """

    if len(data) == 0:
        raise ValueError("build_kb: Knowledge base data is empty.")

    exemplars = []
    for num, (x, label) in enumerate(data):
        if label is None:
            raise ValueError("build_kb: Flow %d carries no label." % num)
        std = s.apply(x)
        signature = tuple(m.predict_proba(std).tolist()) if m is not None else None
        embedding = tuple(embedder.embed(std).tolist()) if embedder is not None else None
        exemplars.append(Exemplar(num, tuple(std.tolist()), flow.describe(x), label, signature, None, embedding))

    metadata = {
        "standardizer_fingerprint": s.fingerprint(),
        "model_fingerprint": m.fingerprint() if m is not None else None,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "teacher": None,
        "teacher_failures": 0,
        "custom_space": embedder.dims[-2] if embedder is not None else None,
        "size": len(exemplars)
    }
    kb = KnowledgeBase(exemplars, metadata)
    logger.info("build_kb: %d exemplars, signatures %s", len(kb), "present" if m is not None else "absent")

    if teacher is not None:
        kb = generate_rationales(kb, teacher)
    return kb


def generate_rationales(kb, client):
    """
    Asks a teacher model for a chain-of-thought report on every exemplar and stores it
    verbatim. Failed calls leave the rationale empty and are counted in the metadata.
    The prompts state the benign gate thresholds of the client.
    """

    cfg = prompting.PromptConfig(prompting.Regime.COT, 0, payload_threshold=client.payload_threshold,
                                 rate_threshold=client.rate_threshold)
    prompts = [prompting.build_prompt(cfg, x.description).text for x in kb]
    responses = client.complete_many(prompts)

    exemplars = []
    failures = 0
    for x, resp in zip(kb, responses):
        if resp.ok:
            exemplars.append(dataclasses.replace(x, rationale=resp.text))
        else:
            failures += 1
            logger.debug("generate_rationales: exemplar %d: %s", x.id, resp.error)
            exemplars.append(dataclasses.replace(x, rationale=None))

    if failures:
        logger.warning("generate_rationales: %d of %d teacher calls failed; those exemplars have no rationale.",
                       failures, len(kb))

    return kb.replace(exemplars, {"teacher": client.ref.name, "teacher_failures": failures})


### Persistence


def metadata_path(filename):
    return filename + ".meta.json"


def save_kb(kb, filename):
    """
    Writes exemplars as JSON Lines and the metadata to the ``.meta.json`` sidecar.
    """
    with open(filename, "w") as outfile:
        for x in kb:
            outfile.write(json.dumps(x.to_json()) + "\n")

    meta = dict(kb.metadata)
    meta["size"] = len(kb)
    with open(metadata_path(filename), "w") as outfile:
        json.dump(meta, outfile, indent=2)

    logger.info("Wrote knowledge base (%d exemplars) to %s", len(kb), filename)


def _check_fingerprint(name, expected, found, strict):
    if expected is None or found is None or expected == found:
        return

    msg = "load_kb: %s fingerprint %s does not match the knowledge base's %s." % (name, found, expected)
    if strict:
        raise ModelLoadError(msg)
    logger.warning(msg)


def load_kb(filename, standardizer=None, model=None, strict=False):
    """
    Reads a knowledge base written by ``save_kb``.

    Parameters
    ----------
    filename : str
        The JSON Lines file.
    standardizer : Standardizer, optional
        Checked against the recorded standardizer fingerprint.
    model : GbdtModel, optional
        Checked against the recorded model fingerprint.
    strict : bool
        Fingerprint mismatches raise instead of logging a warning.
    """

    if not os.path.isfile(filename):
        raise OSError("Path '%s' not found." % filename)

    exemplars = []
    seen = set()
    with open(filename, "r") as infile:
        for num, line in enumerate(infile, start=1):
            if not line.strip():
                continue
            try:
                x = Exemplar.from_json(json.loads(line))
            except (ValueError, KeyError) as exc:
                raise ModelLoadError("load_kb: '%s' line %d is invalid (%s)." % (filename, num, str(exc)[:500]))

            if x.id in seen:
                raise ModelLoadError("load_kb: Duplicate exemplar id %d on line %d." % (x.id, num))
            seen.add(x.id)
            exemplars.append(x)

    metadata = {}
    meta_file = metadata_path(filename)
    if os.path.isfile(meta_file):
        with open(meta_file, "r") as infile:
            try:
                metadata = json.load(infile)
                schema.validate(metadata, "kb_metadata")
            except ValueError as exc:
                raise ModelLoadError("load_kb: Metadata '%s' is invalid (%s)." % (meta_file, str(exc)[:500]))

    try:
        kb = KnowledgeBase(exemplars, metadata)
    except ValueError as exc:
        raise ModelLoadError("load_kb: %s" % str(exc))

    if standardizer is not None:
        _check_fingerprint("Standardizer", metadata.get("standardizer_fingerprint"), standardizer.fingerprint(),
                           strict)
    if model is not None:
        _check_fingerprint("Model", metadata.get("model_fingerprint"), model.fingerprint(), strict)

    logger.info("Read knowledge base (%d exemplars) from %s", len(kb), filename)
    return kb


### Embeddings


def import_embeddings(kb, filename):
    """
    Attaches vectors from a no-header CSV (row i belongs to exemplar i) as the custom
    retrieval space.
    """
    if not os.path.isfile(filename):
        raise OSError("Path '%s' not found." % filename)

    try:
        matrix = pd.read_csv(filename, header=None).to_numpy(dtype=np.double)
    except pd.errors.EmptyDataError:
        matrix = np.zeros((0, 0))
    except ValueError as exc:
        raise QueryError("import_embeddings: '%s' holds non-numeric values (%s)." % (filename, str(exc)))

    if matrix.shape[0] != len(kb):
        raise QueryError("import_embeddings: '%s' has %d rows for %d exemplars." %
                         (filename, matrix.shape[0], len(kb)))
    if not np.all(np.isfinite(matrix)):
        raise QueryError("import_embeddings: '%s' holds missing or non-finite values." % filename)

    exemplars = [dataclasses.replace(x, embedding=tuple(row.tolist())) for x, row in zip(kb, matrix)]
    dim = int(matrix.shape[1]) if matrix.shape[0] else None
    logger.info("import_embeddings: %d-d custom space for %d exemplars", dim or 0, len(kb))
    return kb.replace(exemplars, {"custom_space": dim})


def write_embeddings(filename, matrix):
    """
    Writes vectors as a no-header CSV readable by ``import_embeddings``.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.double))
    pd.DataFrame(matrix).to_csv(filename, header=False, index=False, float_format="%.17g")
    logger.info("Wrote %d embeddings of dimension %d to %s", matrix.shape[0], matrix.shape[1], filename)
