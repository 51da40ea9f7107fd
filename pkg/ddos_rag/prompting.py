"""
Prompt construction for the five prompting regimes and parsing of model answers.
"""

import dataclasses
import enum
import re

from . import constants
from .constants import ClassLabel
from .exceptions import ConfigurationError, ParseFailure, PromptError

__all__ = ["Regime", "PromptConfig", "Prompt", "build_prompt", "parse_answer", "scaffold_text", "short_kb_text",
           "instruction_text"]


class Regime(enum.Enum):
    NO_KB = "NO_KB"
    SHORT_KB = "SHORT_KB"
    COT = "COT"
    ONE_SHOT = "ONE_SHOT"
    FEW_SHOT = "FEW_SHOT"

    @property
    def display_name(self):
        return _regime_names[self]

    @property
    def uses_exemplars(self):
        return self in (Regime.ONE_SHOT, Regime.FEW_SHOT)


_regime_names = {
    Regime.NO_KB: "No KB",
    Regime.SHORT_KB: "Short KB",
    Regime.COT: "COT",
    Regime.ONE_SHOT: "One-Shot",
    Regime.FEW_SHOT: "Few-Shot",
}

# Allowed k per regime
_regime_k = {
    Regime.NO_KB: (0, ),
    Regime.SHORT_KB: (0, ),
    Regime.COT: (0, ),
    Regime.ONE_SHOT: (1, ),
    Regime.FEW_SHOT: (1, 2, 3),
}

_default_k = {Regime.NO_KB: 0, Regime.SHORT_KB: 0, Regime.COT: 0, Regime.ONE_SHOT: 1, Regime.FEW_SHOT: 3}


@dataclasses.dataclass(frozen=True)
class PromptConfig:
    """
    Template parameters of a prompt. ``k`` defaults per regime; ``include_rationale``
    left as None includes exemplar rationales whenever the exemplars carry them.
    """

    regime: Regime
    k: int = None
    include_rationale: bool = None
    label_vocabulary: tuple = constants.CANONICAL_LABELS
    payload_threshold: float = constants.PAYLOAD_THRESHOLD
    rate_threshold: float = constants.RATE_THRESHOLD
    max_chars: int = None

    def __post_init__(self):
        try:
            regime = Regime(self.regime.value if isinstance(self.regime, Regime) else str(self.regime).upper())
        except ValueError:
            raise ConfigurationError("PromptConfig: Regime '%s' not recognized." % str(self.regime))
        object.__setattr__(self, "regime", regime)

        k = _default_k[regime] if self.k is None else int(self.k)
        if k not in _regime_k[regime]:
            raise ConfigurationError("PromptConfig: k=%d is inconsistent with regime %s (allowed: %s)." %
                                     (k, regime.value, ", ".join(str(x) for x in _regime_k[regime])))
        object.__setattr__(self, "k", k)

        vocab = tuple(ClassLabel.parse(x).value for x in self.label_vocabulary)
        object.__setattr__(self, "label_vocabulary", vocab)

        if self.max_chars is not None and self.max_chars < 1:
            raise ConfigurationError("PromptConfig: max_chars must be positive.")


@dataclasses.dataclass(frozen=True)
class Prompt:
    """
    The rendered prompt. ``parts`` lists (name, text) in regime order and ``text`` is
    their concatenation with blank-line separators.
    """

    text: str
    parts: tuple

    def part(self, name):
        for key, value in self.parts:
            if key == name:
                return value
        return ""

    @property
    def exemplar_block(self):
        return self.part("exemplars")

    @property
    def data_description(self):
        return self.part("description")

    @property
    def instruction(self):
        return self.part("instruction")

    @property
    def scaffold(self):
        return self.part("scaffold")

    @property
    def knowledge(self):
        return self.part("knowledge")


### Fixed texts


def scaffold_text(payload_threshold=constants.PAYLOAD_THRESHOLD, rate_threshold=constants.RATE_THRESHOLD):
    return constants.SCAFFOLD_TEMPLATE.format(payload=payload_threshold, rate=rate_threshold)


def short_kb_text(payload_threshold=constants.PAYLOAD_THRESHOLD, rate_threshold=constants.RATE_THRESHOLD):
    return constants.SHORT_KB_TEMPLATE.format(payload=payload_threshold, rate=rate_threshold)


def instruction_text(vocab=constants.CANONICAL_LABELS):
    if tuple(vocab) == constants.CANONICAL_LABELS:
        return constants.INSTRUCTION_TEXT
    return ("Classify the flow as exactly one of: %s. State your final answer exactly once as: "
            "The answer is <LABEL>." % ", ".join(vocab))


_answer_line = re.compile(r"^.*the answer is.*$", re.IGNORECASE | re.MULTILINE)


def render_exemplar(num, exemplar, include_rationale):
    lines = ["Example %d: %s" % (num, exemplar.description)]
    if include_rationale and exemplar.rationale:
        # The exemplar's own answer line is re-rendered below from its label
        rationale = _answer_line.sub("", exemplar.rationale)
        rationale = "\n".join(x for x in rationale.splitlines() if x.strip())
        if rationale:
            lines.append(rationale)
    lines.append("%s %s." % (constants.ANSWER_PHRASE, ClassLabel.parse(exemplar.label).value))
    return "\n".join(lines)


def build_prompt(cfg, desc, exemplars=()):
    """
    Renders a prompt for one flow description.

    Parameters
    ----------
    cfg : PromptConfig
        The regime and template parameters.
    desc : str
        The flow description.
    exemplars : list of Exemplar
        Exactly ``cfg.k`` retrieved exemplars, nearest first.

    Returns
    -------
    Prompt
        NO_KB is description and instruction; SHORT_KB appends the rule digest; COT
        appends the reasoning scaffold; ONE_SHOT and FEW_SHOT put the exemplar block,
        then the scaffold, then the description.
    """

    exemplars = list(exemplars)
    if len(exemplars) != cfg.k:
        raise PromptError("build_prompt: Regime %s expects %d exemplars, received %d." %
                          (cfg.regime.value, cfg.k, len(exemplars)))
    if any(not x.description for x in exemplars):
        raise PromptError("build_prompt: Exemplar descriptions must be nonempty.")

    description = constants.DATA_DESCRIPTION_PREFIX + desc
    instruction = instruction_text(cfg.label_vocabulary)
    scaffold = scaffold_text(cfg.payload_threshold, cfg.rate_threshold)

    regime = cfg.regime
    if regime is Regime.NO_KB:
        parts = [("description", description), ("instruction", instruction)]
    elif regime is Regime.SHORT_KB:
        knowledge = short_kb_text(cfg.payload_threshold, cfg.rate_threshold)
        parts = [("description", description), ("instruction", instruction), ("knowledge", knowledge)]
    elif regime is Regime.COT:
        parts = [("description", description), ("instruction", instruction), ("scaffold", scaffold)]
    else:
        include = cfg.include_rationale
        if include is None:
            include = any(x.rationale for x in exemplars)
        block = "\n\n".join(render_exemplar(num + 1, x, include) for num, x in enumerate(exemplars))
        parts = [("exemplars", block), ("scaffold", scaffold), ("description", description)]

    text = "\n\n".join(x[1] for x in parts)
    if cfg.max_chars is not None and len(text) > cfg.max_chars:
        raise PromptError("build_prompt: Prompt of %d characters exceeds the %d character cap." %
                          (len(text), cfg.max_chars))

    return Prompt(text, tuple(parts))


### Answer parsing

_answer_patterns = {}


def _answer_pattern(vocab):
    vocab = tuple(vocab)
    if vocab not in _answer_patterns:
        aliases = set()
        for name in vocab:
            aliases.update(constants.label_aliases[ClassLabel.parse(name)])
        ordered = sorted(aliases, key=lambda x: (-len(x), x))
        alternation = "|".join(r"\s+".join(re.escape(w) for w in x.split()) for x in ordered)
        _answer_patterns[vocab] = re.compile(
            r"the\s+answer\s+is[\s:*\"'`<\[]*(%s)(?![A-Za-z0-9_])" % alternation, re.IGNORECASE)
    return _answer_patterns[vocab]


def parse_answer(response, vocab=constants.CANONICAL_LABELS):
    """
    Returns the label of the last "the answer is <LABEL>" statement in a response.
    Raises ParseFailure when no such statement names a vocabulary label.
    """
    response = response or ""
    matches = list(_answer_pattern(vocab).finditer(response))
    if len(matches) == 0:
        raise ParseFailure("parse_answer: No 'The answer is <LABEL>' statement found.", response)

    return ClassLabel.parse(" ".join(matches[-1].group(1).split()))
