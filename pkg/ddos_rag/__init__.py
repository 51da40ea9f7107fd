"""
ddos_rag
Retrieval-augmented few-shot DDoS flow classification with language models
"""

__version__ = "0.1.0"

# Add imports here
from .constants import ClassLabel
from .flow import FlowFeatures, Standardizer, ingest_csv, describe
from .gbdt import GbdtModel
from .embed_mlp import MlpModel
from .knowledge_base import KnowledgeBase, build_kb, load_kb, save_kb
from .prompting import Regime, PromptConfig, build_prompt, parse_answer
from .client import ModelKind, ModelRef, LLMClient
from .pipeline import DetectorConfig, Detector
from .evaluation import ConfusionMatrix, EvalReport, run_experiment
from .config import RunConfig

from . import data
from . import schema
