"""Multi-answer open-domain QA: per-passage reading followed by inter-passage answer verification."""

from .config import RunConfig, load_config
from .corpus import Passage, PassageStore, ingest
from .evaluation import AnswerSetMetrics, score_question
from .ipv import IPVConfig, PlanGenerator, Verifier
from .pipeline import Pipeline, run_pipeline, sweep
from .reader import AnswerCandidate, CandidateSet, Reader

__version__ = "0.1.0"

__all__ = [
    "AnswerCandidate",
    "AnswerSetMetrics",
    "CandidateSet",
    "IPVConfig",
    "Passage",
    "PassageStore",
    "Pipeline",
    "PlanGenerator",
    "Reader",
    "RunConfig",
    "Verifier",
    "ingest",
    "load_config",
    "run_pipeline",
    "score_question",
    "sweep",
]
