"""Inter-passage verification of candidate answers.

Per question, one LLM call produces a plan: a categorical question followed by
factual questions, each a template with an ``[answer]`` slot.  Each candidate
is checked against the categorical question on its source passage first; only
survivors go on to the factual questions, whose evidence is the source passage
plus ``k_extra`` passages re-retrieved from the question's pool.  A candidate
is retained only if every verdict agrees with the question's polarity.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .corpus import Passage, PassageStore
from .dataset import Question
from .errors import BackendError, ConfigurationError, VQGParseError
from .llm.base import LLMClient
from .prompts import (
    PLACEHOLDER,
    bullets,
    self_reflection_template,
    verification_prompt,
    vqg_messages,
)
from .reader import AnswerCandidate, CandidateSet
from .retrieval.pool import Retriever
from .retrieval.types import RetrievalPool

log = logging.getLogger(__name__)

CATEGORICAL = "categorical"
FACTUAL = "factual"
FLAVORS = ("default", "negation_enabled")


@dataclass
class IPVConfig:
    enabled: bool = True
    k_extra: int = 1
    skip_categorical: bool = False
    skip_factual: bool = False
    self_reflection: bool = False
    dataset_flavor: str = "default"
    max_factual: int = 4
    max_workers: int = 1

    def __post_init__(self):
        if self.k_extra < 0:
            raise ConfigurationError("ipv.k_extra must be non-negative")
        if self.dataset_flavor not in FLAVORS:
            raise ConfigurationError(f"ipv.dataset_flavor must be one of {FLAVORS}")
        if self.skip_categorical and self.skip_factual and not self.self_reflection:
            raise ConfigurationError("skipping both categorical and factual questions leaves nothing to verify")

    def fingerprint(self) -> dict:
        d = dict(self.__dict__)
        d.pop("max_workers")
        return d


@dataclass(frozen=True)
class VerificationQuestion:
    template: str
    kind: str
    negated: bool = False
    ordinal: int = 0

    def __post_init__(self):
        if self.template.count(PLACEHOLDER) != 1:
            raise VQGParseError(f"template must contain {PLACEHOLDER} exactly once: {self.template!r}")
        if self.kind not in (CATEGORICAL, FACTUAL):
            raise VQGParseError(f"unknown question kind {self.kind!r}")
        if self.negated and self.kind != FACTUAL:
            raise VQGParseError("only factual questions can be negated")

    def to_json(self) -> dict:
        return {"template": self.template, "kind": self.kind, "negated": self.negated, "ordinal": self.ordinal}


@dataclass
class VerificationPlan:
    question_id: str
    vqs: list[VerificationQuestion]
    raw_generation: str = ""
    mode: str = "generated"  # or "self_reflection"
    fallback: bool = False

    @property
    def categorical(self) -> VerificationQuestion | None:
        return next((v for v in self.vqs if v.kind == CATEGORICAL), None)

    @property
    def factual(self) -> list[VerificationQuestion]:
        return [v for v in self.vqs if v.kind == FACTUAL]

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "mode": self.mode,
            "fallback": self.fallback,
            "raw_generation": self.raw_generation,
            "vqs": [v.to_json() for v in self.vqs],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VerificationPlan":
        return cls(
            question_id=obj["question_id"],
            vqs=[VerificationQuestion(**v) for v in obj["vqs"]],
            raw_generation=obj.get("raw_generation", ""),
            mode=obj.get("mode", "generated"),
            fallback=obj.get("fallback", False),
        )


@dataclass(frozen=True)
class Verdict:
    candidate_normalized: str
    vq_ordinal: int
    p_plus: float
    p_minus: float
    evidence_passage_ids: tuple[str, ...]
    error: str | None = None

    @property
    def outcome(self) -> bool:
        # ties count as False
        return self.p_plus > self.p_minus

    def to_json(self) -> dict:
        return {
            "candidate": self.candidate_normalized,
            "vq_ordinal": self.vq_ordinal,
            "p_plus": self.p_plus,
            "p_minus": self.p_minus,
            "outcome": self.outcome,
            "evidence": list(self.evidence_passage_ids),
            "error": self.error,
        }


@dataclass
class FilterResult:
    question_id: str
    retained: list[AnswerCandidate] = field(default_factory=list)
    rejected: list[tuple[AnswerCandidate, int]] = field(default_factory=list)
    verdicts: list[Verdict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "retained": [c.to_json() for c in self.retained],
            "rejected": [{**c.to_json(), "failing_ordinal": o} for c, o in self.rejected],
        }


# -- plans -----------------------------------------------------------------

_PLACEHOLDER_RE = re.compile(r"""["'“”‘’]?\[\s*answer\s*\]["'“”‘’]?""", re.IGNORECASE)
_MARKER_RE = re.compile(r"verification\s+questions\s*:", re.IGNORECASE)
_NEGATION_RE = re.compile(r"\s*\[\s*negation\s*\]\s*$", re.IGNORECASE)


def normalize_template(text: str) -> str:
    """Rewrite every placeholder spelling as a double-quoted lowercase ``[answer]``."""
    return _PLACEHOLDER_RE.sub(f'"{PLACEHOLDER}"', text.strip())


def parse_vqg_response(raw: str, question_id: str, max_factual: int = 4) -> VerificationPlan:
    m = _MARKER_RE.search(raw or "")
    if m is None:
        raise VQGParseError("response has no 'Verification Questions:' section")
    items = bullets(raw[m.end():])
    if not items:
        raise VQGParseError("no bulleted verification questions")
    vqs = []
    for ordinal, item in enumerate(items):
        negated = bool(_NEGATION_RE.search(item))
        template = normalize_template(_NEGATION_RE.sub("", item))
        if template.count(PLACEHOLDER) != 1:
            raise VQGParseError(f"question {ordinal} lacks a single {PLACEHOLDER} slot: {item!r}")
        kind = CATEGORICAL if ordinal == 0 else FACTUAL
        if negated and kind == CATEGORICAL:
            log.warning("question %s: ignoring NEGATION tag on the categorical question", question_id)
            negated = False
        vqs.append(VerificationQuestion(template, kind, negated, ordinal))
    if len(vqs) < 2:
        raise VQGParseError("plan has no factual verification questions")
    if len(vqs) - 1 > max_factual:
        log.warning("question %s: dropping %d factual questions beyond the cap of %d",
                    question_id, len(vqs) - 1 - max_factual, max_factual)
        vqs = vqs[:max_factual + 1]
    return VerificationPlan(question_id, vqs, raw)


def self_reflection_plan(question: Question, fallback: bool = False) -> VerificationPlan:
    vq = VerificationQuestion(self_reflection_template(question.text), FACTUAL, False, 1)
    return VerificationPlan(question.id, [vq], "", mode="self_reflection", fallback=fallback)


def instantiate(vq: VerificationQuestion, candidate: AnswerCandidate) -> str:
    return vq.template.replace(PLACEHOLDER, candidate.surface)


class PlanGenerator:
    """One VQG call per question, cached by question id."""

    def __init__(self, client: LLMClient, flavor: str = "default", max_factual: int = 4):
        self.client = client
        self.flavor = flavor
        self.max_factual = max_factual
        self._cache: dict[str, VerificationPlan] = {}
        self._lock = threading.Lock()

    def generate_verification_plan(self, question: Question) -> VerificationPlan:
        with self._lock:
            if question.id in self._cache:
                return self._cache[question.id]
        request = self.client.request(vqg_messages(question.text, self.flavor == "negation_enabled"))
        plan = None
        for attempt in (1, 2):
            try:
                plan = parse_vqg_response(self.client.generate(request), question.id, self.max_factual)
                break
            except (VQGParseError, BackendError) as exc:
                log.warning("question %s: VQG attempt %d failed: %s", question.id, attempt, exc)
        if plan is None:
            log.warning("question %s: falling back to self-reflection verification", question.id)
            plan = self_reflection_plan(question, fallback=True)
        with self._lock:
            self._cache[question.id] = plan
        return plan


# -- verification ----------------------------------------------------------

def retention_rule(categorical: bool | None, factual: Iterable[tuple[bool, bool]]) -> bool:
    """``factual`` holds (negated, outcome) pairs; None means no categorical question."""
    if categorical is False:
        return False
    return all(outcome != negated for negated, outcome in factual)


class Verifier:
    def __init__(self, client: LLMClient, retriever: Retriever | None, store: PassageStore, cfg: IPVConfig | None = None):
        self.client = client
        self.retriever = retriever
        self.store = store
        self.cfg = cfg or IPVConfig()

    def gather_evidence(self, candidate: AnswerCandidate, vq: VerificationQuestion,
                        pool: RetrievalPool, k_extra: int) -> list[Passage]:
        query = instantiate(vq, candidate)
        if not candidate.has_source:
            k = k_extra + 1 if vq.kind == FACTUAL else 1
            return self._within_pool(pool, query, k, ())
        source = self.store.get_passage(candidate.source_passage_id)
        if vq.kind == CATEGORICAL or k_extra == 0:
            return [source]
        if not len(pool):
            log.warning("empty pool for %s; verifying with the source passage only", pool.question_id)
            return [source]
        return [source] + self._within_pool(pool, query, k_extra, (source.id,))

    def _within_pool(self, pool: RetrievalPool, query: str, k: int, exclude) -> list[Passage]:
        if self.retriever is None or not len(pool):
            return []
        hits = self.retriever.search_within_pool(pool, query, k, exclude)
        return [self.store.get_passage(h.passage_id) for h in hits]

    def verdict(self, candidate: AnswerCandidate, vq: VerificationQuestion, evidence: list[Passage]) -> Verdict:
        ids = tuple(p.id for p in evidence)
        if not evidence:
            return Verdict(candidate.normalized, vq.ordinal, 0.0, 0.0, ids, "no evidence")
        request = self.client.request(verification_prompt(instantiate(vq, candidate), evidence), max_tokens=8)
        try:
            p_plus, p_minus = self.client.score_binary(request)
        except BackendError as exc:
            log.warning("verdict failed for %r on question %d: %s", candidate.surface, vq.ordinal, exc)
            return Verdict(candidate.normalized, vq.ordinal, 0.0, 0.0, ids, str(exc))
        return Verdict(candidate.normalized, vq.ordinal, p_plus.probability_mass, p_minus.probability_mass, ids)

    def active_questions(self, plan: VerificationPlan) -> tuple[VerificationQuestion | None, list[VerificationQuestion]]:
        if plan.mode == "self_reflection":
            return None, plan.factual
        cat = None if self.cfg.skip_categorical else plan.categorical
        fact = [] if self.cfg.skip_factual else plan.factual
        return cat, fact

    def verify_candidate(self, candidate: AnswerCandidate, plan: VerificationPlan,
                         pool: RetrievalPool) -> tuple[bool, list[Verdict], int | None]:
        """Returns (kept, verdicts, ordinal of the first failing question)."""
        cat, factual = self.active_questions(plan)
        verdicts: list[Verdict] = []
        if cat is not None:
            v = self.verdict(candidate, cat, self.gather_evidence(candidate, cat, pool, self.cfg.k_extra))
            verdicts.append(v)
            if not v.outcome:
                return False, verdicts, cat.ordinal
        failing = None
        for vq in factual:
            v = self.verdict(candidate, vq, self.gather_evidence(candidate, vq, pool, self.cfg.k_extra))
            verdicts.append(v)
            if failing is None and not retention_rule(None, [(vq.negated, v.outcome)]):
                failing = vq.ordinal
        return failing is None, verdicts, failing

    def filter_candidates(self, candidates: CandidateSet, plan: VerificationPlan, pool: RetrievalPool) -> FilterResult:
        cands = candidates.candidates

        def run(c):
            return self.verify_candidate(c, plan, pool)

        if self.cfg.max_workers > 1 and len(cands) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.max_workers) as ex:
                outcomes = list(ex.map(run, cands))
        else:
            outcomes = [run(c) for c in cands]
        result = FilterResult(candidates.question_id)
        for cand, (kept, verdicts, failing) in zip(cands, outcomes):
            result.verdicts.extend(verdicts)
            if kept:
                result.retained.append(cand)
            else:
                result.rejected.append((cand, failing))
        return result


def plan_for(question: Question, cfg: IPVConfig, generator: PlanGenerator) -> VerificationPlan:
    if cfg.self_reflection:
        return self_reflection_plan(question)
    return generator.generate_verification_plan(question)


def save_jsonl(rows: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def load_plans(path: str | Path) -> dict[str, VerificationPlan]:
    with open(path, encoding="utf-8") as fh:
        plans = [VerificationPlan.from_json(json.loads(line)) for line in fh if line.strip()]
    return {p.question_id: p for p in plans}
