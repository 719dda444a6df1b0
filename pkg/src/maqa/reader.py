"""Candidate generation: independent, concatenated and closed-book reading."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Passage, PassageStore
from .dataset import Question
from .errors import BackendError, ContractError, ReaderAbortError
from .llm.base import ChatRequest, LLMClient
from .prompts import closed_book_prompt, parse_answer_list, reading_prompt
from .retrieval.types import RetrievalPool

log = logging.getLogger(__name__)

READING_MODES = ("independent", "concatenated", "closed_book")
NO_SOURCE = ""


def normalize_answer(surface: str) -> str:
    """Dedupe key: trimmed, whitespace-collapsed, case-folded."""
    return " ".join(surface.split()).casefold()


@dataclass(frozen=True)
class AnswerCandidate:
    surface: str
    normalized: str
    source_passage_id: str
    question_id: str

    @classmethod
    def make(cls, surface: str, source_passage_id: str, question_id: str) -> "AnswerCandidate":
        surface = surface.strip()
        if not surface:
            raise ContractError("answer candidate surface is empty")
        return cls(surface, normalize_answer(surface), source_passage_id, question_id)

    @property
    def has_source(self) -> bool:
        return self.source_passage_id != NO_SOURCE

    def to_json(self) -> dict:
        return {"surface": self.surface, "normalized": self.normalized, "source_passage_id": self.source_passage_id}


@dataclass
class CandidateSet:
    question_id: str
    candidates: list[AnswerCandidate]
    reading_mode: str
    passages_read: int
    failures: int = 0

    @property
    def surfaces(self) -> list[str]:
        return [c.surface for c in self.candidates]

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "mode": self.reading_mode,
            "passages_read": self.passages_read,
            "failures": self.failures,
            "candidates": [c.to_json() for c in self.candidates],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CandidateSet":
        qid = obj["question_id"]
        return cls(
            question_id=qid,
            candidates=[AnswerCandidate(c["surface"], c["normalized"], c["source_passage_id"], qid)
                        for c in obj["candidates"]],
            reading_mode=obj["mode"],
            passages_read=obj["passages_read"],
            failures=obj.get("failures", 0),
        )


def union_answers(question_id: str, per_source: Iterable[tuple[str, Sequence[str]]]) -> list[AnswerCandidate]:
    """Union parsed answers in the given order, keeping each normalized form's first source."""
    seen: set[str] = set()
    out = []
    for source_id, answers in per_source:
        for surface in answers:
            cand = AnswerCandidate.make(surface, source_id, question_id)
            if cand.normalized not in seen:
                seen.add(cand.normalized)
                out.append(cand)
    return out


def render_reading_prompt(
    question: Question,
    passages: Sequence[Passage],
    mode: str,
    max_tokens: int = 512,
    temperature: float = 0.0,
    model_id: str = "",
) -> ChatRequest:
    if mode == "independent" and len(passages) != 1:
        raise ContractError(f"independent reading takes exactly one passage, got {len(passages)}")
    if mode == "closed_book" and passages:
        raise ContractError("closed-book reading takes no passages")
    if mode == "concatenated" and not passages:
        raise ContractError("concatenated reading needs at least one passage")
    if mode not in READING_MODES:
        raise ContractError(f"unknown reading mode {mode!r}")
    content = closed_book_prompt(question.text) if mode == "closed_book" else reading_prompt(question.text, passages)
    return ChatRequest(messages=(("user", content),), max_tokens=max_tokens, temperature=temperature, model_id=model_id)


class Reader:
    def __init__(self, client: LLMClient, store: PassageStore | None = None,
                 max_workers: int = 1, failure_budget: float = 0.5):
        self.client = client
        self.store = store
        self.max_workers = max_workers
        self.failure_budget = failure_budget

    def _request(self, question: Question, passages: Sequence[Passage], mode: str) -> ChatRequest:
        spec = self.client.spec
        return render_reading_prompt(question, passages, mode, spec.max_tokens, spec.temperature, spec.model_id)

    def _top_passages(self, pool: RetrievalPool, k: int) -> list[Passage]:
        if self.store is None:
            raise ContractError("reading from a pool needs a passage store")
        if not len(pool):
            raise ContractError(f"pool for question {pool.question_id!r} is empty")
        return [self.store.get_passage(e.passage_id) for e in pool.top(k)]

    def read_independent(self, question: Question, pool: RetrievalPool, k: int) -> CandidateSet:
        passages = self._top_passages(pool, k)

        def read_one(p: Passage) -> list[str] | None:
            try:
                return parse_answer_list(self.client.generate(self._request(question, [p], "independent")))
            except BackendError as exc:
                log.warning("question %s: reading passage %s failed: %s", question.id, p.id, exc)
                return None

        if self.max_workers > 1 and len(passages) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as ex:
                results = list(ex.map(read_one, passages))  # map keeps rank order
        else:
            results = [read_one(p) for p in passages]

        failures = sum(r is None for r in results)
        if failures > self.failure_budget * len(passages):
            raise ReaderAbortError(
                f"question {question.id!r}: {failures}/{len(passages)} passage reads failed"
            )
        candidates = union_answers(question.id, ((p.id, r or []) for p, r in zip(passages, results)))
        return CandidateSet(question.id, candidates, "independent", len(passages), failures)

    def _read_once(self, question: Question, passages: Sequence[Passage], mode: str) -> CandidateSet:
        try:
            raw = self.client.generate(self._request(question, passages, mode))
        except BackendError as exc:
            raise ReaderAbortError(f"question {question.id!r}: {mode} reading failed: {exc}") from exc
        candidates = union_answers(question.id, [(NO_SOURCE, parse_answer_list(raw))])
        return CandidateSet(question.id, candidates, mode, len(passages))

    def read_concatenated(self, question: Question, pool: RetrievalPool, k: int) -> CandidateSet:
        return self._read_once(question, self._top_passages(pool, k), "concatenated")

    def read_closed_book(self, question: Question) -> CandidateSet:
        return self._read_once(question, [], "closed_book")

    def read(self, question: Question, mode: str, pool: RetrievalPool | None, k: int) -> CandidateSet:
        if mode == "independent":
            return self.read_independent(question, pool, k)
        if mode == "concatenated":
            return self.read_concatenated(question, pool, k)
        if mode == "closed_book":
            return self.read_closed_book(question)
        raise ContractError(f"unknown reading mode {mode!r}")


def save_candidates(sets: Iterable[CandidateSet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cs in sets:
            fh.write(json.dumps(cs.to_json(), ensure_ascii=False) + "\n")


def load_candidates(path: str | Path) -> dict[str, CandidateSet]:
    with open(path, encoding="utf-8") as fh:
        sets = [CandidateSet.from_json(json.loads(line)) for line in fh if line.strip()]
    return {cs.question_id: cs for cs in sets}
