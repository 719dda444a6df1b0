"""Alias-aware exact-match set metrics, ARecall@K, and optional LLM judging."""

from __future__ import annotations

import logging
import re
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

from .corpus import PassageStore
from .dataset import GoldAnswer, GoldRecord
from .errors import BackendError, ContractError
from .llm.base import LLMClient
from .prompts import judge_prompt
from .retrieval.types import RetrievalPool

log = logging.getLogger(__name__)

_QUOTES = "\"'“”‘’`"


def normalize_for_match(text: str) -> str:
    """Trim, collapse whitespace, case-fold, strip surrounding quotes."""
    s = " ".join(text.split()).casefold()
    while len(s) >= 2 and s[0] in _QUOTES and s[-1] in _QUOTES:
        s = s[1:-1].strip()
    return s


def match(prediction: str, gold: GoldAnswer) -> bool:
    pred = normalize_for_match(prediction)
    return any(pred == normalize_for_match(a) for a in gold.aliases)


@dataclass(frozen=True)
class AnswerSetMetrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    def to_json(self) -> dict:
        return asdict(self)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def dedupe_predictions(predictions: Iterable[str]) -> list[str]:
    seen, out = set(), []
    for p in predictions:
        key = normalize_for_match(p)
        if key and key not in seen:
            seen.add(key)
            out.append(p)
    return out


def metrics_from_matches(n_preds: int, n_gold: int, pairs: Iterable[tuple[int, int]]) -> AnswerSetMetrics:
    """Metrics from (prediction index, gold index) match pairs.

    Precision counts predictions that match any gold; recall counts golds
    matched by any prediction.
    """
    pairs = list(pairs)
    matched_preds = {i for i, _ in pairs}
    matched_gold = {j for _, j in pairs}
    tp = len(matched_gold)
    if n_preds == 0:
        return AnswerSetMetrics(0.0, 0.0, 0.0, 0, 0, n_gold)
    precision = len(matched_preds) / n_preds
    recall = tp / n_gold
    return AnswerSetMetrics(
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        tp=tp,
        fp=n_preds - len(matched_preds),
        fn=n_gold - tp,
    )


def score_question(predictions: Sequence[str], gold: GoldRecord) -> AnswerSetMetrics:
    preds = dedupe_predictions(predictions)
    gold_keys = [{normalize_for_match(a) for a in g.aliases} for g in gold.answers]
    pairs = []
    for i, p in enumerate(preds):
        key = normalize_for_match(p)
        pairs.extend((i, j) for j, keys in enumerate(gold_keys) if key in keys)
    return metrics_from_matches(len(preds), len(gold.answers), pairs)


def macro_average(per_question: Sequence[AnswerSetMetrics]) -> AnswerSetMetrics:
    if not per_question:
        raise ContractError("cannot macro-average an empty list")
    n = len(per_question)
    return AnswerSetMetrics(
        precision=sum(m.precision for m in per_question) / n,
        recall=sum(m.recall for m in per_question) / n,
        f1=sum(m.f1 for m in per_question) / n,
        tp=sum(m.tp for m in per_question),
        fp=sum(m.fp for m in per_question),
        fn=sum(m.fn for m in per_question),
    )


def _collapse(text: str) -> str:
    return " ".join(text.split()).casefold()


def arecall_at_k(pool: RetrievalPool, gold: GoldRecord, k: int, corpus: PassageStore) -> float:
    """Fraction of gold answers with some alias inside the top-k passages (title + text)."""
    texts = [_collapse(f"{p.title} {p.text}") for p in (corpus.get_passage(e.passage_id) for e in pool.top(k))]
    found = 0
    for answer in gold.answers:
        aliases = [_collapse(a) for a in answer.aliases]
        if any(a and a in t for a in aliases for t in texts):
            found += 1
    return found / len(gold.answers)


def macro_arecall(pools: dict[str, RetrievalPool], golds: Sequence[GoldRecord], k: int, corpus: PassageStore) -> float:
    vals = [arecall_at_k(pools[g.question.id], g, k, corpus) for g in golds]
    if not vals:
        raise ContractError("no questions to average over")
    return sum(vals) / len(vals)


# -- LLM judge -------------------------------------------------------------

_INT_RE = re.compile(r"^\W*(\d+)\W*$")


def parse_judge_output(raw: str, n_gold: int) -> int | None:
    """1-based gold index, or None for "None" / unparseable / out of range output."""
    text = (raw or "").strip()
    if text.strip(" .\"'").casefold() == "none":
        return None
    m = _INT_RE.match(text)
    if m is None:
        log.warning("unparseable judge output: %r", text[:80])
        return None
    idx = int(m.group(1))
    if not 1 <= idx <= n_gold:
        log.warning("judge index %d out of range 1..%d", idx, n_gold)
        return None
    return idx


def llm_judge_match(prediction: str, gold: GoldRecord, client: LLMClient) -> int | None:
    answers = [a.canonical for a in gold.answers]
    request = client.request(judge_prompt(gold.question.text, answers, prediction), max_tokens=8)
    try:
        raw = client.generate(request)
    except BackendError as exc:
        log.warning("judge call failed for %r: %s", prediction, exc)
        return None
    return parse_judge_output(raw, len(answers))


def score_question_with_judge(predictions: Sequence[str], gold: GoldRecord,
                              judge: Callable[[str, GoldRecord], int | None]) -> AnswerSetMetrics:
    preds = dedupe_predictions(predictions)
    pairs = []
    for i, p in enumerate(preds):
        idx = judge(p, gold)
        if idx is not None:
            pairs.append((i, idx - 1))
    return metrics_from_matches(len(preds), len(gold.answers), pairs)
