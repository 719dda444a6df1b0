from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class RankedPassage:
    passage_id: str
    score: float
    rank: int

    def to_json(self) -> dict:
        return {"passage_id": self.passage_id, "score": self.score, "rank": self.rank}


@dataclass
class RetrievalPool:
    """Ranked passages retrieved for one question.

    ``per_retriever_ranks`` maps passage id to ``(sparse_rank, dense_rank)``;
    either side is None when that retriever did not return the passage.
    """

    question_id: str
    retriever_id: str
    entries: list[RankedPassage]
    per_retriever_ranks: dict[str, tuple[int | None, int | None]] = field(default_factory=dict)

    @property
    def passage_ids(self) -> list[str]:
        return [e.passage_id for e in self.entries]

    def top(self, k: int) -> list[RankedPassage]:
        return self.entries[:k]

    def __len__(self) -> int:
        return len(self.entries)


def rank_by_score(scores: dict[str, float], top_n: int | None = None) -> list[RankedPassage]:
    """Sort by score descending, ties by ascending passage id, and assign 1-based ranks."""
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    if top_n is not None:
        ordered = ordered[:top_n]
    return [RankedPassage(pid, float(score), i) for i, (pid, score) in enumerate(ordered, start=1)]
