from __future__ import annotations

from collections import defaultdict
from fractions import Fraction
from typing import Sequence

from ..errors import ContractError
from .types import RankedPassage

DEFAULT_K_RRF = 60


def rrf_fuse(lists: Sequence[Sequence[RankedPassage]], k_rrf: int = DEFAULT_K_RRF) -> list[RankedPassage]:
    """Reciprocal rank fusion: score(p) = sum over lists containing p of 1 / (k_rrf + rank)."""
    if len(lists) < 2:
        raise ContractError("rrf_fuse needs at least two ranked lists")
    if k_rrf < 1:
        raise ContractError(f"k_rrf must be positive, got {k_rrf}")
    # exact rational sums so that equal fused scores tie exactly
    fused: dict[str, Fraction] = defaultdict(Fraction)
    for ranked in lists:
        for entry in ranked:
            fused[entry.passage_id] += Fraction(1, k_rrf + entry.rank)
    ordered = sorted(fused.items(), key=lambda kv: (-kv[1], kv[0]))
    return [RankedPassage(pid, float(score), i) for i, (pid, score) in enumerate(ordered, start=1)]


def ranks_by_list(lists: Sequence[Sequence[RankedPassage]]) -> dict[str, tuple[int | None, ...]]:
    """Map each passage id to its rank in every input list (None where absent)."""
    lookup = [{e.passage_id: e.rank for e in ranked} for ranked in lists]
    ids = sorted({pid for ranks in lookup for pid in ranks})
    return {pid: tuple(ranks.get(pid) for ranks in lookup) for pid in ids}
