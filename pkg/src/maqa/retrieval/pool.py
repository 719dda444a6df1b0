"""Sparse / dense / fused retrieval, per-question pools, and within-pool search."""

from __future__ import annotations

import json
import urllib.parse
from pathlib import Path
from typing import Collection, Iterable

from ..dataset import Question
from ..errors import BackendError, ConfigurationError, NotFoundError, RetrieverUnavailableError
from ..llm.base import CallCounter, LLMClient
from .bm25 import BM25Index
from .dense import DenseIndex
from .fusion import DEFAULT_K_RRF, rrf_fuse
from .types import RankedPassage, RetrievalPool

RETRIEVER_KINDS = ("sparse", "dense", "fused")


class Retriever:
    """Runs the configured retriever kind over the whole corpus or a pool subset.

    ``calls`` counts search invocations by kind, which lets callers observe
    how much retrieval a stage issued.
    """

    def __init__(
        self,
        kind: str,
        sparse: BM25Index | None = None,
        dense: DenseIndex | None = None,
        embedder: LLMClient | None = None,
        k_rrf: int = DEFAULT_K_RRF,
    ):
        if kind not in RETRIEVER_KINDS:
            raise ConfigurationError(f"unknown retriever kind {kind!r}")
        if kind in ("sparse", "fused") and sparse is None:
            raise RetrieverUnavailableError(f"{kind} retrieval needs a BM25 index")
        if kind in ("dense", "fused") and (dense is None or embedder is None):
            raise RetrieverUnavailableError(f"{kind} retrieval needs an embedding cache and embedder")
        if sparse is not None and dense is not None and sorted(sparse.doc_ids) != sorted(dense.passage_ids):
            raise ConfigurationError("BM25 index and embedding cache cover different passages")
        self.kind = kind
        self.sparse = sparse
        self.dense = dense
        self.embedder = embedder
        self.k_rrf = k_rrf
        self.calls = CallCounter()

    def _embed_query(self, query: str):
        try:
            return self.embedder.embed([query])[0]
        except BackendError as exc:
            raise RetrieverUnavailableError(f"query embedding failed: {exc}") from exc

    def sparse_search(self, query: str, top_n: int, restrict_to: Collection[str] | None = None) -> list[RankedPassage]:
        if self.sparse is None:
            raise RetrieverUnavailableError("no BM25 index loaded")
        self.calls.add("sparse")
        return self.sparse.search(query, top_n, restrict_to)

    def dense_search(self, query: str, top_n: int, restrict_to: Collection[str] | None = None) -> list[RankedPassage]:
        if self.dense is None or self.embedder is None:
            raise RetrieverUnavailableError("no embedding cache loaded")
        self.calls.add("dense")
        return self.dense.search(self._embed_query(query), top_n, restrict_to)

    def _search(self, query: str, top_n: int, restrict_to: Collection[str] | None):
        """Return (ranked list, per-passage (sparse_rank, dense_rank))."""
        if self.kind == "sparse":
            hits = self.sparse_search(query, top_n, restrict_to)
            return hits, {h.passage_id: (h.rank, None) for h in hits}
        if self.kind == "dense":
            hits = self.dense_search(query, top_n, restrict_to)
            return hits, {h.passage_id: (None, h.rank) for h in hits}
        sparse_hits = self.sparse_search(query, top_n, restrict_to)
        dense_hits = self.dense_search(query, top_n, restrict_to)
        fused = rrf_fuse([sparse_hits, dense_hits], self.k_rrf)[:top_n]
        s_rank = {h.passage_id: h.rank for h in sparse_hits}
        d_rank = {h.passage_id: h.rank for h in dense_hits}
        return fused, {h.passage_id: (s_rank.get(h.passage_id), d_rank.get(h.passage_id)) for h in fused}

    def search(self, query: str, top_n: int) -> list[RankedPassage]:
        return self._search(query, top_n, None)[0]

    def build_pool(self, question: Question, pool_size: int) -> RetrievalPool:
        hits, ranks = self._search(question.text, pool_size, None)
        return RetrievalPool(question.id, self.kind, hits, ranks)

    def search_within_pool(
        self,
        pool: RetrievalPool,
        query: str,
        k: int,
        exclude: Iterable[str] = (),
    ) -> list[RankedPassage]:
        """Rank only the pool's passages (minus ``exclude``) against ``query``."""
        if pool.retriever_id != self.kind:
            raise ConfigurationError(
                f"pool was built with {pool.retriever_id!r} but retriever is {self.kind!r}"
            )
        members = set(pool.passage_ids) - set(exclude)
        if not members or k < 1:
            return []
        return self._search(query, k, members)[0]


def _pool_filename(question_id: str, retriever_id: str) -> str:
    return f"{urllib.parse.quote(question_id, safe='')}.{retriever_id}.jsonl"


def save_pool(pool: RetrievalPool, pool_dir: str | Path) -> Path:
    pool_dir = Path(pool_dir)
    pool_dir.mkdir(parents=True, exist_ok=True)
    path = pool_dir / _pool_filename(pool.question_id, pool.retriever_id)
    with open(path, "w", encoding="utf-8") as fh:
        for e in pool.entries:
            s_rank, d_rank = pool.per_retriever_ranks.get(e.passage_id, (None, None))
            row = e.to_json() | {"sparse_rank": s_rank, "dense_rank": d_rank}
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


def load_pool(pool_dir: str | Path, question_id: str, retriever_id: str) -> RetrievalPool:
    path = Path(pool_dir) / _pool_filename(question_id, retriever_id)
    if not path.exists():
        raise NotFoundError(f"no {retriever_id} pool for question {question_id!r} in {pool_dir}")
    entries, ranks = [], {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            entries.append(RankedPassage(row["passage_id"], row["score"], row["rank"]))
            ranks[row["passage_id"]] = (row.get("sparse_rank"), row.get("dense_rank"))
    return RetrievalPool(question_id, retriever_id, entries, ranks)
