"""Okapi BM25 over an inverted index.

Scoring uses the non-negative idf variant ``log(1 + (N - df + 0.5) / (df + 0.5))``
and the classic ``(k1 + 1)`` numerator.  Repeated query terms contribute once
per occurrence.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Iterable

from ..corpus import Passage, PassageStore
from ..errors import InvalidInputError, NotFoundError
from .types import RankedPassage, rank_by_score

INDEX_FILE = "bm25_index.json"

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class IndexStats:
    doc_count: int
    avg_doc_len: float
    vocabulary_size: int


class BM25Index:
    def __init__(
        self,
        doc_ids: list[str],
        doc_lens: list[int],
        postings: dict[str, list[tuple[int, int]]],
        corpus_hash: str = "",
        k1: float = 0.9,
        b: float = 0.4,
    ):
        self.doc_ids = doc_ids
        self.doc_lens = doc_lens
        self.postings = postings
        self.corpus_hash = corpus_hash
        self.k1 = k1
        self.b = b
        n = len(doc_ids)
        self.avg_doc_len = sum(doc_lens) / n if n else 0.0
        self._idf = {t: self.idf(len(plist)) for t, plist in postings.items()}

    @classmethod
    def build(cls, passages: Iterable[Passage], corpus_hash: str = "", k1: float = 0.9, b: float = 0.4) -> "BM25Index":
        doc_ids: list[str] = []
        doc_lens: list[int] = []
        postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
        for idx, p in enumerate(passages):
            # titles are indexed together with the body
            toks = tokenize(f"{p.title} {p.text}")
            doc_ids.append(p.id)
            doc_lens.append(len(toks))
            for term, tf in sorted(Counter(toks).items()):
                postings[term].append((idx, tf))
        if not doc_ids:
            raise InvalidInputError("cannot build a BM25 index over an empty corpus")
        return cls(doc_ids, doc_lens, dict(sorted(postings.items())), corpus_hash, k1, b)

    @property
    def stats(self) -> IndexStats:
        return IndexStats(
            doc_count=len(self.doc_ids),
            avg_doc_len=self.avg_doc_len,
            vocabulary_size=len(self.postings),
        )

    def idf(self, df: int) -> float:
        n = len(self.doc_ids)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def score_all(self, query: str, restrict_to: Collection[str] | None = None) -> dict[str, float]:
        """Scores for every document sharing at least one term with ``query``."""
        k1, b, avgdl = self.k1, self.b, self.avg_doc_len
        allowed = set(restrict_to) if restrict_to is not None else None
        scores: dict[str, float] = defaultdict(float)
        for term in tokenize(query):
            plist = self.postings.get(term)
            if not plist:
                continue
            idf = self._idf[term]
            for idx, tf in plist:
                pid = self.doc_ids[idx]
                if allowed is not None and pid not in allowed:
                    continue
                norm = k1 * (1.0 - b + b * self.doc_lens[idx] / avgdl)
                scores[pid] += idf * tf * (k1 + 1.0) / (tf + norm)
        return dict(scores)

    def search(self, query: str, top_n: int, restrict_to: Collection[str] | None = None) -> list[RankedPassage]:
        return rank_by_score(self.score_all(query, restrict_to), top_n)

    def save(self, index_dir: str | Path) -> Path:
        path = Path(index_dir) / INDEX_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "corpus_hash": self.corpus_hash,
            "doc_ids": self.doc_ids,
            "doc_lens": self.doc_lens,
            "postings": {t: [list(e) for e in plist] for t, plist in self.postings.items()},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, separators=(",", ":"), sort_keys=True)
        return path

    @classmethod
    def load(cls, index_dir: str | Path, k1: float = 0.9, b: float = 0.4) -> "BM25Index":
        path = Path(index_dir) / INDEX_FILE
        if not path.exists():
            raise NotFoundError(f"no BM25 index at {path}")
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        postings = {t: [(int(i), int(tf)) for i, tf in plist] for t, plist in payload["postings"].items()}
        return cls(payload["doc_ids"], payload["doc_lens"], postings, payload["corpus_hash"], k1, b)


def build_sparse_index(corpus_dir: str | Path, index_dir: str | Path) -> IndexStats:
    """Index an ingested corpus and persist the postings under ``index_dir``."""
    store = PassageStore.load(corpus_dir)
    index = BM25Index.build(store, store.manifest.content_hash)
    index.save(index_dir)
    return index.stats
