"""Exhaustive inner-product search over cached unit-normalized embeddings.

Cache layout: ``embeddings.f32`` holds ``n * dim`` little-endian float32
values in passage order; ``embeddings.json`` records the model id, dimension,
passage-id order and the corpus content hash.
"""

from __future__ import annotations

import json
from collections.abc import Collection
from pathlib import Path

import numpy as np

from ..corpus import Passage, PassageStore
from ..errors import ConfigurationError, InvalidInputError, NotFoundError
from ..llm.base import LLMClient
from .types import RankedPassage, rank_by_score

VECTORS_FILE = "embeddings.f32"
SIDECAR_FILE = "embeddings.json"


def embedding_text(p: Passage) -> str:
    return f"{p.title}\n{p.text}" if p.title else p.text


class DenseIndex:
    def __init__(self, passage_ids: list[str], vectors: np.ndarray, model_id: str = "", corpus_hash: str = ""):
        if vectors.ndim != 2 or vectors.shape[0] != len(passage_ids):
            raise ConfigurationError(
                f"embedding matrix shape {vectors.shape} does not match {len(passage_ids)} passages"
            )
        self.passage_ids = list(passage_ids)
        self.vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        self.model_id = model_id
        self.corpus_hash = corpus_hash
        self._row = {pid: i for i, pid in enumerate(self.passage_ids)}

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def scores(self, query_vec: np.ndarray, restrict_to: Collection[str] | None = None) -> dict[str, float]:
        q = np.asarray(query_vec, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.dimension:
            raise ConfigurationError(
                f"query embedding has dimension {q.shape[0]}, cache has {self.dimension}"
            )
        if restrict_to is None:
            ids = self.passage_ids
            mat = self.vectors
        else:
            ids = sorted(pid for pid in set(restrict_to) if pid in self._row)
            mat = self.vectors[[self._row[pid] for pid in ids]] if ids else self.vectors[:0]
        sims = mat.astype(np.float64) @ q
        return {pid: float(s) for pid, s in zip(ids, sims)}

    def search(self, query_vec: np.ndarray, top_n: int, restrict_to: Collection[str] | None = None) -> list[RankedPassage]:
        return rank_by_score(self.scores(query_vec, restrict_to), top_n)

    def save(self, cache_dir: str | Path) -> None:
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
        self.vectors.astype("<f4").tofile(cache_dir / VECTORS_FILE)
        sidecar = {
            "model_id": self.model_id,
            "dimension": self.dimension,
            "passage_ids": self.passage_ids,
            "content_hash": self.corpus_hash,
        }
        with open(cache_dir / SIDECAR_FILE, "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, ensure_ascii=False, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, cache_dir: str | Path, expected_hash: str | None = None, expected_model: str | None = None) -> "DenseIndex":
        cache_dir = Path(cache_dir)
        if not (cache_dir / SIDECAR_FILE).exists():
            raise NotFoundError(f"no embedding cache in {cache_dir}")
        with open(cache_dir / SIDECAR_FILE, encoding="utf-8") as fh:
            meta = json.load(fh)
        if expected_hash is not None and meta["content_hash"] != expected_hash:
            raise ConfigurationError("embedding cache was built for a different corpus")
        if expected_model is not None and meta["model_id"] != expected_model:
            raise ConfigurationError(
                f"embedding cache built with model {meta['model_id']!r}, config uses {expected_model!r}"
            )
        flat = np.fromfile(cache_dir / VECTORS_FILE, dtype="<f4")
        n, dim = len(meta["passage_ids"]), int(meta["dimension"])
        if flat.size != n * dim:
            raise ConfigurationError(f"embedding file holds {flat.size} floats, expected {n}x{dim}")
        return cls(meta["passage_ids"], flat.reshape(n, dim), meta["model_id"], meta["content_hash"])


def build_embedding_cache(store: PassageStore, client: LLMClient, cache_dir: str | Path) -> DenseIndex:
    passages = list(store)
    if not passages:
        raise InvalidInputError("cannot embed an empty corpus")
    vectors = client.embed([embedding_text(p) for p in passages])
    index = DenseIndex([p.id for p in passages], vectors,
                       client.spec.model_id, store.manifest.content_hash)
    index.save(cache_dir)
    return index
