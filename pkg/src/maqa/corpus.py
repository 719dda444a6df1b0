"""Document chunking and the on-disk passage store.

A store is a directory holding ``passages.jsonl`` (one passage per line) and
``manifest.json``.  Stores are immutable once written; rebuilding from the
same source yields the same ``content_hash``.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import InvalidInputError, NotFoundError

log = logging.getLogger(__name__)

PASSAGES_FILE = "passages.jsonl"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class Passage:
    id: str
    title: str
    text: str
    doc_id: str
    chunk_index: int

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "doc_id": self.doc_id,
            "chunk_index": self.chunk_index,
            "title": self.title,
            "text": self.text,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Passage":
        return cls(
            id=obj["id"],
            title=obj["title"],
            text=obj["text"],
            doc_id=obj["doc_id"],
            chunk_index=int(obj["chunk_index"]),
        )


@dataclass(frozen=True)
class CorpusManifest:
    corpus_id: str
    passage_count: int
    chunk_size_words: int
    created_at: str
    content_hash: str


def passage_id(doc_id: str, chunk_index: int) -> str:
    return f"{doc_id}:{chunk_index}"


def chunk_document(doc_id: str, title: str, body: str, chunk_size_words: int = 100) -> list[Passage]:
    """Split ``body`` into consecutive runs of ``chunk_size_words`` words.

    A word is a maximal run of non-whitespace characters.  The final chunk
    may be shorter; it is never merged into its predecessor.
    """
    if chunk_size_words < 1:
        raise InvalidInputError(f"chunk_size_words must be >= 1, got {chunk_size_words}")
    words = body.split()
    if not words:
        raise InvalidInputError(f"document {doc_id!r} has an empty body")
    return [
        Passage(
            id=passage_id(doc_id, i),
            title=title,
            text=" ".join(words[start:start + chunk_size_words]),
            doc_id=doc_id,
            chunk_index=i,
        )
        for i, start in enumerate(range(0, len(words), chunk_size_words))
    ]


def content_hash(passages: Iterable[Passage]) -> str:
    h = hashlib.sha256()
    for p in sorted(passages, key=lambda p: p.id):
        for field in (p.id, p.title, p.text):
            h.update(field.encode("utf-8"))
            h.update(b"\x00")
        h.update(b"\x01")
    return h.hexdigest()


def read_documents(source_path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, record)`` for each document in a JSON-lines file."""
    with open(source_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(rec, dict):
                raise InvalidInputError("record is not a JSON object", line=lineno)
            for key in ("id", "title", "text"):
                if key not in rec:
                    raise InvalidInputError(f"missing field {key!r}", line=lineno)
                if not isinstance(rec[key], str):
                    raise InvalidInputError(f"field {key!r} must be a string", line=lineno)
            yield lineno, rec


def ingest(
    source_path: str | Path,
    store_dir: str | Path,
    chunk_size_words: int = 100,
    corpus_id: str | None = None,
) -> CorpusManifest:
    """Chunk every document in ``source_path`` and write a passage store."""
    passages: list[Passage] = []
    seen: dict[str, int] = {}
    for lineno, rec in read_documents(source_path):
        doc_id = rec["id"]
        if doc_id in seen:
            raise InvalidInputError(
                f"duplicate doc id {doc_id!r} (first seen on line {seen[doc_id]})", line=lineno
            )
        seen[doc_id] = lineno
        try:
            passages.extend(chunk_document(doc_id, rec["title"], rec["text"], chunk_size_words))
        except InvalidInputError as exc:
            raise InvalidInputError(str(exc), line=lineno) from exc

    store_dir = Path(store_dir)
    store_dir.mkdir(parents=True, exist_ok=True)
    with open(store_dir / PASSAGES_FILE, "w", encoding="utf-8") as fh:
        for p in passages:
            fh.write(json.dumps(p.to_json(), ensure_ascii=False) + "\n")

    manifest = CorpusManifest(
        corpus_id=corpus_id or Path(source_path).stem,
        passage_count=len(passages),
        chunk_size_words=chunk_size_words,
        created_at=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        content_hash=content_hash(passages),
    )
    with open(store_dir / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2)
        fh.write("\n")
    log.info("ingested %d passages from %s", len(passages), source_path)
    return manifest


class PassageStore:
    """Read-only view over an ingested corpus.  Safe for concurrent reads."""

    def __init__(self, passages: list[Passage], manifest: CorpusManifest):
        self.manifest = manifest
        self._passages = passages
        self._by_id = {p.id: p for p in passages}

    @classmethod
    def load(cls, store_dir: str | Path) -> "PassageStore":
        store_dir = Path(store_dir)
        if not (store_dir / MANIFEST_FILE).exists():
            raise NotFoundError(f"no corpus manifest in {store_dir}")
        with open(store_dir / MANIFEST_FILE, encoding="utf-8") as fh:
            manifest = CorpusManifest(**json.load(fh))
        with open(store_dir / PASSAGES_FILE, encoding="utf-8") as fh:
            passages = [Passage.from_json(json.loads(line)) for line in fh if line.strip()]
        if len(passages) != manifest.passage_count:
            raise InvalidInputError(
                f"manifest lists {manifest.passage_count} passages, store has {len(passages)}"
            )
        return cls(passages, manifest)

    def get_passage(self, pid: str) -> Passage:
        try:
            return self._by_id[pid]
        except KeyError:
            raise NotFoundError(f"unknown passage id {pid!r}") from None

    __getitem__ = get_passage

    def __contains__(self, pid: object) -> bool:
        return pid in self._by_id

    def __iter__(self) -> Iterator[Passage]:
        return iter(self._passages)

    def __len__(self) -> int:
        return len(self._passages)

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self._passages]
