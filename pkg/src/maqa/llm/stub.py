"""Deterministic scripted backend.

A script maps the SHA-256 of the prompt content to a response entry::

    {"<sha256>": {"text": "* A\\n* B"},
     "<sha256>": {"text": "Answer: True", "token_distribution": {"True": 0.8, "False": 0.1}},
     "<sha256>": {"embedding": [0.1, 0.2, ...]},
     "<sha256>": {"error": "simulated outage", "status": 503}}

Chat keys hash the JSON list ``[[role, content], ...]``; embedding keys hash
the raw input text.  An optional ``responder`` fills in unscripted entries
and records them, which is how fixture scripts are produced.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Callable

from ..errors import BackendError
from .base import BackendSpec, ChatRequest, Completion, LLMClient

Responder = Callable[[str, object], dict]


def chat_key(request: ChatRequest) -> str:
    payload = json.dumps([list(m) for m in request.messages], ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def embed_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class StubClient(LLMClient):
    def __init__(self, spec: BackendSpec | None = None, script: dict | None = None,
                 responder: Responder | None = None, **kwargs):
        spec = spec or BackendSpec(kind="stub", model_id="stub")
        super().__init__(spec, **kwargs)
        if script is None and spec.script:
            script = load_script(spec.script)
        self.script: dict[str, dict] = dict(script or {})
        self.responder = responder
        self._lock = threading.Lock()

    def _lookup(self, key: str, kind: str, payload) -> dict:
        with self._lock:
            entry = self.script.get(key)
            if entry is None and self.responder is not None:
                entry = self.responder(kind, payload)
                self.script[key] = entry
        if entry is None:
            raise BackendError(f"stub script has no entry for {kind} prompt {key[:12]}")
        if "error" in entry:
            raise BackendError(entry["error"], status=entry.get("status"))
        return entry

    def _complete(self, request: ChatRequest, want_distribution: bool) -> Completion:
        entry = self._lookup(chat_key(request), "chat", request)
        dist = entry.get("token_distribution") if want_distribution else None
        return Completion(text=entry.get("text", ""), distribution=dict(dist) if dist is not None else None)

    def _embed_batch(self, texts: list[str]) -> list[list[float]]:
        out = []
        for text in texts:
            entry = self._lookup(embed_key(text), "embed", text)
            if "embedding" not in entry:
                raise BackendError(f"stub entry for {text[:40]!r} has no embedding")
            out.append(entry["embedding"])
        return out

    def save_script(self, path: str | Path) -> None:
        with self._lock:
            data = dict(sorted(self.script.items()))
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, ensure_ascii=False, indent=1, sort_keys=True)
            fh.write("\n")


def load_script(path: str | Path) -> dict[str, dict]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise BackendError(f"stub script {path} must be a JSON object")
    return data
