from __future__ import annotations

import threading

from .base import (
    NEGATIVE_VARIANTS,
    POSITIVE_VARIANTS,
    BackendSpec,
    ChatRequest,
    ChoiceScore,
    LLMClient,
)
from .http import HttpClient
from .stub import StubClient, chat_key, embed_key, load_script


def make_client(spec: BackendSpec, semaphore: threading.Semaphore | None = None, seed: int | None = None) -> LLMClient:
    if spec.kind == "http":
        return HttpClient(spec, semaphore=semaphore, seed=seed)
    return StubClient(spec, semaphore=semaphore)


__all__ = [
    "BackendSpec",
    "ChatRequest",
    "ChoiceScore",
    "HttpClient",
    "LLMClient",
    "NEGATIVE_VARIANTS",
    "POSITIVE_VARIANTS",
    "StubClient",
    "chat_key",
    "embed_key",
    "load_script",
    "make_client",
]
