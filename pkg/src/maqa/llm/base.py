"""Backend-independent pieces of the language-model client."""

from __future__ import annotations

import hashlib
import math
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import BackendError, ContractError, UnparseableVerdictError

POSITIVE_VARIANTS = frozenset({"True", "true", "TRUE"})
NEGATIVE_VARIANTS = frozenset({"False", "false", "FALSE"})

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]
    max_tokens: int = 512
    temperature: float = 0.0
    model_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple((r, c) for r, c in self.messages))
        validate_messages(self.messages)
        if self.max_tokens < 1:
            raise ContractError("max_tokens must be positive")
        if self.temperature < 0:
            raise ContractError("temperature must be non-negative")

    @classmethod
    def single(cls, content: str, **kwargs) -> "ChatRequest":
        return cls(messages=(("user", content),), **kwargs)

    def as_openai(self) -> list[dict]:
        return [{"role": r, "content": c} for r, c in self.messages]


def validate_messages(messages: Sequence[tuple[str, str]]) -> None:
    """At least one user turn; after an optional leading system turn, user/assistant alternate."""
    if not messages:
        raise ContractError("chat request has no messages")
    for role, _ in messages:
        if role not in ROLES:
            raise ContractError(f"unknown role {role!r}")
    body = list(messages[1:] if messages[0][0] == "system" else messages)
    if not any(role == "user" for role, _ in body):
        raise ContractError("chat request needs at least one user message")
    if body[0][0] != "user":
        raise ContractError("first non-system message must come from the user")
    for (prev, _), (cur, _) in zip(body, body[1:]):
        if prev == cur or cur == "system":
            raise ContractError("user and assistant turns must alternate")


@dataclass(frozen=True)
class ChoiceScore:
    label: str
    probability_mass: float


@dataclass
class BackendSpec:
    kind: str = "stub"  # "http" | "stub"
    model_id: str = ""
    base_url: str | None = None
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0
    script: str | None = None
    max_tokens: int = 512
    temperature: float = 0.0
    logprobs: bool = True
    top_logprobs: int = 20
    fallback: bool = True
    embed_batch_size: int = 64

    def __post_init__(self):
        if self.kind not in ("http", "stub"):
            raise ContractError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.base_url:
            raise ContractError("http backends require base_url")
        if self.max_retries < 0:
            raise ContractError("max_retries must be non-negative")

    def fingerprint(self) -> dict:
        """Fields that change model outputs; used in cache keys (no secrets, no timeouts)."""
        return {
            "kind": self.kind,
            "model_id": self.model_id,
            "base_url": self.base_url,
            "script": _file_digest(self.script) if self.script else None,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "logprobs": self.logprobs,
        }


def _file_digest(path: str) -> str:
    # key on script contents so an edited script invalidates cached stages
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return f"missing:{path}"


@dataclass
class Completion:
    """One chat completion; ``distribution`` is the verdict-position token distribution, if known."""

    text: str
    distribution: dict[str, float] | None = None


@dataclass
class CallCounter:
    counts: Counter = field(default_factory=Counter)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, kind: str, n: int = 1) -> None:
        with self._lock:
            self.counts[kind] += n

    @property
    def total(self) -> int:
        with self._lock:
            return sum(self.counts.values())

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(sorted(self.counts.items()))


def normalize_rows(vectors: Sequence[Sequence[float]]) -> np.ndarray:
    if not len(vectors):
        return np.zeros((0, 0), dtype=np.float32)
    dims = {len(v) for v in vectors}
    if len(dims) != 1:
        raise BackendError(f"inconsistent embedding dimensions: {sorted(dims)}")
    arr = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise BackendError("backend returned a zero-norm embedding")
    return (arr / norms).astype(np.float32)


def variant_mass(distribution: dict[str, float], variants: Iterable[str]) -> float:
    """Sum the probability of every token whose whitespace-stripped form is a variant."""
    wanted = set(variants)
    mass = sum(p for tok, p in distribution.items() if tok.strip() in wanted)
    return min(1.0, max(0.0, mass))


_ANSWER_PREFIX = re.compile(r"^\s*answer\s*:\s*", re.IGNORECASE)


def first_verdict(text: str, positive: Iterable[str], negative: Iterable[str]) -> bool:
    """Return True/False for whichever variant set appears first in ``text``."""
    body = _ANSWER_PREFIX.sub("", text.strip(), count=1)
    best: tuple[int, bool] | None = None
    for variants, outcome in ((positive, True), (negative, False)):
        for v in variants:
            m = re.search(rf"(?<![A-Za-z0-9]){re.escape(v)}(?![A-Za-z0-9])", body)
            if m and (best is None or m.start() < best[0]):
                best = (m.start(), outcome)
    if best is None:
        raise UnparseableVerdictError(f"no verdict token in completion {text[:80]!r}")
    return best[1]


def verdict_position(tokens: Sequence[str]) -> int | None:
    """Index of the first generated token after any ``Answer:`` prefix and whitespace."""
    acc = ""
    for pos, tok in enumerate(tokens):
        cand = (acc + tok).lstrip().lower()
        if cand == "" or "answer:".startswith(cand) or (
            cand.startswith("answer:") and cand[len("answer:"):].strip() == ""
        ):
            acc += tok
            continue
        return pos
    return None


def logprob_distribution(top: Sequence[tuple[str, float]]) -> dict[str, float]:
    dist: dict[str, float] = {}
    for tok, lp in top:
        dist[tok] = dist.get(tok, 0.0) + math.exp(lp)
    return dist


class LLMClient:
    """Chat generation, binary-choice scoring and embeddings over one backend.

    Subclasses implement ``_complete`` and ``_embed_batch``.  Instances are
    safe to share between threads; ``semaphore`` bounds in-flight requests
    across every client that shares it.
    """

    def __init__(
        self,
        spec: BackendSpec,
        semaphore: threading.Semaphore | None = None,
        positive_variants: Iterable[str] = POSITIVE_VARIANTS,
        negative_variants: Iterable[str] = NEGATIVE_VARIANTS,
    ):
        self.spec = spec
        self.semaphore = semaphore or threading.BoundedSemaphore(8)
        self.positive_variants = frozenset(positive_variants)
        self.negative_variants = frozenset(negative_variants)
        self.calls = CallCounter()

    def _complete(self, request: ChatRequest, want_distribution: bool) -> Completion:
        raise NotImplementedError

    def _embed_batch(self, texts: list[str]) -> list[list[float]]:
        raise NotImplementedError

    def request(self, messages, max_tokens: int | None = None) -> ChatRequest:
        """Build a request carrying this backend's model and sampling settings."""
        if isinstance(messages, str):
            messages = (("user", messages),)
        return ChatRequest(
            messages=tuple(messages),
            max_tokens=max_tokens or self.spec.max_tokens,
            temperature=self.spec.temperature,
            model_id=self.spec.model_id,
        )

    def generate(self, request: ChatRequest) -> str:
        self.calls.add("generate")
        with self.semaphore:
            return self._complete(request, want_distribution=False).text

    def score_binary(
        self,
        request: ChatRequest,
        positive_variants: Iterable[str] | None = None,
        negative_variants: Iterable[str] | None = None,
    ) -> tuple[ChoiceScore, ChoiceScore]:
        pos = frozenset(positive_variants) if positive_variants is not None else self.positive_variants
        neg = frozenset(negative_variants) if negative_variants is not None else self.negative_variants
        self.calls.add("score_binary")
        with self.semaphore:
            completion = self._complete(request, want_distribution=self.spec.logprobs)
        if completion.distribution is not None:
            return (
                ChoiceScore("True", variant_mass(completion.distribution, pos)),
                ChoiceScore("False", variant_mass(completion.distribution, neg)),
            )
        if not self.spec.fallback:
            raise BackendError("backend returned no token probabilities and fallback is disabled")
        outcome = first_verdict(completion.text, pos, neg)
        return ChoiceScore("True", 1.0 if outcome else 0.0), ChoiceScore("False", 0.0 if outcome else 1.0)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Unit-normalized float32 embeddings, one row per input, order preserved."""
        texts = list(texts)
        if not texts:
            return np.zeros((0, 0), dtype=np.float32)
        rows: list[list[float]] = []
        size = max(1, self.spec.embed_batch_size)
        for start in range(0, len(texts), size):
            self.calls.add("embed")
            with self.semaphore:
                rows.extend(self._embed_batch(texts[start:start + size]))
        if len(rows) != len(texts):
            raise BackendError(f"expected {len(texts)} embeddings, got {len(rows)}")
        return normalize_rows(rows)
