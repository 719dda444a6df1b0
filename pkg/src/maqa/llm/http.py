"""OpenAI-compatible HTTP backend (``/chat/completions`` and ``/embeddings``)."""

from __future__ import annotations

import logging
import os
import time
from typing import Callable

import httpx

from ..errors import BackendError
from .base import BackendSpec, ChatRequest, Completion, LLMClient, logprob_distribution, verdict_position

log = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({408, 429, 500, 502, 503, 504})


class HttpClient(LLMClient):
    def __init__(
        self,
        spec: BackendSpec,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        seed: int | None = None,
        **kwargs,
    ):
        super().__init__(spec, **kwargs)
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(spec.api_key_env, "") if spec.api_key_env else ""
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._http = httpx.Client(
            base_url=spec.base_url.rstrip("/"),
            headers=headers,
            timeout=spec.timeout,
            transport=transport,
        )
        self._sleep = sleep
        self.seed = seed

    def close(self) -> None:
        self._http.close()

    def _post(self, path: str, body: dict) -> dict:
        last: Exception | None = None
        for attempt in range(self.spec.max_retries + 1):
            if attempt:
                delay = self.spec.backoff_base * 2 ** (attempt - 1)
                log.warning("retrying %s (attempt %d) in %.1fs: %s", path, attempt + 1, delay, last)
                self._sleep(delay)
            try:
                resp = self._http.post(path, json=body)
            except httpx.TransportError as exc:  # includes timeouts
                last = exc
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last = BackendError(f"HTTP {resp.status_code} from {path}", status=resp.status_code)
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code} from {path}: {resp.text[:200]}", status=resp.status_code)
            try:
                return resp.json()
            except ValueError as exc:
                raise BackendError(f"non-JSON response from {path}") from exc
        status = last.status if isinstance(last, BackendError) else None
        raise BackendError(f"{path} failed after {self.spec.max_retries} retries: {last}", status=status)

    def _complete(self, request: ChatRequest, want_distribution: bool) -> Completion:
        body = {
            "model": request.model_id or self.spec.model_id,
            "messages": request.as_openai(),
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        if self.seed is not None:
            body["seed"] = self.seed
        if want_distribution:
            body["logprobs"] = True
            body["top_logprobs"] = self.spec.top_logprobs
        data = self._post("/chat/completions", body)
        try:
            choice = data["choices"][0]
            text = choice["message"].get("content") or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat response: {str(data)[:200]}") from exc
        dist = None
        if want_distribution:
            content = ((choice.get("logprobs") or {}).get("content")) or []
            pos = verdict_position([t.get("token", "") for t in content])
            if pos is not None:
                entry = content[pos]
                top = [(t["token"], t["logprob"]) for t in entry.get("top_logprobs") or []]
                if not top:
                    top = [(entry["token"], entry["logprob"])]
                dist = logprob_distribution(top)
        return Completion(text=text, distribution=dist)

    def _embed_batch(self, texts: list[str]) -> list[list[float]]:
        data = self._post("/embeddings", {"model": self.spec.model_id, "input": texts})
        try:
            items = sorted(data["data"], key=lambda d: d.get("index", 0))
            return [item["embedding"] for item in items]
        except (KeyError, TypeError) as exc:
            raise BackendError(f"malformed embeddings response: {str(data)[:200]}") from exc
