"""Chat-completions client with structured-output retries and rate limiting."""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from typing import Any, Optional

import httpx

from rgmem.backend.base import Backend, BackendRequest, load_prompt, load_schema, validate_response
from rgmem.errors import BackendFailure, SchemaViolation

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 4  # first try plus three corrective re-prompts


class TokenBucket:
    """Requests-per-minute limiter; ``acquire`` blocks until a token is available."""

    def __init__(self, per_minute: float, clock=time.monotonic, sleep=time.sleep):
        self.rate = per_minute / 60.0
        self.capacity = max(1.0, per_minute / 60.0)
        self.tokens = self.capacity
        self._clock, self._sleep = clock, sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate <= 0:
            return
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self._sleep(wait)


def render_prompt(request: BackendRequest) -> str:
    template = load_prompt(request.task)
    fields: dict[str, Any] = {}
    for key, value in request.payload.items():
        if isinstance(value, (list, dict)):
            fields[key] = json.dumps(value, ensure_ascii=False, indent=1)
        else:
            fields[key] = "" if value is None else value
    fields.setdefault("timestamp", "unknown")
    fields.setdefault("known_abstracts", "")
    body = template.format_map(_Default(fields))
    schema = json.dumps(load_schema(request.task), indent=1)
    return (
        f"{body}\n\nRespond with a single JSON object and nothing else. "
        f"It must validate against this JSON schema:\n{schema}\n"
    )


class _Default(dict):
    def __missing__(self, key):
        return ""


class RemoteBackend(Backend):
    name = "remote"

    def __init__(
        self,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        model: Optional[str] = None,
        embed_model: Optional[str] = None,
        max_concurrency: int = 4,
        requests_per_minute: float = 120.0,
        timeout: float = 60.0,
        transport: Optional[httpx.BaseTransport] = None,
        retry_delay: float = 1.0,
    ):
        self.base_url = (base_url or os.environ.get("RGMEM_BASE_URL") or "https://api.openai.com/v1").rstrip("/")
        self.api_key = api_key or os.environ.get("RGMEM_API_KEY", "")
        self.model = model or os.environ.get("RGMEM_MODEL") or "gpt-4.1-mini"
        self.embed_model = embed_model or os.environ.get("RGMEM_EMBED_MODEL") or "text-embedding-3-small"
        self.retry_delay = retry_delay
        self._sem = threading.BoundedSemaphore(max_concurrency)
        self._bucket = TokenBucket(requests_per_minute)
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, body: dict) -> dict:
        last_exc: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            self._bucket.acquire()
            try:
                with self._sem:
                    resp = self._client.post(f"{self.base_url}{path}", json=body)
            except httpx.HTTPError as exc:
                last_exc = exc
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_exc = BackendFailure(f"HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise BackendFailure(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        last_exc = exc
            if attempt + 1 < MAX_ATTEMPTS and self.retry_delay:
                time.sleep(self.retry_delay * 2**attempt)
        raise BackendFailure(f"{path} failed after {MAX_ATTEMPTS} attempts: {last_exc}")

    def call(self, request: BackendRequest) -> dict:
        if request.task == "embed":
            return {"vector": self.embed(request.payload["text"])}
        messages = [
            {"role": "system", "content": "You are a precise memory-processing component. Output JSON only."},
            {"role": "user", "content": render_prompt(request)},
        ]
        problem = ""
        for attempt in range(MAX_ATTEMPTS):
            data = self._post(
                "/chat/completions",
                {
                    "model": self.model,
                    "messages": messages,
                    "max_tokens": request.budget,
                    "temperature": 0,
                    "response_format": {"type": "json_object"},
                },
            )
            try:
                content = data["choices"][0]["message"]["content"]
                parsed = json.loads(content)
                return validate_response(request.task, parsed)
            except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
                problem = f"output was not valid JSON ({exc})"
                content = str(data)[:500]
            except SchemaViolation as exc:
                problem = str(exc)
            log.warning("%s: malformed output on attempt %d: %s", request.task, attempt + 1, problem)
            messages = messages[:2] + [
                {"role": "assistant", "content": content},
                {"role": "user", "content": f"That response was invalid: {problem}. Reply again with JSON that validates against the schema."},
            ]
        raise BackendFailure(f"{request.task}: no schema-valid output after {MAX_ATTEMPTS} attempts ({problem})")

    def embed(self, text: str) -> list[float]:
        data = self._post("/embeddings", {"model": self.embed_model, "input": text})
        try:
            vec = [float(v) for v in data["data"][0]["embedding"]]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendFailure(f"bad embedding response: {exc}") from exc
        norm = math.sqrt(sum(v * v for v in vec))
        if norm == 0:
            raise BackendFailure("zero embedding vector")
        self.dim = len(vec)
        return [v / norm for v in vec]
