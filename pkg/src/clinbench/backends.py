"""Language-model backends: the call interfaces, retry, rate limiting, scripted and HTTP clients."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence, runtime_checkable

import httpx

log = logging.getLogger(__name__)

DEFAULT_RETRIES = 2


class BackendError(RuntimeError):
    """A backend call failed and should not be retried."""


class BackendTransportError(BackendError):
    """Transient failure (network, timeout, 429, 5xx); safe to retry."""


@runtime_checkable
class LanguageModel(Protocol):
    def complete(self, prompt: str) -> str: ...


@runtime_checkable
class DoctorBackend(Protocol):
    model_id: str

    def complete(self, history: Sequence, system_prompt: str) -> str: ...


def call_with_retry(fn: Callable[..., str], *args, retries: int = DEFAULT_RETRIES, backoff: float = 0.0, **kwargs) -> str:
    """Call ``fn``; retry only on :class:`BackendTransportError`, at most ``retries`` times."""
    for attempt in range(retries + 1):
        try:
            return fn(*args, **kwargs)
        except BackendTransportError as exc:
            if attempt == retries:
                raise
            log.warning("transient backend failure (attempt %d/%d): %s", attempt + 1, retries + 1, exc)
            if backoff:
                time.sleep(backoff * 2**attempt)
    raise AssertionError("unreachable")


class RateLimiter:
    """Minimum spacing between calls, shared by every conversation hitting one provider."""

    def __init__(self, calls_per_second: float | None):
        self.interval = 1.0 / calls_per_second if calls_per_second else 0.0
        self._lock = threading.Lock()
        self._next = 0.0

    def acquire(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = time.monotonic()
            wait = self._next - now
            self._next = max(now, self._next) + self.interval
        if wait > 0:
            time.sleep(wait)


_LIMITERS: dict[str, RateLimiter] = {}
_LIMITERS_LOCK = threading.Lock()


def provider_limiter(provider: str, calls_per_second: float | None) -> RateLimiter:
    with _LIMITERS_LOCK:
        if provider not in _LIMITERS:
            _LIMITERS[provider] = RateLimiter(calls_per_second)
        return _LIMITERS[provider]


class ScriptedLM:
    """Deterministic stand-in for a language model.

    ``reply`` is a fixed string, or a function of the prompt. Pure functions
    of the prompt keep concurrent campaigns reproducible.
    """

    def __init__(self, reply: str | Callable[[str], str]):
        self._reply = reply
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.calls += 1
        if callable(self._reply):
            return self._reply(prompt)
        return self._reply


class SequenceLM:
    """Returns queued replies in order; an ``Exception`` instance in the queue is raised instead."""

    def __init__(self, replies: Iterable[str | BaseException]):
        self._replies = list(replies)
        self._lock = threading.Lock()
        self.prompts: list[str] = []

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.prompts.append(prompt)
            if not self._replies:
                raise BackendError("scripted replies exhausted")
            item = self._replies.pop(0)
        if isinstance(item, BaseException):
            raise item
        return item


@dataclass
class ScriptedDoctor:
    """Doctor whose n-th message (0-based) is ``replies[n]``, else ``default``.

    The turn index comes from the history, so one instance can serve many
    concurrent conversations.
    """

    model_id: str
    replies: dict[int, str] = field(default_factory=dict)
    default: str = "Can you tell me more about how you have been feeling?"
    params: dict = field(default_factory=dict)

    def complete(self, history: Sequence, system_prompt: str) -> str:
        turn = sum(1 for m in history if m.speaker == "doctor")
        text = self.replies.get(turn, self.default)
        return text.replace("{turn}", str(turn + 1))

    @classmethod
    def from_fixture(cls, model_id: str, path: str | Path) -> "ScriptedDoctor":
        """Fixture file: JSON object ``{"replies": {"0": "...", ...}, "default": "..."}``."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        replies = {int(k): v for k, v in data.get("replies", {}).items()}
        kwargs = {"default": data["default"]} if "default" in data else {}
        return cls(model_id, replies, **kwargs)


class ChatCompletionsBackend:
    """OpenAI-compatible ``/chat/completions`` client.

    Serves both as a doctor (``complete(history, system_prompt)``) and, via
    :meth:`as_language_model`, as a single-prompt model for patients, judges
    and classifiers. Auth comes from the environment variable named by
    ``api_key_env``.
    """

    def __init__(
        self,
        model_id: str,
        base_url: str,
        *,
        model: str | None = None,
        api_key_env: str | None = None,
        params: dict | None = None,
        provider: str | None = None,
        calls_per_second: float | None = None,
        timeout: float = 120.0,
        retries: int = DEFAULT_RETRIES,
        transport: httpx.BaseTransport | None = None,
    ):
        self.model_id = model_id
        self.model = model or model_id
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.params = dict(params or {})
        self.retries = retries
        self.limiter = provider_limiter(provider or self.base_url, calls_per_second)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise BackendError(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, messages: list[dict]) -> str:
        self.limiter.acquire()
        payload = {"model": self.model, "messages": messages, **self.params}
        try:
            resp = self._client.post(f"{self.base_url}/chat/completions", json=payload, headers=self._headers())
        except httpx.TransportError as exc:
            raise BackendTransportError(f"{self.model_id}: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise BackendTransportError(f"{self.model_id}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"{self.model_id}: HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"{self.model_id}: malformed response body") from exc
        if not isinstance(content, str):
            raise BackendError(f"{self.model_id}: empty completion")
        return content

    def complete(self, history: Sequence, system_prompt: str) -> str:
        messages = [{"role": "system", "content": system_prompt}]
        for m in history:
            messages.append({"role": "assistant" if m.speaker == "doctor" else "user", "content": m.text})
        return call_with_retry(self._post, messages, retries=self.retries, backoff=1.0)

    def as_language_model(self) -> LanguageModel:
        backend = self

        class _Single:
            def complete(self, prompt: str) -> str:
                # callers wrap this in call_with_retry
                return backend._post([{"role": "user", "content": prompt}])

        return _Single()


def load_doctor_backends(path: str | Path) -> list:
    """Read a models file: a JSON list of backend specs.

    ``{"model_id": ..., "kind": "scripted", "fixture": "doctor.json"}`` or
    ``{"model_id": ..., "kind": "chat", "base_url": ..., "api_key_env": ..., "params": {...}}``.
    Relative fixture paths resolve against the models file.
    """
    path = Path(path)
    specs = json.loads(path.read_text(encoding="utf-8"))
    backends = []
    for spec in specs:
        kind = spec.get("kind", "scripted")
        model_id = spec["model_id"]
        if kind == "scripted":
            if "fixture" in spec:
                backends.append(ScriptedDoctor.from_fixture(model_id, path.parent / spec["fixture"]))
            else:
                replies = {int(k): v for k, v in spec.get("replies", {}).items()}
                extra = {"default": spec["default"]} if "default" in spec else {}
                backends.append(ScriptedDoctor(model_id, replies, **extra))
        elif kind == "chat":
            backends.append(
                ChatCompletionsBackend(
                    model_id,
                    spec["base_url"],
                    model=spec.get("model"),
                    api_key_env=spec.get("api_key_env"),
                    params=spec.get("params"),
                    provider=spec.get("provider"),
                    calls_per_second=spec.get("calls_per_second"),
                )
            )
        else:
            raise ValueError(f"unknown backend kind {kind!r} for {model_id}")
    ids = [b.model_id for b in backends]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate model_id in models file")
    return backends
