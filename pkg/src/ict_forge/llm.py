"""Minimal client for OpenAI-compatible chat-completion endpoints."""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Optional, Sequence

import httpx

logger = logging.getLogger(__name__)

API_KEY_ENV = "ICT_FORGE_API_KEY"
ROLES = ("system", "user", "assistant")


class ChatError(Exception):
    pass


class TransportError(ChatError):
    """Retries exhausted on connection errors, timeouts or 5xx replies."""


class NonRetryableError(ChatError):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:300]}")
        self.status = status


@dataclass
class EndpointConfig:
    base_url: str
    model: str = "default"
    api_key: Optional[str] = field(default=None, repr=False)
    temperature: float = 0.7
    max_tokens: int = 512
    request_timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 8
    backoff_base: float = 1.0

    def __post_init__(self):
        if not self.base_url:
            raise ValueError("base_url must be non-empty")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @property
    def url(self) -> str:
        base = self.base_url.rstrip("/")
        if base.endswith("/v1"):
            base = base[: -len("/v1")]
        return f"{base}/v1/chat/completions"

    def resolved_api_key(self) -> Optional[str]:
        return self.api_key or os.environ.get(API_KEY_ENV) or None

    def to_dict(self) -> dict[str, Any]:
        # the key never leaves the process
        data = asdict(self)
        data.pop("api_key")
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EndpointConfig:
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role != "assistant" and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")


@dataclass(frozen=True)
class RequestStats:
    requests: int = 0
    retries: int = 0
    failures: int = 0


def _as_message(m: ChatMessage | Mapping[str, str]) -> ChatMessage:
    return m if isinstance(m, ChatMessage) else ChatMessage(m["role"], m["content"])


class ChatClient:
    """Thread-safe chat client. At most ``max_in_flight`` requests are outstanding."""

    def __init__(self, cfg: EndpointConfig, http: Optional[httpx.Client] = None, sleep=time.sleep):
        self.cfg = cfg
        self._http = http or httpx.Client(timeout=cfg.request_timeout)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)
        self._lock = threading.Lock()
        self._jitter = random.Random()
        self._requests = self._retries = self._failures = 0

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> ChatClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def chat_count(self) -> RequestStats:
        with self._lock:
            return RequestStats(self._requests, self._retries, self._failures)

    def request_body(self, messages: Sequence[ChatMessage | Mapping[str, str]]) -> dict[str, Any]:
        msgs = [_as_message(m) for m in messages]
        if not msgs or msgs[0].role != "system" or any(m.role == "system" for m in msgs[1:]):
            raise ValueError("messages must start with exactly one system message")
        return {
            "model": self.cfg.model,
            "messages": [{"role": m.role, "content": m.content} for m in msgs],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        }

    def _headers(self) -> dict[str, str]:
        key = self.cfg.resolved_api_key()
        return {"Authorization": f"Bearer {key}"} if key else {}

    def _backoff(self, attempt: int) -> float:
        return self.cfg.backoff_base * (2**attempt) * self._jitter.uniform(0.8, 1.2)

    def _count(self, requests=0, retries=0, failures=0) -> None:
        with self._lock:
            self._requests += requests
            self._retries += retries
            self._failures += failures

    def chat(self, messages: Sequence[ChatMessage | Mapping[str, str]]) -> str:
        body = self.request_body(messages)
        last: Optional[str] = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self._count(retries=1)
                self._sleep(self._backoff(attempt - 1))
            self._count(requests=1)
            try:
                with self._slots:
                    resp = self._http.post(self.cfg.url, json=body, headers=self._headers(), timeout=self.cfg.request_timeout)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                logger.debug("chat attempt %d failed: %s", attempt + 1, last)
                continue
            if resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                self._count(failures=1)
                raise NonRetryableError(resp.status_code, resp.text)
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                last = f"malformed completion body: {resp.text[:200]!r}"
                continue
            return content or ""
        self._count(failures=1)
        raise TransportError(f"chat failed after {self.cfg.max_retries + 1} attempts: {last}")
