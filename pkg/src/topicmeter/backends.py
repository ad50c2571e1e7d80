"""Probability and chat backend contracts plus their HTTP clients.

The masked-probability wire protocol:

    POST {base_url}/v1/masked-logprob
      {"tokens": [str], "targets": [{"target_position": int,
                                     "masked_positions": [int]}]}
      -> {"logprobs": [float]}        (one per target, order-preserving)
    GET {base_url}/health -> {"status": "ok", "fingerprint": str}

All probabilities are natural-log. The chat protocol is the familiar
chat-completions shape:

    POST {base_url}/v1/chat/completions
      {"model": str, "temperature": float,
       "messages": [{"role": str, "content": str}]}
      -> {"choices": [{"message": {"role": "assistant", "content": str}}]}
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import requests

from .errors import BackendUnavailable, InvalidQuery, ProtocolError


@dataclass(frozen=True)
class TargetSpec:
    """One masked-probability request: ``target_position`` must be masked."""

    target_position: int
    masked_positions: frozenset[int]

    def to_dict(self) -> dict:
        return {
            "target_position": self.target_position,
            "masked_positions": sorted(self.masked_positions),
        }


@dataclass(frozen=True)
class MaskedProbabilityQuery:
    tokens: tuple[str, ...]
    target_position: int
    masked_positions: frozenset[int]

    def validate(self) -> None:
        n = len(self.tokens)
        if not self.tokens:
            raise InvalidQuery("query has no tokens")
        if not 0 <= self.target_position < n:
            raise InvalidQuery(f"target_position {self.target_position} out of range 0..{n - 1}")
        for pos in self.masked_positions:
            if not 0 <= pos < n:
                raise InvalidQuery(f"masked position {pos} out of range 0..{n - 1}")
        if self.target_position not in self.masked_positions:
            raise InvalidQuery("target_position must be in masked_positions")

    def target_spec(self) -> TargetSpec:
        return TargetSpec(self.target_position, self.masked_positions)


@runtime_checkable
class LmBackend(Protocol):
    """Anything that can score masked-word probabilities over shared tokens."""

    @property
    def fingerprint(self) -> str: ...

    def score(self, tokens: Sequence[str], targets: Sequence[TargetSpec]) -> list[float]: ...


def masked_logprob(backend: LmBackend, query: MaskedProbabilityQuery) -> float:
    """Validated single-query wrapper over a backend's batch interface.

    Returns ln p(token at target | context with masked positions hidden);
    always finite and <= 0.
    """
    query.validate()
    values = backend.score(query.tokens, [query.target_spec()])
    if len(values) != 1:
        raise ProtocolError(f"backend returned {len(values)} values for 1 target")
    value = float(values[0])
    if not math.isfinite(value) or value > 0.0:
        raise ProtocolError(f"backend returned invalid log probability {value}")
    return value


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_delay: float = 0.25

    def delay(self, attempt: int) -> float:
        return self.base_delay * (2 ** attempt)


class HttpLmBackend:
    """Client for the masked-logprob wire protocol with batching and retry."""

    def __init__(self, base_url: str, timeout: float = 30.0, max_batch: int = 64,
                 retry: RetryPolicy = RetryPolicy(), session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.max_batch = max_batch
        self.retry = retry
        self._session = session or requests.Session()
        self._fingerprint: str | None = None

    def _post(self, path: str, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.retry.max_attempts):
            try:
                resp = self._session.post(self.base_url + path, json=payload,
                                          timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                time.sleep(self.retry.delay(attempt))
                continue
            if resp.status_code >= 500:
                last_error = BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
                time.sleep(self.retry.delay(attempt))
                continue
            if resp.status_code >= 400:
                raise InvalidQuery(f"backend rejected request: {resp.text[:500]}")
            return resp.json()
        raise BackendUnavailable(
            f"backend at {self.base_url} unreachable after "
            f"{self.retry.max_attempts} attempts: {last_error}"
        )

    def health(self) -> dict:
        try:
            resp = self._session.get(self.base_url + "/health", timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except requests.RequestException as exc:
            raise BackendUnavailable(f"health check failed: {exc}") from exc

    @property
    def fingerprint(self) -> str:
        if self._fingerprint is None:
            info = self.health()
            if "fingerprint" not in info:
                raise ProtocolError("health response lacks a fingerprint")
            self._fingerprint = str(info["fingerprint"])
        return self._fingerprint

    def score(self, tokens: Sequence[str], targets: Sequence[TargetSpec]) -> list[float]:
        out: list[float] = []
        targets = list(targets)
        for start in range(0, len(targets), self.max_batch):
            chunk = targets[start:start + self.max_batch]
            payload = {
                "tokens": list(tokens),
                "targets": [t.to_dict() for t in chunk],
            }
            body = self._post("/v1/masked-logprob", payload)
            if "logprobs" not in body or len(body["logprobs"]) != len(chunk):
                raise ProtocolError("response logprobs missing or wrong length")
            out.extend(float(v) for v in body["logprobs"])
        return out


@runtime_checkable
class ChatClient(Protocol):
    def complete(self, prompt: str) -> str: ...


@dataclass
class ChatConfig:
    """Connection and pacing settings for the chat-judge endpoint."""

    base_url: str = "http://localhost:8080"
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_retries: int = 2
    rate_limit_per_minute: float = 60.0
    api_key_env: str = "TOPICMETER_CHAT_API_KEY"
    timeout: float = 60.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def to_dict(self) -> dict:
        # The API key itself is never serialized, only the variable name.
        return {
            "base_url": self.base_url,
            "model": self.model,
            "temperature": self.temperature,
            "max_retries": self.max_retries,
            "rate_limit_per_minute": self.rate_limit_per_minute,
            "api_key_env": self.api_key_env,
            "timeout": self.timeout,
        }


class HttpChatClient:
    """Minimal chat-completions client with request pacing."""

    def __init__(self, config: ChatConfig, session: requests.Session | None = None):
        self.config = config
        self._session = session or requests.Session()
        self._last_request = 0.0

    def _pace(self) -> None:
        if self.config.rate_limit_per_minute <= 0:
            return
        min_interval = 60.0 / self.config.rate_limit_per_minute
        wait = self._last_request + min_interval - time.monotonic()
        if wait > 0:
            time.sleep(wait)

    def complete(self, prompt: str) -> str:
        self._pace()
        headers = {}
        api_key = os.environ.get(self.config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            resp = self._session.post(
                self.config.base_url.rstrip("/") + "/v1/chat/completions",
                json=payload, headers=headers, timeout=self.config.timeout,
            )
            self._last_request = time.monotonic()
            resp.raise_for_status()
            body = resp.json()
            return str(body["choices"][0]["message"]["content"])
        except requests.RequestException as exc:
            raise BackendUnavailable(f"chat endpoint failed: {exc}") from exc
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat response: {exc}") from exc
