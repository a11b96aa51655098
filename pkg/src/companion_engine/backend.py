"""Inference transport: job packaging and the wire clients.

Everything above this module is vendor-agnostic: the engine packages a
context snapshot, a model configuration, and some administrative data into a
Job and hands it to a backend. Two backends ship here: an HTTP client for any
service speaking the OpenAI chat-completions protocol, and a deterministic
scripted backend that doubles as the test oracle.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Callable, Protocol

import httpx

from .config import ModelConfig
from .context import Context

log = logging.getLogger(__name__)

API_KEY_ENV_VAR = "ENGINE_API_KEY"
MAX_ATTEMPTS = 3
BACKOFF_BASE_SECONDS = 0.5


class BackendError(RuntimeError):
    pass


class ConfigRejectedError(BackendError):
    """The service rejected the request (HTTP 4xx); retrying cannot help."""


class BackendUnavailableError(BackendError):
    """Transport kept failing after all retry attempts."""


class ProtocolError(BackendError):
    """The response body did not match the expected wire format."""


class ScriptExhaustedError(BackendError):
    """Strict scripted backend received a prompt with no matching entry."""


@dataclass(frozen=True)
class JobAdminData:
    job_id: str
    chat_id: str
    speaker_name: str
    created_at: datetime
    attempt: int = 0


@dataclass(frozen=True)
class Job:
    """One packaged inference request: context snapshot + model config + admin data."""

    context: Context
    model_config: ModelConfig
    rendered_prompt: str
    admin: JobAdminData
    # role/content turns for chat-style endpoints; the rendered prompt is the
    # single-string equivalent used for matching and completion endpoints.
    turns: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not self.rendered_prompt:
            raise ValueError("job rendered_prompt must be non-empty")


@dataclass(frozen=True)
class InferenceResult:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: float = 0.0
    finish_reason: str = "stop"  # stop | length | error
    attempts: int = 1


class Backend(Protocol):
    def complete(self, job: Job) -> InferenceResult: ...


class OpenAICompatibleBackend:
    """Client for any HTTP service implementing the OpenAI chat-completions API.

    Transient failures (timeouts, connection errors, 5xx) are retried with
    exponential backoff (base 500 ms, doubling, 3 attempts total). 4xx
    responses are configuration problems and never retried. The Job itself is
    never mutated; retries operate on attempt-incremented copies.
    """

    def __init__(
        self,
        base_url: str,
        model_id: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_concurrency: int = 4,
        sleep: Callable[[float], None] = time.sleep,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        key = api_key if api_key is not None else os.getenv(API_KEY_ENV_VAR, "")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = client or httpx.Client(timeout=timeout, headers=headers)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_concurrency)

    def complete(self, job: Job) -> InferenceResult:
        last_error: Exception | None = None
        for attempt in range(1, MAX_ATTEMPTS + 1):
            attempt_job = replace(job, admin=replace(job.admin, attempt=attempt))
            started = time.monotonic()
            try:
                with self._slots:
                    response = self._client.post(
                        f"{self.base_url}/chat/completions",
                        json=self._payload(attempt_job),
                    )
            except httpx.HTTPError as exc:
                last_error = exc
                log.warning("backend transport error (attempt %d/%d): %s", attempt, MAX_ATTEMPTS, exc)
                self._backoff(attempt)
                continue

            if 400 <= response.status_code < 500:
                raise ConfigRejectedError(
                    f"backend rejected request with HTTP {response.status_code}: {response.text[:200]}"
                )
            if response.status_code >= 500:
                last_error = BackendError(f"HTTP {response.status_code}")
                self._backoff(attempt)
                continue

            latency_ms = (time.monotonic() - started) * 1000
            return self._parse(response, job.model_config, latency_ms, attempt)

        raise BackendUnavailableError(
            f"backend unreachable after {MAX_ATTEMPTS} attempts: {last_error}"
        )

    def _backoff(self, attempt: int) -> None:
        if attempt < MAX_ATTEMPTS:
            self._sleep(BACKOFF_BASE_SECONDS * (2 ** (attempt - 1)))

    def _payload(self, job: Job) -> dict:
        if job.turns:
            messages = [{"role": role, "content": content} for role, content in job.turns]
        else:
            messages = [{"role": "user", "content": job.rendered_prompt}]
        payload = {
            "model": self.model_id or job.model_config.model_id,
            "messages": messages,
            "temperature": job.model_config.temperature,
            "max_tokens": job.model_config.max_tokens,
        }
        if job.model_config.stop_sequences:
            payload["stop"] = list(job.model_config.stop_sequences)
        return payload

    @staticmethod
    def _parse(response: httpx.Response, model: ModelConfig, latency_ms: float, attempts: int) -> InferenceResult:
        try:
            body = response.json()
            choice = body["choices"][0]
            text = choice["message"]["content"]
            finish = choice.get("finish_reason") or "stop"
            usage = body.get("usage", {})
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed completion response: {exc}") from exc
        completion_tokens = int(usage.get("completion_tokens", 0))
        if finish == "length":
            completion_tokens = model.max_tokens
        return InferenceResult(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=completion_tokens,
            latency_ms=latency_ms,
            finish_reason=finish,
            attempts=attempts,
        )


@dataclass
class ScriptEntry:
    """Matcher + canned reply. Substring match by default, regex when flagged."""

    match: str
    reply: str
    regex: bool = False
    repeat: bool = False  # reusable entries are not consumed

    def matches(self, prompt: str) -> bool:
        if self.regex:
            return re.search(self.match, prompt) is not None
        return self.match in prompt

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptEntry":
        return cls(
            match=data["match"],
            reply=data["reply"],
            regex=bool(data.get("regex", False)),
            repeat=bool(data.get("repeat", False)),
        )


@dataclass
class ScriptedBackend:
    """Deterministic test backend: first matching script entry answers the prompt.

    One-shot entries are consumed in order; unmatched prompts fall back to the
    default reply, or raise ScriptExhaustedError in strict mode. Every job is
    recorded so tests can assert on exactly the prompts the engine issued.
    """

    script: list[ScriptEntry] = field(default_factory=list)
    default_reply: str | None = None
    strict: bool = False
    jobs: list[Job] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._lock = threading.Lock()

    @property
    def prompts(self) -> list[str]:
        return [job.rendered_prompt for job in self.jobs]

    def complete(self, job: Job) -> InferenceResult:
        with self._lock:
            self.jobs.append(job)
            for i, entry in enumerate(self.script):
                if entry.matches(job.rendered_prompt):
                    if not entry.repeat:
                        del self.script[i]
                    return InferenceResult(text=entry.reply)
            if self.default_reply is not None:
                return InferenceResult(text=self.default_reply)
            if self.strict:
                raise ScriptExhaustedError(
                    f"no script entry matches prompt: {job.rendered_prompt[:120]!r}"
                )
            return InferenceResult(text="")

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptedBackend":
        return cls(
            script=[ScriptEntry.from_dict(item) for item in data.get("script", [])],
            default_reply=data.get("default"),
            strict=bool(data.get("strict", False)),
        )


class FailingBackend:
    """Always raises; stands in for an unreachable service in tests."""

    def complete(self, job: Job) -> InferenceResult:
        raise BackendUnavailableError("backend configured to fail")
