"""Pluggable chat-completion backends.

An OpenAI-compatible HTTP client (POST {base_url}/chat/completions) and a
deterministic mock for tests and offline exhibits. Answers are bounded:
anything longer than max_answer_chars is cut at the last sentence boundary
(falling back to the last whitespace) because every character costs printing
time on the machine.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, replace
from typing import Optional

import httpx

from .session import ChatTurn, Role

DEFAULT_API_KEY_ENV = "ERIKA_API_KEY"

DEFAULT_SYSTEM_PROMPT = (
    "Du bist Erika, eine KI in einer alten Schreibmaschine. "
    "Antworte höflich, knapp und in höchstens 400 Zeichen. "
    "Bleibe freundlich, auch bei provokanten Fragen."
)


class BackendError(Exception):
    """LLM request failure; ``kind`` distinguishes the failure classes."""

    KINDS = ("network", "timeout", "http-status", "malformed-response", "missing-api-key")

    def __init__(self, kind: str, message: str, status: int | None = None) -> None:
        self.kind = kind
        self.status = status
        super().__init__(message)


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"  # "mock" | "openai-compatible"
    base_url: str = ""
    model: str = "mock"
    api_key_env: str = DEFAULT_API_KEY_ENV
    temperature: float = 0.7
    max_answer_chars: int = 600
    system_prompt: str = DEFAULT_SYSTEM_PROMPT
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "openai-compatible"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.max_answer_chars < 1:
            raise ValueError("max_answer_chars must be at least 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.kind == "openai-compatible" and (not self.base_url or not self.model):
            raise ValueError("openai-compatible backend needs base_url and model")


@dataclass
class Completion:
    text: str
    model: str
    latency_ms: int = 0
    finish: str = "complete"  # complete | truncated | refused


def clip_answer(text: str, max_chars: int) -> tuple[str, bool]:
    """Bound an answer to max_chars, preferring sentence ends, then spaces."""
    if len(text) <= max_chars:
        return text, False
    prefix = text[:max_chars]
    best = max(prefix.rfind(mark) for mark in (".", "!", "?"))
    if best > 0:
        return prefix[: best + 1].rstrip(), True
    cut = max(prefix.rfind(" "), prefix.rfind("\n"))
    if cut > 0:
        return prefix[:cut].rstrip(), True
    return prefix, True


def build_request(cfg: BackendConfig, history: list[ChatTurn]) -> dict:
    """Chat-completions request body: model, temperature, ordered messages."""
    return {
        "model": cfg.model,
        "temperature": cfg.temperature,
        "messages": [
            {"role": turn.role.value, "content": turn.text} for turn in history
        ],
    }


def parse_response(document: dict) -> Completion:
    """Extract the first choice from a chat-completions response document."""
    try:
        choices = document["choices"]
    except (TypeError, KeyError):
        raise BackendError("malformed-response", "response has no choices") from None
    if not isinstance(choices, list) or not choices:
        raise BackendError("malformed-response", "response has zero choices")
    first = choices[0]
    message = first.get("message") if isinstance(first, dict) else None
    if not isinstance(message, dict):
        raise BackendError("malformed-response", "first choice has no message")
    refusal = message.get("refusal")
    if refusal:
        return Completion(text=str(refusal), model=str(document.get("model", "")), finish="refused")
    content = message.get("content")
    if not isinstance(content, str):
        raise BackendError("malformed-response", "message content missing or not text")
    return Completion(text=content, model=str(document.get("model", "")))


class MockBackend:
    """Deterministic backend: scripted answers, echo fallback.

    ``script`` maps exact prompts to answers; ``fail`` makes every call raise
    the given error kind (for fault-injection tests).
    """

    def __init__(
        self,
        cfg: BackendConfig | None = None,
        script: Optional[dict[str, str]] = None,
        fail: str | None = None,
    ) -> None:
        self.cfg = cfg or BackendConfig(kind="mock")
        self.script = dict(script or {})
        self.fail = fail
        self.calls = 0

    def complete(self, history: list[ChatTurn]) -> Completion:
        _require_dispatchable(history)
        self.calls += 1
        if self.fail:
            raise BackendError(self.fail, f"mock failure ({self.fail})")
        prompt = history[-1].text
        answer = self.script.get(prompt, prompt)  # echo when unscripted
        text, truncated = clip_answer(answer, self.cfg.max_answer_chars)
        return Completion(
            text=text,
            model=self.cfg.model or "mock",
            latency_ms=0,
            finish="truncated" if truncated else "complete",
        )


class HttpBackend:
    """OpenAI-compatible chat-completions client (non-streaming)."""

    def __init__(self, cfg: BackendConfig) -> None:
        if cfg.kind != "openai-compatible":
            raise ValueError("HttpBackend needs an openai-compatible config")
        self.cfg = cfg

    def _auth_headers(self) -> dict[str, str]:
        if not self.cfg.api_key_env:
            return {}  # explicitly keyless (local server)
        key = os.environ.get(self.cfg.api_key_env)
        if not key:
            raise BackendError(
                "missing-api-key",
                f"environment variable {self.cfg.api_key_env} is not set",
            )
        return {"Authorization": f"Bearer {key}"}

    def complete(self, history: list[ChatTurn]) -> Completion:
        _require_dispatchable(history)
        cfg = self.cfg
        headers = self._auth_headers()
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        body = build_request(cfg, history)
        started = time.monotonic()
        try:
            response = httpx.post(url, json=body, headers=headers, timeout=cfg.timeout)
        except httpx.TimeoutException:
            raise BackendError("timeout", f"no answer within {cfg.timeout:.0f}s") from None
        except httpx.HTTPError as exc:
            raise BackendError("network", _scrub(str(exc), headers)) from None
        latency_ms = int((time.monotonic() - started) * 1000)
        if response.status_code < 200 or response.status_code >= 300:
            excerpt = _scrub(response.text[:200], headers)
            raise BackendError(
                "http-status",
                f"HTTP {response.status_code}: {excerpt}",
                status=response.status_code,
            )
        try:
            document = response.json()
        except (json.JSONDecodeError, ValueError):
            raise BackendError("malformed-response", "response body is not JSON") from None
        completion = parse_response(document)
        text, truncated = clip_answer(completion.text, cfg.max_answer_chars)
        finish = completion.finish
        if truncated and finish == "complete":
            finish = "truncated"
        return replace(
            completion,
            text=text,
            latency_ms=latency_ms,
            finish=finish,
            model=completion.model or cfg.model,
        )


def _require_dispatchable(history: list[ChatTurn]) -> None:
    if not history or history[-1].role is not Role.USER:
        raise ValueError("history must end with a user turn")


def _scrub(message: str, headers: dict[str, str]) -> str:
    """Keep credentials out of error text no matter what the server echoed."""
    for value in headers.values():
        token = value.removeprefix("Bearer ").strip()
        if token:
            message = message.replace(token, "***")
    return message


def make_backend(
    cfg: BackendConfig,
    script: Optional[dict[str, str]] = None,
):
    if cfg.kind == "mock":
        return MockBackend(cfg, script=script)
    return HttpBackend(cfg)


def complete(cfg: BackendConfig, history: list[ChatTurn]) -> Completion:
    """One-shot completion against whichever backend the config names."""
    return make_backend(cfg).complete(history)
