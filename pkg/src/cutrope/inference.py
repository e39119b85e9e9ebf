"""Text-completion clients used by digest rendering and graph extraction.

Anything callable as ``client(prompt, temperature=..., timeout=...) -> str``
works. Failures are signalled by raising ``InferenceError`` (or any other
exception); an empty string also counts as a failure for callers.
"""
from __future__ import annotations

import json
import os
import urllib.error
import urllib.request
from typing import Protocol

ENV_URL = "CUTROPE_INFERENCE_URL"
ENV_KEY = "CUTROPE_INFERENCE_KEY"
ENV_MODEL = "CUTROPE_INFERENCE_MODEL"


class InferenceError(RuntimeError):
    pass


class TextCompletion(Protocol):
    def __call__(self, prompt: str, *, temperature: float = 0.3,
                 timeout: float = 50.0) -> str: ...


class HTTPCompletion:
    """OpenAI-style ``/chat/completions`` client built on urllib."""

    def __init__(self, url: str, api_key: str | None = None, model: str = "default"):
        self.url = url
        self.api_key = api_key
        self.model = model

    @classmethod
    def from_env(cls) -> "HTTPCompletion | None":
        url = os.environ.get(ENV_URL)
        if not url:
            return None
        return cls(url, os.environ.get(ENV_KEY), os.environ.get(ENV_MODEL, "default"))

    def __repr__(self):
        # never leak the key into logs or run records
        return f"HTTPCompletion(url={self.url!r}, model={self.model!r})"

    def __call__(self, prompt: str, *, temperature: float = 0.3, timeout: float = 50.0) -> str:
        body = json.dumps({"model": self.model, "temperature": temperature,
                           "messages": [{"role": "user", "content": prompt}]}).encode()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, OSError, json.JSONDecodeError) as exc:
            raise InferenceError(f"completion request failed: {exc}") from exc
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise InferenceError("unexpected completion payload") from exc


class StaticCompletion:
    """Returns canned responses in order, repeating the last one."""

    def __init__(self, *responses: str):
        if not responses:
            raise ValueError("need at least one response")
        self.responses = list(responses)
        self.calls: list[str] = []

    def __call__(self, prompt: str, *, temperature: float = 0.3, timeout: float = 50.0) -> str:
        self.calls.append(prompt)
        return self.responses[min(len(self.calls) - 1, len(self.responses) - 1)]


class EchoCompletion:
    def __init__(self, prefix: str = ""):
        self.prefix = prefix
        self.calls = 0

    def __call__(self, prompt: str, *, temperature: float = 0.3, timeout: float = 50.0) -> str:
        self.calls += 1
        return self.prefix + prompt


class FailingCompletion:
    def __init__(self, exc: Exception | None = None):
        self.exc = exc or InferenceError("inference unavailable")
        self.calls = 0

    def __call__(self, prompt: str, *, temperature: float = 0.3, timeout: float = 50.0) -> str:
        self.calls += 1
        raise self.exc
