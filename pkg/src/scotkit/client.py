"""Chat-completion client that runs the packaged spatial-planning system
prompt against any OpenAI-compatible endpoint and returns a validated
PlannerOutput.

The system prompt ships as a package resource and is integrity-checked
against a pinned digest so silent edits cannot drift the planner
contract. Invalid model output triggers a bounded retry loop that feeds
the validator's error message back to the model.
"""

from __future__ import annotations

import hashlib
import os
import threading
from dataclasses import dataclass
from importlib import resources

import requests

from .planner import PlannerOutput, PlannerOutputError, parse_planner_output

SYSTEM_PROMPT_RESOURCE = "planner_system_prompt.txt"
SYSTEM_PROMPT_SHA256 = "ca2418d0873776d3e0c596c589ebc9a85b33c558a24f48662aa7583fc4710ec6"

_PROMPT_OPENING = "You are a Layout-to-Image Generation Spatial Planning Expert."
_PROMPT_CLOSING = "Below is the input text:"


class ClientError(Exception):
    pass


class EmptyPrompt(ClientError):
    pass


class MissingApiKey(ClientError):
    def __init__(self, env_var: str):
        super().__init__(f"environment variable {env_var} is not set")
        self.env_var = env_var


class TransportError(ClientError):
    def __init__(self, detail: str, status: int | None = None):
        super().__init__(f"transport failure ({status}): {detail}" if status else detail)
        self.status = status
        self.detail = detail


class InvalidAfterRetries(ClientError):
    def __init__(self, last_error: Exception, attempts: int):
        super().__init__(
            f"planner output still invalid after {attempts} attempts: {last_error}"
        )
        self.last_error = last_error
        self.attempts = attempts


@dataclass(frozen=True)
class ClientConfig:
    base_url: str
    model_name: str
    api_key_env_var: str = "SCOT_API_KEY"
    temperature: float = 0.2
    timeout: float = 120.0
    max_retries: int = 2
    max_in_flight: int = 4

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")


def load_system_prompt(verify: bool = True) -> str:
    text = (
        resources.files("scotkit.resources")
        .joinpath(SYSTEM_PROMPT_RESOURCE)
        .read_text(encoding="utf-8")
    )
    if verify:
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        if digest != SYSTEM_PROMPT_SHA256:
            raise ClientError(
                f"system prompt resource drifted: sha256 {digest} != pinned"
            )
    return text


def build_request(user_prompt: str) -> list[dict[str, str]]:
    """Two chat messages: the packaged system prompt (which closes with
    the input-text marker line) and the raw user prompt."""
    if not user_prompt:
        raise EmptyPrompt("user prompt must be non-empty")
    system = load_system_prompt()
    assert system.startswith(_PROMPT_OPENING)
    assert system.rstrip().endswith(_PROMPT_CLOSING)
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": user_prompt},
    ]


class _InFlightGate:
    """Process-wide cap on concurrent requests: a call proceeds only
    while fewer than its configured limit are active."""

    def __init__(self):
        self._cond = threading.Condition()
        self._active = 0

    def acquire(self, limit: int) -> None:
        with self._cond:
            while self._active >= limit:
                self._cond.wait()
            self._active += 1

    def release(self) -> None:
        with self._cond:
            self._active -= 1
            self._cond.notify_all()


_GATE = _InFlightGate()


def _post_chat(config: ClientConfig, api_key: str, messages: list[dict[str, str]]) -> str:
    url = config.base_url.rstrip("/") + "/chat/completions"
    body = {
        "model": config.model_name,
        "messages": messages,
        "temperature": config.temperature,
    }
    headers = {"Authorization": f"Bearer {api_key}"}
    _GATE.acquire(config.max_in_flight)
    try:
        response = requests.post(url, json=body, headers=headers, timeout=config.timeout)
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    finally:
        _GATE.release()
    if response.status_code != 200:
        raise TransportError(response.text[:500], status=response.status_code)
    try:
        return response.json()["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise TransportError(f"malformed completion payload: {exc}") from exc


def request_plan(config: ClientConfig, user_prompt: str) -> PlannerOutput:
    """Run the planner prompt against the configured endpoint.

    On schema-validation failure the error is appended as a user turn
    and the request retried, up to max_retries extra attempts.
    """
    api_key = os.environ.get(config.api_key_env_var)
    if not api_key:
        raise MissingApiKey(config.api_key_env_var)
    messages = build_request(user_prompt)
    last_error: PlannerOutputError | None = None
    for _ in range(config.max_retries + 1):
        raw = _post_chat(config, api_key, messages)
        try:
            return parse_planner_output(raw)
        except PlannerOutputError as exc:
            last_error = exc
            messages = messages + [
                {"role": "assistant", "content": raw},
                {
                    "role": "user",
                    "content": (
                        f"Your previous output was invalid: {exc}; "
                        "re-emit the JSON only"
                    ),
                },
            ]
    assert last_error is not None
    raise InvalidAfterRetries(last_error, config.max_retries + 1)
