"""Completion service abstraction: mock, recorded-fixture, and live backends.

Recorded fixtures are keyed by (tag, digest-of-messages) so any prompt the
pipeline builds deterministically can be replayed without network access.
Request/reply pairs can be captured from a live (or scripted) session into a
fixture directory for later replay.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

DEFAULT_TEMPERATURE = 0.4

ENV_ENDPOINT = "DIFFLENS_LLM_ENDPOINT"
ENV_TOKEN = "DIFFLENS_LLM_TOKEN"
ENV_MODEL = "DIFFLENS_LLM_MODEL"


class Tag(enum.Enum):
    SYNTHESIZE = "synthesize"
    REFINE = "refine"
    VALIDATE_INPUT = "validate-input"
    SELF_DEBUG = "self-debug"
    INFER_CONSTRAINT = "infer-constraint"
    SELF_VALIDATE = "self-validate"


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[tuple[str, str], ...]  # (role, text)
    tag: Tag
    temperature: float = DEFAULT_TEMPERATURE

    def digest(self) -> str:
        h = hashlib.sha256()
        for role, text in self.messages:
            h.update(role.encode("utf-8"))
            h.update(b"\x00")
            h.update(text.encode("utf-8"))
            h.update(b"\x01")
        return h.hexdigest()


class GatewayError(RuntimeError):
    """Retriable completion failure (transport error or missing fixture)."""


class FixtureMissing(GatewayError):
    pass


class Backend:
    def complete(self, request: CompletionRequest) -> str:
        raise NotImplementedError


class MockBackend(Backend):
    """In-memory reply table; also accepts a callable for scripted oracles."""

    def __init__(self, table: dict[tuple[Tag, str], str] | None = None, script=None):
        self.table = dict(table or {})
        self.script = script
        self.requests: list[CompletionRequest] = []

    def add(self, request: CompletionRequest, reply: str):
        self.table[(request.tag, request.digest())] = reply

    def complete(self, request: CompletionRequest) -> str:
        self.requests.append(request)
        key = (request.tag, request.digest())
        if key in self.table:
            return self.table[key]
        if self.script is not None:
            reply = self.script(request)
            if reply is not None:
                return reply
        raise FixtureMissing(f"no reply for tag={request.tag.value} digest={key[1][:12]}")


class FailingBackend(Backend):
    """Always fails; used to exercise inference-disabled degradation."""

    def complete(self, request: CompletionRequest) -> str:
        raise GatewayError("backend unavailable")


class RecordedBackend(Backend):
    """Replies from a fixture directory: fixtures/<tag>/<digest>.txt."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def complete(self, request: CompletionRequest) -> str:
        path = self.directory / request.tag.value / f"{request.digest()}.txt"
        if not path.is_file():
            raise FixtureMissing(
                f"missing fixture {path.relative_to(self.directory)}"
            )
        return path.read_text()


class LiveBackend(Backend):
    """Single-round-trip chat completion over HTTP.

    Wire shape: POST {model, messages: [{role, content}], temperature} to the
    endpoint; the reply text is choices[0].message.content.
    """

    def __init__(self, endpoint: str, token: str = "", model: str = "", timeout: float = 60.0):
        self.endpoint = endpoint
        self.token = token
        self.model = model
        self.timeout = timeout

    def complete(self, request: CompletionRequest) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        payload = {
            "model": self.model,
            "messages": [{"role": r, "content": t} for r, t in request.messages],
            "temperature": request.temperature,
        }
        try:
            resp = requests.post(
                self.endpoint, json=payload, headers=headers, timeout=self.timeout
            )
            resp.raise_for_status()
            doc = resp.json()
            return doc["choices"][0]["message"]["content"]
        except Exception as exc:
            raise GatewayError(f"completion request failed: {exc}") from exc

    @classmethod
    def from_env(cls) -> "LiveBackend":
        endpoint = os.environ.get(ENV_ENDPOINT, "")
        if not endpoint:
            raise GatewayError(f"{ENV_ENDPOINT} is not set")
        return cls(
            endpoint,
            token=os.environ.get(ENV_TOKEN, ""),
            model=os.environ.get(ENV_MODEL, ""),
        )


@dataclass
class Gateway:
    """Backend plus optional capture: append-only request log and fixture dump."""

    backend: Backend
    capture_dir: Path | None = None
    log_path: Path | None = None

    def complete(self, request: CompletionRequest) -> str:
        reply = self.backend.complete(request)
        if self.capture_dir is not None:
            out = Path(self.capture_dir) / request.tag.value
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{request.digest()}.txt").write_text(reply)
        if self.log_path is not None:
            record = {
                "tag": request.tag.value,
                "digest": request.digest(),
                "messages": [list(m) for m in request.messages],
                "reply": reply,
            }
            with open(self.log_path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return reply


def backend_from_config(kind: str, fixtures_dir: str | Path | None = None) -> Backend:
    if kind == "recorded":
        if not fixtures_dir:
            raise ValueError("recorded backend requires a fixtures directory")
        return RecordedBackend(fixtures_dir)
    if kind == "mock":
        return MockBackend()
    if kind == "live":
        return LiveBackend.from_env()
    if kind == "failing":
        return FailingBackend()
    raise ValueError(f"unknown gateway backend {kind!r}")
