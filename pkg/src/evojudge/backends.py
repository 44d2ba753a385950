"""Uniform model-call abstraction.

Every model interaction (routing, judging, tool queries, analysis) goes
through ``Backend.complete``. Three implementations: a remote HTTP
backend speaking a chat-completion-style JSON body, a scripted backend
replaying recorded transcripts keyed by request digest, and (in the
synthetic module) a deterministic oracle for desk-scale evolution runs.
No backend exposes any parameter-update entry point: the judged model is
structurally frozen.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import yaml


class BackendError(RuntimeError):
    """Model call failed."""


class TransportError(BackendError):
    """Remote transport failure after all retries; carries attempt count."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class UnscriptedRequestError(BackendError):
    """Scripted backend has no recorded response for this request digest."""


class StructuredOutputError(BackendError):
    """Model output failed schema validation; carries the raw text."""

    def __init__(self, message: str, raw_text: str):
        super().__init__(message)
        self.raw_text = raw_text


@dataclass(frozen=True)
class Part:
    """One content part of a message: text, or an image by bytes/reference."""

    kind: str  # "text" | "image"
    text: str = ""
    media_type: str = ""
    data: Optional[bytes] = None
    ref: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("text", "image"):
            raise ValueError(f"unknown part kind {self.kind!r}")
        if self.kind == "image" and self.data is None and not self.ref:
            raise ValueError("image part needs bytes or a resolvable reference")

    @staticmethod
    def of_text(text: str) -> "Part":
        return Part(kind="text", text=text)

    @staticmethod
    def of_image(data: bytes, media_type: str = "application/octet-stream") -> "Part":
        return Part(kind="image", data=data, media_type=media_type)


@dataclass(frozen=True)
class Message:
    role: str  # "system" | "user" | "assistant"
    parts: tuple[Part, ...]

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown message role {self.role!r}")


@dataclass(frozen=True)
class Decode:
    temperature: float = 0.0
    max_tokens: int = 2048
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class ModelRequest:
    role_hint: str  # "orchestrator" | "subagent" | "tool_query"
    messages: tuple[Message, ...]
    response_schema: Optional[dict[str, str]] = None
    decode: Decode = Decode()

    def __post_init__(self) -> None:
        if self.role_hint not in ("orchestrator", "subagent", "tool_query"):
            raise ValueError(f"unknown role hint {self.role_hint!r}")
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("request must contain at least one user message")

    def text_content(self) -> str:
        """All text parts concatenated, in order."""
        return "\n".join(
            p.text for m in self.messages for p in m.parts if p.kind == "text"
        )


@dataclass(frozen=True)
class ModelResponse:
    text: str
    structured: Optional[object] = None
    usage: dict[str, int] = field(default_factory=lambda: {"input_tokens": 0, "output_tokens": 0})
    backend_id: str = ""


def canonical_request(request: ModelRequest) -> dict:
    """Canonical JSON-serializable form of a request; key order never matters."""
    return {
        "role_hint": request.role_hint,
        "messages": [
            {
                "role": m.role,
                "parts": [
                    {
                        "kind": p.kind,
                        "text": p.text,
                        "media_type": p.media_type,
                        "data": base64.b64encode(p.data).decode("ascii") if p.data else "",
                        "ref": p.ref,
                    }
                    for p in m.parts
                ],
            }
            for m in request.messages
        ],
        "response_schema": dict(sorted(request.response_schema.items())) if request.response_schema else None,
        "decode": {
            "temperature": request.decode.temperature,
            "max_tokens": request.decode.max_tokens,
            "seed": request.decode.seed,
        },
    }


def canonical_json(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def request_digest(request: ModelRequest) -> str:
    return hashlib.sha256(canonical_json(canonical_request(request)).encode("utf-8")).hexdigest()


def validate_structured(value: object, schema: dict[str, str], raw_text: str) -> object:
    """Check a parsed object against a field-name -> semantic-type schema."""
    if not isinstance(value, dict):
        raise StructuredOutputError("structured output is not an object", raw_text)
    checks = {
        "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
        "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
        "str": lambda v: isinstance(v, str),
        "text": lambda v: isinstance(v, str),
        "bool": lambda v: isinstance(v, bool),
        "list": lambda v: isinstance(v, list),
        "list[int]": lambda v: isinstance(v, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in v),
        "list[str]": lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v),
        "list[object]": lambda v: isinstance(v, list),
        "object": lambda v: isinstance(v, dict),
    }
    for name, semantic_type in schema.items():
        if name not in value:
            raise StructuredOutputError(f"structured output missing field {name!r}", raw_text)
        check = checks.get(semantic_type)
        if check is not None and not check(value[name]):
            raise StructuredOutputError(
                f"structured field {name!r} is not of type {semantic_type}", raw_text
            )
    return value


def parse_structured_text(text: str, schema: dict[str, str]) -> object:
    """Extract and validate a JSON object from model text output."""
    candidate = text.strip()
    if "```" in candidate:
        # Take the first fenced block if the model wrapped its JSON.
        chunks = candidate.split("```")
        for chunk in chunks[1::2]:
            chunk = chunk.strip()
            if chunk.startswith("json"):
                chunk = chunk[4:].strip()
            if chunk.startswith("{"):
                candidate = chunk
                break
    start, end = candidate.find("{"), candidate.rfind("}")
    if start == -1 or end <= start:
        raise StructuredOutputError("no JSON object found in model output", text)
    try:
        value = json.loads(candidate[start:end + 1])
    except json.JSONDecodeError as exc:
        raise StructuredOutputError(f"invalid JSON in model output: {exc}", text) from exc
    return validate_structured(value, schema, text)


PAYLOAD_START = "<payload>"
PAYLOAD_END = "</payload>"


def payload_block(obj: object) -> str:
    """Render the machine-readable payload block embedded in prompts.

    Prompts carry human-readable instructions plus one canonical JSON block
    so that deterministic backends (and strict remote models) can consume
    the request content unambiguously.
    """
    return f"{PAYLOAD_START}\n{canonical_json(obj)}\n{PAYLOAD_END}"


def extract_payload(request: ModelRequest) -> dict:
    """Parse the payload block out of a request's text content."""
    text = request.text_content()
    start = text.find(PAYLOAD_START)
    end = text.find(PAYLOAD_END)
    if start == -1 or end == -1 or end < start:
        raise BackendError("request carries no payload block")
    return json.loads(text[start + len(PAYLOAD_START):end])


class Backend:
    """Base class: bounded concurrent completion with an in-flight cap."""

    backend_id = "backend"
    multimodal = True

    def __init__(self, max_in_flight: int = 8):
        self._slots = threading.Semaphore(max_in_flight)

    def complete(self, request: ModelRequest) -> ModelResponse:
        with self._slots:
            return self._complete(request)

    def _complete(self, request: ModelRequest) -> ModelResponse:
        raise NotImplementedError


class ScriptedBackend(Backend):
    """Replays responses recorded in a transcript, keyed by request digest."""

    backend_id = "scripted"

    def __init__(self, transcript_path: Optional[Path] = None,
                 entries: Optional[dict[str, dict]] = None, max_in_flight: int = 8):
        super().__init__(max_in_flight)
        self._responses: dict[str, dict] = dict(entries or {})
        if transcript_path is not None:
            for line in Path(transcript_path).read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                obj = json.loads(line)
                self._responses[obj["digest"]] = obj["response"]

    def add(self, request: ModelRequest, response: ModelResponse) -> None:
        self._responses[request_digest(request)] = {
            "text": response.text,
            "structured": response.structured,
            "usage": response.usage,
        }

    def _complete(self, request: ModelRequest) -> ModelResponse:
        digest = request_digest(request)
        recorded = self._responses.get(digest)
        if recorded is None:
            raise UnscriptedRequestError(f"unscripted request (digest {digest[:16]}...)")
        structured = recorded.get("structured")
        if request.response_schema is not None:
            if structured is None:
                structured = parse_structured_text(recorded["text"], request.response_schema)
            else:
                validate_structured(structured, request.response_schema, recorded["text"])
        return ModelResponse(
            text=recorded["text"],
            structured=structured,
            usage=dict(recorded.get("usage", {"input_tokens": 0, "output_tokens": 0})),
            backend_id=self.backend_id,
        )


class RecordingBackend(Backend):
    """Wraps another backend and appends (digest, request, response) pairs.

    Replaying the recorded transcript with ScriptedBackend reproduces every
    response of the session.
    """

    backend_id = "recording"

    def __init__(self, inner: Backend, transcript_path: Path):
        super().__init__(max_in_flight=1)  # single recorder, append-only
        self._inner = inner
        self._path = Path(transcript_path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._file = self._path.open("a", encoding="utf-8")

    def _complete(self, request: ModelRequest) -> ModelResponse:
        response = self._inner.complete(request)
        record = {
            "digest": request_digest(request),
            "request": canonical_request(request),
            "response": {
                "text": response.text,
                "structured": response.structured,
                "usage": response.usage,
            },
        }
        try:
            self._file.write(canonical_json(record) + "\n")
            self._file.flush()
        except OSError as exc:
            try:
                self._file.write('{"partial": true}\n')
                self._file.flush()
            except OSError:
                pass
            raise BackendError(f"transcript write failure, session aborted: {exc}") from exc
        return response

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> "RecordingBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class RemoteBackend(Backend):
    """HTTP chat-completion backend with bounded retries on transient failures.

    Retries cover transport errors and 5xx responses only; schema failures
    are surfaced immediately.
    """

    backend_id = "remote"

    def __init__(self, endpoint: str, model: str, api_key: str = "",
                 max_attempts: int = 3, timeout: float = 60.0, max_in_flight: int = 8,
                 backoff_base: float = 0.5):
        super().__init__(max_in_flight)
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.max_attempts = max_attempts
        self.timeout = timeout
        self.backoff_base = backoff_base

    def _wire_body(self, request: ModelRequest) -> dict:
        messages = []
        for m in request.messages:
            content = []
            for p in m.parts:
                if p.kind == "text":
                    content.append({"type": "text", "text": p.text})
                else:
                    if p.data is not None:
                        url = f"data:{p.media_type};base64," + base64.b64encode(p.data).decode("ascii")
                    else:
                        url = p.ref
                    content.append({"type": "image_url", "image_url": {"url": url}})
            messages.append({"role": m.role, "content": content})
        body = {
            "model": self.model,
            "messages": messages,
            "temperature": request.decode.temperature,
            "max_tokens": request.decode.max_tokens,
        }
        if request.decode.seed is not None:
            body["seed"] = request.decode.seed
        if request.response_schema is not None:
            body["response_format"] = {"type": "json_object"}
        return body

    def _complete(self, request: ModelRequest) -> ModelResponse:
        import httpx

        body = self._wire_body(request)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Optional[str] = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = httpx.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
            except httpx.HTTPError as exc:
                last_error = str(exc)
            else:
                if resp.status_code < 500:
                    if resp.status_code >= 400:
                        raise BackendError(f"remote backend returned {resp.status_code}: {resp.text[:500]}")
                    payload = resp.json()
                    text = payload["choices"][0]["message"]["content"]
                    if isinstance(text, list):
                        text = "".join(part.get("text", "") for part in text)
                    usage = payload.get("usage", {})
                    structured = None
                    if request.response_schema is not None:
                        structured = parse_structured_text(text, request.response_schema)
                    return ModelResponse(
                        text=text,
                        structured=structured,
                        usage={
                            "input_tokens": usage.get("prompt_tokens", 0),
                            "output_tokens": usage.get("completion_tokens", 0),
                        },
                        backend_id=self.backend_id,
                    )
                last_error = f"server returned {resp.status_code}"
            if attempt < self.max_attempts:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
        raise TransportError(
            f"remote backend failed after {self.max_attempts} attempts: {last_error}",
            attempts=self.max_attempts,
        )


@dataclass
class BackendConfig:
    """Configuration for exactly one backend kind."""

    kind: str  # "remote" | "scripted" | "synthetic_oracle"
    endpoint: str = ""
    model: str = ""
    api_key: str = ""
    transcript_path: str = ""
    oracle_seed: int = 0
    oracle_weights: Optional[dict[str, float]] = None
    max_in_flight: int = 8

    def __post_init__(self) -> None:
        if self.kind not in ("remote", "scripted", "synthetic_oracle"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote backend requires an endpoint")
        if self.kind == "scripted" and not self.transcript_path:
            raise ValueError("scripted backend requires a transcript path")

    @classmethod
    def from_file(cls, path: Path) -> "BackendConfig":
        """Load from a YAML mapping, with environment-variable overrides."""
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "BackendConfig":
        env = os.environ
        return cls(
            kind=env.get("EVOJUDGE_BACKEND", data.get("kind", "synthetic_oracle")),
            endpoint=env.get("EVOJUDGE_ENDPOINT", data.get("endpoint", "")),
            model=env.get("EVOJUDGE_MODEL", data.get("model", "")),
            api_key=env.get("EVOJUDGE_API_KEY", data.get("api_key", "")),
            transcript_path=env.get("EVOJUDGE_TRANSCRIPT", data.get("transcript_path", "")),
            oracle_seed=int(env.get("EVOJUDGE_ORACLE_SEED", data.get("oracle_seed", 0))),
            oracle_weights=data.get("oracle_weights"),
            max_in_flight=int(data.get("max_in_flight", 8)),
        )


def build_backend(config: BackendConfig) -> Backend:
    if config.kind == "remote":
        return RemoteBackend(
            endpoint=config.endpoint, model=config.model, api_key=config.api_key,
            max_in_flight=config.max_in_flight,
        )
    if config.kind == "scripted":
        return ScriptedBackend(transcript_path=Path(config.transcript_path),
                               max_in_flight=config.max_in_flight)
    from .synthetic import SyntheticOracleBackend

    return SyntheticOracleBackend(seed=config.oracle_seed, weights=config.oracle_weights,
                                  max_in_flight=config.max_in_flight)
