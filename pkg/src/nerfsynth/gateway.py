"""Uniform access to text and vision LLM backends.

Three modes share one calling convention: `live` HTTP chat completions,
`replay` from a content-addressed response cache (a miss fails rather than
going live), and `mock` scripted responses consumed per tag in FIFO order.
Mock runs can record into the cache so later replay runs are byte-stable.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import httpx
import jsonschema


class GatewayErrorBase(Exception):
    pass


class CacheMiss(GatewayErrorBase):
    """Replay mode saw a request absent from the cache."""


class BackendError(GatewayErrorBase):
    """Live endpoint failed or returned an unusable payload."""


class ScriptExhausted(GatewayErrorBase):
    """Mock script has no further response queued for the tag."""


class SchemaParseFailure(GatewayErrorBase):
    """Response did not parse against the requested schema, even after reprompt."""


class MissingImage(GatewayErrorBase):
    """A vision request referenced an unreadable image path."""


@dataclass(frozen=True)
class ContentPart:
    type: str  # "text" | "image"
    text: str = ""
    path: str = ""


@dataclass(frozen=True)
class Message:
    role: str
    parts: tuple[ContentPart, ...]

    @classmethod
    def text(cls, role: str, content: str) -> "Message":
        return cls(role=role, parts=(ContentPart(type="text", text=content),))


@dataclass(frozen=True)
class LlmRequest:
    messages: tuple[Message, ...]
    model_id: str = "default"
    temperature: float = 0.0
    max_tokens: int = 2048
    schema: Mapping | None = None
    tag: str = ""

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be nonempty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def with_extra_message(self, message: Message) -> "LlmRequest":
        return LlmRequest(
            messages=self.messages + (message,),
            model_id=self.model_id,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            schema=self.schema,
            tag=self.tag,
        )

    def image_paths(self) -> list[str]:
        return [p.path for m in self.messages for p in m.parts if p.type == "image"]


@dataclass
class LlmResponse:
    text: str
    structured: object | None = None
    usage: dict = field(default_factory=dict)
    provenance: str = "mock"


def simple_request(prompt: str, tag: str, schema: Mapping | None = None, model_id: str = "default") -> LlmRequest:
    return LlmRequest(messages=(Message.text("user", prompt),), schema=schema, tag=tag, model_id=model_id)


def _canonical_request(req: LlmRequest) -> dict:
    messages = []
    for msg in req.messages:
        parts = []
        for part in msg.parts:
            if part.type == "text":
                parts.append({"type": "text", "text": part.text})
            else:
                try:
                    digest = hashlib.sha256(Path(part.path).read_bytes()).hexdigest()
                except OSError as exc:
                    raise MissingImage(f"cannot read image {part.path}: {exc}") from exc
                parts.append({"type": "image", "sha256": digest})
        messages.append({"role": msg.role, "content": parts})
    return {
        "max_tokens": req.max_tokens,
        "messages": messages,
        "model_id": req.model_id,
        "schema": req.schema,
        "tag": req.tag,
        "temperature": req.temperature,
    }


def cache_key(req: LlmRequest) -> str:
    """256-bit content digest of the canonical request serialization."""
    canonical = json.dumps(_canonical_request(req), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class GatewayConfig:
    mode: str = "mock"
    endpoint: str | None = None
    api_key_env: str | None = None
    cache_dir: str | None = None
    script_path: str | None = None
    model_ids: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> "GatewayConfig":
        data = json.loads(Path(path).read_text())
        cfg = cls(
            mode=data.get("mode", "mock"),
            endpoint=data.get("endpoint"),
            api_key_env=data.get("api_key_env"),
            cache_dir=data.get("cache_dir"),
            script_path=data.get("script_path"),
            model_ids=data.get("model_ids", {}),
        )
        base = Path(path).parent
        if cfg.cache_dir and not Path(cfg.cache_dir).is_absolute():
            cfg.cache_dir = str(base / cfg.cache_dir)
        if cfg.script_path and not Path(cfg.script_path).is_absolute():
            cfg.script_path = str(base / cfg.script_path)
        return cfg


class ResponseCache:
    """Content-addressed request/response store, one JSON file per entry."""

    def __init__(self, cache_dir: str | Path):
        self.dir = Path(cache_dir)
        self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, key: str) -> Path:
        return self.dir / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self.path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text())["response"]

    def put(self, key: str, request: dict, response: dict) -> None:
        payload = json.dumps({"request": request, "response": response}, indent=2, sort_keys=True)
        tmp = self.path(key).with_suffix(".tmp")
        tmp.write_text(payload)
        tmp.replace(self.path(key))


class MockScript:
    """Per-tag FIFO response queues; exhaustion is an error, never reuse."""

    def __init__(self, entries: Mapping[str, Sequence]):
        self._lock = threading.Lock()
        self._queues: dict[str, list[str]] = {}
        for tag, items in entries.items():
            queue = []
            for item in items:
                queue.append(item if isinstance(item, str) else json.dumps(item))
            self._queues[tag] = queue

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        data = json.loads(Path(path).read_text())
        if "tags" in data:
            data = data["tags"]
        return cls(data)

    def pop(self, tag: str) -> str:
        with self._lock:
            queue = self._queues.get(tag)
            if not queue:
                raise ScriptExhausted(f"no scripted response left for tag {tag!r}")
            return queue.pop(0)

    def remaining(self, tag: str) -> int:
        with self._lock:
            return len(self._queues.get(tag, []))


_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```\s*$", re.DOTALL)


def parse_structured(text: str, schema: Mapping):
    """JSON-parse the response body and validate it against the schema."""
    body = text.strip()
    fenced = _FENCE_RE.match(body)
    if fenced:
        body = fenced.group(1)
    value = json.loads(body)
    jsonschema.validate(value, dict(schema))
    return value


class LlmGateway:
    """Chat-completion facade over live, replay and mock backends."""

    def __init__(self, config: GatewayConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self.cache = ResponseCache(config.cache_dir) if config.cache_dir else None
        self.script = MockScript.from_file(config.script_path) if config.mode == "mock" and config.script_path else None
        self._transport = transport
        if config.mode not in ("live", "replay", "mock"):
            raise ValueError(f"unknown gateway mode {config.mode!r}")
        if config.mode == "replay" and self.cache is None:
            raise ValueError("replay mode requires cache_dir")
        if config.mode == "mock" and self.script is None:
            raise ValueError("mock mode requires script_path")

    def model_id(self, kind: str) -> str:
        return self.config.model_ids.get(kind, "default")

    def complete(self, req: LlmRequest) -> LlmResponse:
        response = self._dispatch(req)
        if req.schema is None:
            return response
        try:
            response.structured = parse_structured(response.text, req.schema)
            return response
        except (ValueError, jsonschema.ValidationError) as first_error:
            reprompt = req.with_extra_message(
                Message.text("user", "The previous reply did not match the required JSON schema. "
                                     "Reply with only a JSON value matching the schema.")
            )
            retry = self._dispatch(reprompt)
            try:
                retry.structured = parse_structured(retry.text, req.schema)
                return retry
            except (ValueError, jsonschema.ValidationError) as exc:
                raise SchemaParseFailure(
                    f"tag {req.tag!r}: unparseable structured output ({first_error}; retry: {exc})"
                ) from exc

    def complete_vision(self, req: LlmRequest) -> LlmResponse:
        for path in req.image_paths():
            if not Path(path).is_file():
                raise MissingImage(path)
        return self.complete(req)

    # -- backend dispatch ---------------------------------------------------

    def _dispatch(self, req: LlmRequest) -> LlmResponse:
        key = cache_key(req)
        if self.config.mode == "replay":
            cached = self.cache.get(key)  # type: ignore[union-attr]
            if cached is None:
                raise CacheMiss(f"tag {req.tag!r} key {key[:16]}... not in replay cache")
            return LlmResponse(
                text=cached["text"],
                usage=dict(cached.get("usage", {})),
                provenance="replay",
            )
        if self.config.mode == "mock":
            text = self.script.pop(req.tag)  # type: ignore[union-attr]
            usage = {
                "prompt_tokens": sum(len(p.text) for m in req.messages for p in m.parts) // 4,
                "completion_tokens": len(text) // 4,
            }
            response = LlmResponse(text=text, usage=usage, provenance="mock")
            if self.cache is not None:
                self.cache.put(key, _canonical_request(req), {"text": text, "usage": usage})
            return response
        return self._live(req, key)

    def _live(self, req: LlmRequest, key: str) -> LlmResponse:
        if not self.config.endpoint:
            raise BackendError("live mode requires an endpoint")
        headers = {"content-type": "application/json"}
        if self.config.api_key_env:
            api_key = os.environ.get(self.config.api_key_env)
            if not api_key:
                raise BackendError(f"environment variable {self.config.api_key_env} is not set")
            headers["authorization"] = f"Bearer {api_key}"
        payload = {
            "model": req.model_id,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "messages": [
                {
                    "role": m.role,
                    "content": " ".join(p.text for p in m.parts if p.type == "text"),
                }
                for m in req.messages
            ],
        }
        try:
            with httpx.Client(transport=self._transport, timeout=120.0) as client:
                resp = client.post(self.config.endpoint, json=payload, headers=headers)
                resp.raise_for_status()
                data = resp.json()
            text = data["choices"][0]["message"]["content"]
            usage = data.get("usage", {})
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise BackendError(f"live completion failed: {exc}") from exc
        response = LlmResponse(text=text, usage=usage, provenance="live")
        if self.cache is not None:
            self.cache.put(key, _canonical_request(req), {"text": text, "usage": usage})
        return response


def build_gateway(config_path: str | Path) -> LlmGateway:
    return LlmGateway(GatewayConfig.from_file(config_path))
