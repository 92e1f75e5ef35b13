"""Chat-completion gateway with tool calling over two backends.

The remote backend speaks the OpenAI-compatible chat-completions wire
format against any configurable endpoint; the replay backend feeds back a
scripted sequence of assistant messages so agent runs and scoring can be
exercised deterministically and offline. Both report token usage per call.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import requests

from .errors import ModelQueryError


class TransportError(ModelQueryError):
    """Network failure or HTTP status >= 400."""


class ProtocolError(ModelQueryError):
    """Response arrived but could not be interpreted."""


class AuthError(ModelQueryError):
    """The configured API key environment variable is not set."""


class ReplayError(ModelQueryError):
    """Replay file is missing or malformed."""


class ReplayExhausted(ModelQueryError):
    """The scripted conversation has no steps left."""


@dataclass(frozen=True)
class ToolCall:
    id: str
    tool_name: str
    # None marks arguments the provider sent as unparseable JSON; the agent
    # turns that into an error observation instead of aborting the run.
    arguments: dict | None = None

    def to_dict(self) -> dict:
        return {"id": self.id, "tool_name": self.tool_name, "arguments": self.arguments}


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant | tool
    content: str = ""
    tool_calls: tuple[ToolCall, ...] = ()
    tool_call_id: str | None = None

    def to_dict(self) -> dict:
        d: dict = {"role": self.role, "content": self.content}
        if self.tool_calls:
            d["tool_calls"] = [c.to_dict() for c in self.tool_calls]
        if self.tool_call_id is not None:
            d["tool_call_id"] = self.tool_call_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChatMessage":
        return cls(
            role=d["role"],
            content=d.get("content") or "",
            tool_calls=tuple(
                ToolCall(id=c["id"], tool_name=c["tool_name"], arguments=c.get("arguments"))
                for c in d.get("tool_calls", [])
            ),
            tool_call_id=d.get("tool_call_id"),
        )


def system(content: str) -> ChatMessage:
    return ChatMessage(role="system", content=content)


def user(content: str) -> ChatMessage:
    return ChatMessage(role="user", content=content)


def tool_result(tool_call_id: str, content: str) -> ChatMessage:
    return ChatMessage(role="tool", content=content, tool_call_id=tool_call_id)


@dataclass(frozen=True)
class ToolParam:
    name: str
    type: str  # string | integer
    required: bool = True


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str
    parameters: tuple[ToolParam, ...] = ()


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    reasoning_tokens: int = 0
    total_tokens: int = 0

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(
            prompt_tokens=self.prompt_tokens + other.prompt_tokens,
            completion_tokens=self.completion_tokens + other.completion_tokens,
            reasoning_tokens=self.reasoning_tokens + other.reasoning_tokens,
            total_tokens=self.total_tokens + other.total_tokens,
        )

    def to_dict(self) -> dict:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "reasoning_tokens": self.reasoning_tokens,
            "total_tokens": self.total_tokens,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Usage":
        return cls(
            prompt_tokens=int(d.get("prompt_tokens", 0)),
            completion_tokens=int(d.get("completion_tokens", 0)),
            reasoning_tokens=int(d.get("reasoning_tokens", 0)),
            total_tokens=int(d.get("total_tokens", 0)),
        )


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # remote | replay
    model_name: str = ""
    endpoint_url: str = ""
    temperature: float = 0.0
    # Some models only accept their provider-fixed temperature; omit the
    # parameter from requests entirely for those.
    temperature_fixed: bool = False
    api_key_env: str = ""
    replay_path: str = ""
    timeout_seconds: float = 120.0
    transport_retries: int = 0

    def __post_init__(self):
        if self.kind not in ("remote", "replay"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")


def _check_preconditions(messages: list[ChatMessage]):
    if not messages:
        raise ValueError("messages must be non-empty")
    if messages[0].role != "system":
        raise ValueError("first message must have role 'system'")


def _wire_messages(messages: list[ChatMessage]) -> list[dict]:
    wire = []
    for m in messages:
        if m.role == "assistant" and m.tool_calls:
            wire.append({
                "role": "assistant",
                "content": m.content or None,
                "tool_calls": [
                    {
                        "id": c.id,
                        "type": "function",
                        "function": {
                            "name": c.tool_name,
                            "arguments": json.dumps(c.arguments or {}),
                        },
                    }
                    for c in m.tool_calls
                ],
            })
        elif m.role == "tool":
            wire.append({
                "role": "tool",
                "tool_call_id": m.tool_call_id,
                "content": m.content,
            })
        else:
            wire.append({"role": m.role, "content": m.content})
    return wire


def _wire_tools(tools: list[ToolSchema]) -> list[dict]:
    wire = []
    for t in tools:
        properties = {
            p.name: {"type": p.type} for p in t.parameters
        }
        required = [p.name for p in t.parameters if p.required]
        wire.append({
            "type": "function",
            "function": {
                "name": t.name,
                "description": t.description,
                "parameters": {
                    "type": "object",
                    "properties": properties,
                    "required": required,
                },
            },
        })
    return wire


def _parse_tool_calls(raw: list) -> tuple[ToolCall, ...]:
    calls = []
    for i, c in enumerate(raw):
        fn = c.get("function", {})
        args_text = fn.get("arguments", "{}")
        try:
            args = json.loads(args_text) if args_text else {}
            if not isinstance(args, dict):
                args = None
        except (json.JSONDecodeError, TypeError):
            args = None
        calls.append(ToolCall(
            id=c.get("id") or f"call_{i}",
            tool_name=fn.get("name", ""),
            arguments=args,
        ))
    return tuple(calls)


def _parse_usage(raw: dict | None) -> Usage:
    raw = raw or {}

    def count(value) -> int:
        try:
            return max(0, int(value))
        except (TypeError, ValueError):
            return 0

    prompt = count(raw.get("prompt_tokens"))
    completion = count(raw.get("completion_tokens"))
    details = raw.get("completion_tokens_details") or {}
    reasoning = count(details.get("reasoning_tokens"))
    total = count(raw.get("total_tokens")) or prompt + completion + reasoning
    return Usage(prompt, completion, reasoning, total)


class RemoteBackend:
    """OpenAI-compatible chat-completions endpoint over HTTP JSON."""

    def __init__(self, config: BackendConfig):
        self.config = config

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env)
            if not key:
                raise AuthError(
                    f"environment variable {self.config.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, messages: list[ChatMessage],
                 tools: list[ToolSchema] | None = None) -> tuple[ChatMessage, Usage]:
        _check_preconditions(messages)
        payload: dict = {
            "model": self.config.model_name,
            "messages": _wire_messages(messages),
        }
        if not self.config.temperature_fixed:
            payload["temperature"] = self.config.temperature
        if tools:
            payload["tools"] = _wire_tools(tools)
        headers = self._headers()

        attempts = 1 + max(0, self.config.transport_retries)
        last_error: TransportError | None = None
        for _ in range(attempts):
            try:
                response = requests.post(
                    self.config.endpoint_url, json=payload, headers=headers,
                    timeout=self.config.timeout_seconds,
                )
            except requests.RequestException as exc:
                last_error = TransportError(str(exc))
                continue
            if response.status_code >= 400:
                last_error = TransportError(
                    f"HTTP {response.status_code}: {response.text[:500]}"
                )
                continue
            return self._parse(response)
        raise last_error

    def _parse(self, response) -> tuple[ChatMessage, Usage]:
        try:
            data = response.json()
        except ValueError as exc:
            raise ProtocolError(f"response is not JSON: {response.text[:200]}") from exc
        try:
            message = data["choices"][0]["message"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"no choices in response: {str(data)[:200]}") from exc
        reply = ChatMessage(
            role="assistant",
            content=message.get("content") or "",
            tool_calls=_parse_tool_calls(message.get("tool_calls") or []),
        )
        return reply, _parse_usage(data.get("usage"))


class ReplayBackend:
    """Plays back a scripted list of assistant messages, one per call.

    Requests are accepted but not inspected; determinism comes from the
    script alone. Each backend instance owns its own cursor, so runs must
    not share instances.
    """

    def __init__(self, steps: list[tuple[ChatMessage, Usage]], source: str = "<script>"):
        self.steps = steps
        self.source = source
        self.cursor = 0

    def complete(self, messages: list[ChatMessage],
                 tools: list[ToolSchema] | None = None) -> tuple[ChatMessage, Usage]:
        _check_preconditions(messages)
        if self.cursor >= len(self.steps):
            raise ReplayExhausted(
                f"{self.source}: script ended after {len(self.steps)} steps"
            )
        step = self.steps[self.cursor]
        self.cursor += 1
        return step


def _replay_step(index: int, raw: dict, source: str) -> tuple[ChatMessage, Usage]:
    if not isinstance(raw, dict) or "assistant" not in raw:
        raise ReplayError(f"{source}: step {index} must be an object with an 'assistant' key")
    a = raw["assistant"]
    if not isinstance(a, dict):
        raise ReplayError(f"{source}: step {index} 'assistant' must be an object")
    calls = []
    for j, c in enumerate(a.get("tool_calls") or []):
        name = c.get("tool_name") or c.get("name")
        if not name:
            raise ReplayError(f"{source}: step {index} tool call {j} lacks a tool name")
        args = c.get("arguments", {})
        if not isinstance(args, dict):
            raise ReplayError(f"{source}: step {index} tool call {j} arguments must be an object")
        calls.append(ToolCall(id=c.get("id") or f"call_{index}_{j}", tool_name=name, arguments=args))
    message = ChatMessage(
        role="assistant",
        content=a.get("content") or "",
        tool_calls=tuple(calls),
    )
    u = raw.get("usage") or {}
    if not isinstance(u, dict):
        raise ReplayError(f"{source}: step {index} usage must be an object")
    prompt = int(u.get("prompt", 0))
    completion = int(u.get("completion", 0))
    reasoning = int(u.get("reasoning", 0))
    usage = Usage(prompt, completion, reasoning, prompt + completion + reasoning)
    return message, usage


def load_replay(path) -> ReplayBackend:
    """Load a replay script: a JSON array of steps.

    Each step is {"assistant": {"content"?: str, "tool_calls"?: [...]},
    "usage"?: {"prompt": int, "completion": int, "reasoning": int}}.
    """
    source = str(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ReplayError(f"{source}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ReplayError(f"{source}: invalid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ReplayError(f"{source}: top level must be a JSON array of steps")
    steps = [_replay_step(i, raw, source) for i, raw in enumerate(data)]
    return ReplayBackend(steps, source=source)


def make_backend(config: BackendConfig):
    """Fresh backend instance; replay scripts restart from their first step."""
    if config.kind == "remote":
        return RemoteBackend(config)
    if not config.replay_path:
        raise ReplayError("replay backend requires replay_path")
    return ReplayBackend(load_replay(config.replay_path).steps, source=config.replay_path)


def complete(backend, messages: list[ChatMessage],
             tools: list[ToolSchema] | None = None) -> tuple[ChatMessage, Usage]:
    """One round trip: messages in, exactly one assistant message plus usage out."""
    if isinstance(backend, BackendConfig):
        backend = make_backend(backend)
    return backend.complete(messages, tools)
