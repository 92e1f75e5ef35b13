"""Run one question under either strategy and record everything.

Direct runs place the whole model file in the system prompt and make a
single backend call. Agent runs hand the model only a directory path plus
the eight file tools and loop action/observation style until the assistant
replies with plain text or the iteration cap trips. Every run yields a
RunRecord: full transcript, answer or error, and a per-call token ledger.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import filetools
from .filetools import Observation, ViewerConfig, WorkspaceSession
from .llm import (
    BackendConfig,
    ChatMessage,
    ProtocolError,
    ReplayError,
    ReplayExhausted,
    ToolCall,
    ToolParam,
    ToolSchema,
    TransportError,
    AuthError,
    Usage,
    make_backend,
    system,
    tool_result,
    user,
)

DIRECT = "direct"
AGENT = "agent"

RECURSION_LIMIT = "RecursionLimit"
TRANSPORT = "Transport"
PROTOCOL = "Protocol"

# name -> (implementation, parameter table). Descriptions below are the
# one-liners advertised to the model.
_TOOL_TABLE = {
    "list_directory": (
        filetools.list_directory,
        "Lists all files in a directory in a tree-style format.",
        (ToolParam("dir", "string", required=False),),
    ),
    "find_file": (
        filetools.find_file,
        "Finds all files with a given name or pattern.",
        (ToolParam("pattern", "string"), ToolParam("dir", "string", required=False)),
    ),
    "search_directory": (
        filetools.search_directory,
        "Searches for a term across all files in the directory.",
        (ToolParam("term", "string"), ToolParam("dir", "string", required=False)),
    ),
    "open_file": (
        filetools.open_file,
        "Opens a file at a given path. Optionally scrolls to a specified line.",
        (ToolParam("path", "string"), ToolParam("line", "integer", required=False)),
    ),
    "scroll_up": (
        filetools.scroll_up,
        "Scrolls the open file window up by a fixed number of lines.",
        (),
    ),
    "scroll_down": (
        filetools.scroll_down,
        "Scrolls the open file window down by a fixed number of lines.",
        (),
    ),
    "go_to_line": (
        filetools.go_to_line,
        "Moves the window view to a specific line number in the open file.",
        (ToolParam("line", "integer"),),
    ),
    "search_file": (
        filetools.search_file,
        "Searches for a term within the open file (or a specified file).",
        (ToolParam("term", "string"), ToolParam("path", "string", required=False)),
    ),
}

TOOL_SCHEMAS = [
    ToolSchema(name=name, description=desc, parameters=params)
    for name, (_, desc, params) in _TOOL_TABLE.items()
]


def default_template(name: str) -> str:
    return resources.files("modelquery.prompts").joinpath(f"{name}.txt").read_text(
        encoding="utf-8"
    )


def render_template(template: str, values: dict) -> str:
    """Literal {name} substitution; template braces elsewhere stay intact."""
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", str(value))
    return out


@dataclass(frozen=True)
class AgentConfig:
    max_iterations: int = 100
    viewer: ViewerConfig = field(default_factory=ViewerConfig)
    direct_system_template: str = ""
    agent_system_template: str = ""

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.direct_system_template:
            object.__setattr__(
                self, "direct_system_template", default_template("direct_system")
            )
        if not self.agent_system_template:
            object.__setattr__(
                self, "agent_system_template", default_template("agent_system")
            )


@dataclass(frozen=True)
class RunError:
    kind: str  # RecursionLimit | Transport | Protocol
    detail: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "detail": self.detail}


@dataclass(frozen=True)
class RunRecord:
    question_id: str
    setup: str  # direct | agent
    model_name: str
    transcript: tuple[ChatMessage, ...]
    tool_invocations: int
    answer: str | None
    error: RunError | None
    usage_per_call: tuple[Usage, ...]
    usage_total: Usage

    def __post_init__(self):
        if (self.answer is None) == (self.error is None):
            raise ValueError("exactly one of answer/error must be present")
        total = sum(self.usage_per_call, Usage())
        if total != self.usage_total:
            raise ValueError("usage_total must equal the sum of usage_per_call")

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "setup": self.setup,
            "model_name": self.model_name,
            "transcript": [m.to_dict() for m in self.transcript],
            "tool_invocations": self.tool_invocations,
            "answer": self.answer,
            "error": self.error.to_dict() if self.error else None,
            "usage_per_call": [u.to_dict() for u in self.usage_per_call],
            "usage_total": self.usage_total.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        err = d.get("error")
        return cls(
            question_id=d["question_id"],
            setup=d["setup"],
            model_name=d["model_name"],
            transcript=tuple(ChatMessage.from_dict(m) for m in d["transcript"]),
            tool_invocations=int(d["tool_invocations"]),
            answer=d.get("answer"),
            error=RunError(kind=err["kind"], detail=err["detail"]) if err else None,
            usage_per_call=tuple(Usage.from_dict(u) for u in d["usage_per_call"]),
            usage_total=Usage.from_dict(d["usage_total"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", text) or "unnamed"


def run_record_filename(question_id: str, setup: str, model_name: str) -> str:
    return f"{slug(question_id)}.{setup}.{slug(model_name)}.json"


def save_run_record(record: RunRecord, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / run_record_filename(
        record.question_id, record.setup, record.model_name
    )
    path.write_text(record.to_json(), encoding="utf-8")
    return path


def load_run_record(path) -> RunRecord:
    with open(path, encoding="utf-8") as fh:
        return RunRecord.from_dict(json.load(fh))


def dispatch_tool_call(session: WorkspaceSession, call: ToolCall) -> Observation:
    """Route one tool call; every failure becomes an Error observation."""
    entry = _TOOL_TABLE.get(call.tool_name)
    if entry is None:
        return Observation.error(f"unknown tool: {call.tool_name}")
    func, _, params = entry
    if call.arguments is None:
        return Observation.error(f"malformed arguments for tool: {call.tool_name}")
    kwargs = {}
    for p in params:
        if p.name not in call.arguments:
            if p.required:
                return Observation.error(f"missing required argument: {p.name}")
            continue
        value = call.arguments[p.name]
        if p.type == "integer":
            try:
                value = int(value)
            except (TypeError, ValueError):
                return Observation.error(f"invalid integer for argument: {p.name}")
        else:
            value = str(value)
        kwargs[p.name] = value
    try:
        return func(session, **kwargs)
    except Exception as exc:  # tool errors are observations, never run failures
        return Observation.error(f"{call.tool_name} failed: {exc}")


def _resolve_backend(backend, model_name: str):
    if isinstance(backend, BackendConfig):
        return make_backend(backend), model_name or backend.model_name
    return backend, model_name or getattr(getattr(backend, "config", None), "model_name", "") or "model"


def run_direct(model_text: str, question: str, backend,
               config: AgentConfig | None = None, *,
               question_id: str = "q", model_name: str = "",
               model_path: str = "model.ecore") -> RunRecord:
    """Single call with the whole model embedded in the system prompt."""
    if not model_text:
        raise ValueError("model_text must be non-empty")
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    config = config or AgentConfig()
    backend, model_name = _resolve_backend(backend, model_name)
    sys_text = render_template(
        config.direct_system_template,
        {"model_text": model_text, "model_path": model_path},
    )
    transcript: list[ChatMessage] = [system(sys_text), user(question)]
    answer: str | None = None
    error: RunError | None = None
    usages: list[Usage] = []
    try:
        reply, usage = backend.complete(transcript, tools=None)
        usages.append(usage)
        transcript.append(reply)
        answer = reply.content
    except (TransportError, AuthError) as exc:
        error = RunError(TRANSPORT, str(exc))
    except (ProtocolError, ReplayError, ReplayExhausted) as exc:
        error = RunError(PROTOCOL, str(exc))
    total = sum(usages, Usage())
    return RunRecord(
        question_id=question_id, setup=DIRECT, model_name=model_name,
        transcript=tuple(transcript), tool_invocations=0,
        answer=answer, error=error,
        usage_per_call=tuple(usages), usage_total=total,
    )


def run_agent(workspace_root, question: str, backend,
              config: AgentConfig | None = None, *,
              question_id: str = "q", model_name: str = "") -> RunRecord:
    """ReAct loop over the workspace with the eight file tools.

    One iteration is one assistant turn; a turn may carry several tool
    calls, each answered with its own tool message. The loop ends with the
    first plain-text assistant reply, a backend failure, or RecursionLimit
    after max_iterations turns without a final answer.
    """
    root = Path(workspace_root)
    if not root.is_dir():
        raise ValueError(f"workspace root is not a directory: {workspace_root}")
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    config = config or AgentConfig()
    backend, model_name = _resolve_backend(backend, model_name)
    session = WorkspaceSession(root_dir=str(workspace_root), config=config.viewer)
    sys_text = render_template(
        config.agent_system_template, {"workspace_root": str(workspace_root)}
    )
    transcript: list[ChatMessage] = [system(sys_text), user(question)]
    answer: str | None = None
    error: RunError | None = None
    usages: list[Usage] = []
    tool_turns = 0
    for _ in range(config.max_iterations):
        try:
            reply, usage = backend.complete(transcript, tools=TOOL_SCHEMAS)
        except (TransportError, AuthError) as exc:
            error = RunError(TRANSPORT, str(exc))
            break
        except (ProtocolError, ReplayError, ReplayExhausted) as exc:
            error = RunError(PROTOCOL, str(exc))
            break
        usages.append(usage)
        transcript.append(reply)
        if reply.tool_calls:
            tool_turns += 1
            for call in reply.tool_calls:
                observation = dispatch_tool_call(session, call)
                transcript.append(tool_result(call.id, observation.text))
        else:
            answer = reply.content
            break
    if answer is None and error is None:
        error = RunError(
            RECURSION_LIMIT,
            f"no final answer after {config.max_iterations} iterations",
        )
    total = sum(usages, Usage())
    return RunRecord(
        question_id=question_id, setup=AGENT, model_name=model_name,
        transcript=tuple(transcript), tool_invocations=tool_turns,
        answer=answer, error=error,
        usage_per_call=tuple(usages), usage_total=total,
    )
