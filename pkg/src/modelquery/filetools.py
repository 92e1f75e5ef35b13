"""IDE-like windowed file access rendered as plain-text observations.

Eight tools operate on a WorkspaceSession: directory listing, filename
search, directory-wide term search, and a single scrollable window over one
open file. Every tool is deterministic: identical session state, filesystem
contents and arguments render byte-identical text.
"""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ModelQueryError


class ViewerConfigError(ModelQueryError):
    pass


@dataclass(frozen=True)
class ViewerConfig:
    window_size: int = 50
    scroll_overlap: int = 2
    max_rendered_matches: int = 100

    def __post_init__(self):
        if not 0 <= self.scroll_overlap < self.window_size:
            raise ViewerConfigError(
                f"need window_size > scroll_overlap >= 0, "
                f"got {self.window_size} / {self.scroll_overlap}"
            )

    @property
    def scroll_stride(self) -> int:
        return self.window_size - self.scroll_overlap


@dataclass
class OpenFile:
    rel_path: str
    lines: list[str]
    window_start: int = 1  # 1-based

    @property
    def total_lines(self) -> int:
        return len(self.lines)


@dataclass
class WorkspaceSession:
    """Mutable viewer state for one run; not shared between runs."""

    root_dir: str
    config: ViewerConfig = field(default_factory=ViewerConfig)
    open_file: OpenFile | None = None

    @property
    def root(self) -> Path:
        return Path(self.root_dir)


@dataclass(frozen=True)
class Observation:
    text: str
    ok: bool

    @classmethod
    def of(cls, text: str) -> "Observation":
        return cls(text=text, ok=True)

    @classmethod
    def error(cls, message: str) -> "Observation":
        return cls(text=f"Error: {message}", ok=False)


def _resolve(session: WorkspaceSession, rel: str) -> Path | None:
    """Resolve a tool path inside the workspace root; None if it escapes."""
    candidate = (session.root / rel).resolve()
    root = session.root.resolve()
    if candidate != root and root not in candidate.parents:
        return None
    return candidate


def _display_dir(session: WorkspaceSession, dir: str | None) -> str:
    return dir if dir else session.root_dir


def _resolve_dir(session: WorkspaceSession, dir: str | None):
    shown = _display_dir(session, dir)
    path = _resolve(session, dir) if dir else session.root
    if path is None or not path.is_dir():
        return None, shown
    return path, shown


def _max_start(total_lines: int, window: int) -> int:
    return max(1, total_lines - window + 1)


def _clamp_start(line: int, total_lines: int, window: int) -> int:
    return min(max(1, line), _max_start(total_lines, window))


def _render_window(session: WorkspaceSession) -> str:
    of = session.open_file
    window = session.config.window_size
    total = of.total_lines
    first = of.window_start
    last = min(total, first + window - 1)
    above = first - 1
    below = total - last if total else 0
    out = [f"File: {of.rel_path} ({total} lines total)"]
    if above > 0:
        out.append(f"({above} more lines above)")
    for n in range(first, last + 1):
        out.append(f"{n}: {of.lines[n - 1]}")
    if below > 0:
        out.append(f"({below} more lines below)")
    return "\n".join(out)


def _read_lines(path: Path) -> list[str]:
    return path.read_text(encoding="utf-8", errors="replace").splitlines()


def list_directory(session: WorkspaceSession, dir: str | None = None) -> Observation:
    """Lists all files in a directory in a tree-style format."""
    path, shown = _resolve_dir(session, dir)
    if path is None:
        return Observation.error(f"directory not found: {shown}")
    out = [shown]

    def walk(d: Path, depth: int):
        for entry in sorted(d.iterdir(), key=lambda p: p.name):
            indent = "  " * depth
            if entry.is_dir():
                out.append(f"{indent}{entry.name}/")
                walk(entry, depth + 1)
            else:
                out.append(f"{indent}{entry.name}")

    walk(path, 1)
    return Observation.of("\n".join(out))


def find_file(session: WorkspaceSession, pattern: str,
              dir: str | None = None) -> Observation:
    """Finds all files with a given name or pattern."""
    path, shown = _resolve_dir(session, dir)
    if path is None:
        return Observation.error(f"directory not found: {shown}")
    root = session.root.resolve()
    matches = sorted(
        str(p.resolve().relative_to(root))
        for p in path.rglob("*")
        if p.is_file() and fnmatch.fnmatchcase(p.name, pattern)
    )
    if not matches:
        return Observation.of(f'No matches found for "{pattern}" in {shown}')
    head = f'Found {len(matches)} matches for "{pattern}" in {shown}:'
    return Observation.of("\n".join([head] + matches))


def _matching_lines(path: Path, term: str) -> list[tuple[int, str]]:
    return [
        (n, line)
        for n, line in enumerate(_read_lines(path), start=1)
        if term in line
    ]


def search_directory(session: WorkspaceSession, term: str,
                     dir: str | None = None) -> Observation:
    """Searches for a term across all files in the directory."""
    path, shown = _resolve_dir(session, dir)
    if path is None:
        return Observation.error(f"directory not found: {shown}")
    root = session.root.resolve()
    per_file: list[tuple[str, int]] = []
    for p in sorted(path.rglob("*"), key=lambda p: str(p)):
        if not p.is_file():
            continue
        count = len(_matching_lines(p, term))
        if count:
            per_file.append((str(p.resolve().relative_to(root)), count))
    total = sum(count for _, count in per_file)
    if not total:
        return Observation.of(f'No matches found for "{term}" in {shown}')
    out = [f'Found {total} matches for "{term}" in {shown}:']
    out.extend(f"{rel} ({count} matches)" for rel, count in per_file)
    return Observation.of("\n".join(out))


def open_file(session: WorkspaceSession, path: str,
              line: int | None = None) -> Observation:
    """Opens a file at a given path. Optionally scrolls to a specified line."""
    resolved = _resolve(session, path)
    if resolved is None or not resolved.is_file():
        return Observation.error(f"file not found: {path}")
    lines = _read_lines(resolved)
    session.open_file = OpenFile(rel_path=path, lines=lines)
    if line is not None:
        return go_to_line(session, line)
    return Observation.of(_render_window(session))


def go_to_line(session: WorkspaceSession, line: int) -> Observation:
    """Moves the window view to a specific line number in the open file."""
    of = session.open_file
    if of is None:
        return Observation.error("no file open")
    cfg = session.config
    # Center the requested line in the window; clamps handle both ends.
    of.window_start = _clamp_start(
        line - cfg.window_size // 2, of.total_lines, cfg.window_size
    )
    return Observation.of(_render_window(session))


def scroll_down(session: WorkspaceSession) -> Observation:
    """Scrolls the open file window down by a fixed number of lines."""
    return _scroll(session, +1)


def scroll_up(session: WorkspaceSession) -> Observation:
    """Scrolls the open file window up by a fixed number of lines."""
    return _scroll(session, -1)


def _scroll(session: WorkspaceSession, direction: int) -> Observation:
    of = session.open_file
    if of is None:
        return Observation.error("no file open")
    cfg = session.config
    of.window_start = _clamp_start(
        of.window_start + direction * cfg.scroll_stride,
        of.total_lines, cfg.window_size,
    )
    return Observation.of(_render_window(session))


def search_file(session: WorkspaceSession, term: str,
                path: str | None = None) -> Observation:
    """Searches for a term within the open file (or a specified file)."""
    if path is not None:
        resolved = _resolve(session, path)
        if resolved is None or not resolved.is_file():
            return Observation.error(f"file not found: {path}")
        shown = path
        hits = _matching_lines(resolved, term)
    else:
        of = session.open_file
        if of is None:
            return Observation.error("no file open")
        shown = of.rel_path
        hits = [(n, line) for n, line in enumerate(of.lines, start=1) if term in line]
    if not hits:
        return Observation.of(f'No matches found for "{term}" in {shown}')
    head = f'Found {len(hits)} matches for "{term}" in {shown}:'
    if len(hits) > session.config.max_rendered_matches:
        return Observation.of(
            head + "\nToo many matches. Please narrow your search."
        )
    out = [head]
    out.extend(f"Line {n}: {line.strip()}" for n, line in hits)
    out.append(f'End of matches for "{term}" in {shown}')
    return Observation.of("\n".join(out))
