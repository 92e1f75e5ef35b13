"""Minimal key/table config format for campaign files.

Supports `key = value` pairs, `[table]` sections, `[[table]]` arrays of
tables, comments with `#`, and JSON-style scalar values (quoted strings,
numbers, booleans, flat arrays). `${VAR}` inside string values is replaced
from the environment so secrets stay out of config files.
"""

from __future__ import annotations

import json
import os
import re

from .errors import ModelQueryError


class ConfigError(ModelQueryError):
    pass


_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")
_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _interpolate(value, where: str):
    if isinstance(value, str):
        def lookup(m):
            name = m.group(1)
            if name not in os.environ:
                raise ConfigError(f"{where}: environment variable {name} is not set")
            return os.environ[name]
        return _ENV_RE.sub(lookup, value)
    if isinstance(value, list):
        return [_interpolate(v, where) for v in value]
    return value


def _parse_value(raw: str, where: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{where}: cannot parse value {raw!r} "
            "(strings must be double-quoted)"
        ) from exc


def parse_config_text(text: str, source: str = "<config>") -> dict:
    root: dict = {}
    current = root
    for lineno, line in enumerate(text.splitlines(), start=1):
        where = f"{source}:{lineno}"
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[["):
            if not stripped.endswith("]]"):
                raise ConfigError(f"{where}: unterminated table array header")
            name = stripped[2:-2].strip()
            if not _KEY_RE.match(name):
                raise ConfigError(f"{where}: bad table array name {name!r}")
            array = root.setdefault(name, [])
            if not isinstance(array, list):
                raise ConfigError(f"{where}: {name!r} already used as a value")
            current = {}
            array.append(current)
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(f"{where}: unterminated table header")
            name = stripped[1:-1].strip()
            if not _KEY_RE.match(name):
                raise ConfigError(f"{where}: bad table name {name!r}")
            if name in root and not isinstance(root[name], dict):
                raise ConfigError(f"{where}: {name!r} already used as a value")
            current = root.setdefault(name, {})
            continue
        if "=" not in stripped:
            raise ConfigError(f"{where}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"{where}: bad key {key!r}")
        # Allow trailing comments after the value for unquoted scalars.
        raw = raw.strip()
        if not raw.startswith('"') and not raw.startswith("["):
            raw = raw.split("#", 1)[0].strip()
        if key in current:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        current[key] = _interpolate(_parse_value(raw, where), where)
    return root


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read(), source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
