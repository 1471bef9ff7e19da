"""Plain-text ``key = value`` configuration files.

Blank lines and lines starting with ``#`` are ignored. Keys are lower-cased;
values keep interior whitespace but are stripped at both ends.
"""

from __future__ import annotations

from pathlib import Path


def parse_key_values(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


def read_key_values(path: str | Path) -> dict[str, str]:
    return parse_key_values(Path(path).read_text(encoding="utf-8"))


def write_key_values(path: str | Path, values: dict[str, object]) -> None:
    lines = [f"{k} = {v}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")
