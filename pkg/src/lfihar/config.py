"""Layered ``key = value`` configuration.

Files hold one ``dotted.key = value`` per line; ``#`` starts a comment.
Later layers override earlier ones, and ``--set key=value`` overrides sit on top.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import InvalidConfig


class ConfigError(InvalidConfig):
    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.source = source
        self.line = line


@dataclass(frozen=True)
class Entry:
    value: str
    source: str
    line: int | None


def _valid_key(key: str) -> bool:
    parts = key.split(".")
    return all(p and all(c.isalnum() or c in "_-" for c in p) for p in parts)


def parse_text(text: str, source: str = "<string>") -> dict[str, Entry]:
    entries: dict[str, Entry] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", source, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not _valid_key(key):
            raise ConfigError(f"invalid key {key!r}", source, lineno)
        if key in entries:
            raise ConfigError(
                f"duplicate key {key!r} (first set on line {entries[key].line})", source, lineno
            )
        entries[key] = Entry(value, source, lineno)
    return entries


@dataclass
class Config:
    entries: dict[str, Entry] = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str, source: str = "<string>") -> "Config":
        return cls(parse_text(text, source))

    @classmethod
    def from_file(cls, path: str | Path) -> "Config":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
        return cls.from_text(text, str(path))

    @classmethod
    def builtin(cls, name: str) -> "Config":
        text = resources.files("lfihar.data").joinpath(name).read_text()
        return cls.from_text(text, f"<builtin:{name}>")

    def layer(self, other: "Config") -> "Config":
        return Config({**self.entries, **other.entries})

    def with_overrides(self, assignments: list[str]) -> "Config":
        out = dict(self.entries)
        for i, item in enumerate(assignments, start=1):
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}", "--set", i)
            key, value = (s.strip() for s in item.split("=", 1))
            if not _valid_key(key):
                raise ConfigError(f"invalid key {key!r}", "--set", i)
            out[key] = Entry(value, "--set", i)
        return Config(out)

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def keys(self, prefix: str = "") -> list[str]:
        return [k for k in self.entries if k.startswith(prefix)]

    def _entry(self, key: str) -> Entry:
        try:
            return self.entries[key]
        except KeyError:
            raise ConfigError(f"missing required key {key!r}") from None

    def get(self, key: str, default: str | None = None) -> str | None:
        entry = self.entries.get(key)
        return default if entry is None else entry.value

    def _convert(self, key: str, kind, default):
        if key not in self.entries:
            if default is not None:
                return default
            self._entry(key)
        entry = self.entries[key]
        try:
            return kind(entry.value)
        except ValueError:
            raise ConfigError(
                f"{key}: cannot parse {entry.value!r} as {kind.__name__}", entry.source, entry.line
            ) from None

    def get_str(self, key: str, default: str | None = None) -> str:
        return self._convert(key, str, default)

    def get_float(self, key: str, default: float | None = None) -> float:
        return self._convert(key, float, default)

    def get_int(self, key: str, default: int | None = None) -> int:
        return self._convert(key, int, default)

    def get_bool(self, key: str, default: bool | None = None) -> bool:
        def to_bool(s: str) -> bool:
            low = s.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)

        to_bool.__name__ = "bool"
        return self._convert(key, to_bool, default)

    def get_list(self, key: str, kind=str, default: list | None = None) -> list:
        if key not in self.entries and default is not None:
            return list(default)
        entry = self._entry(key)
        items = [s.strip() for s in entry.value.split(",") if s.strip()]
        try:
            return [kind(s) for s in items]
        except ValueError:
            raise ConfigError(
                f"{key}: cannot parse {entry.value!r} as list of {kind.__name__}",
                entry.source,
                entry.line,
            ) from None

    def canonical_text(self) -> str:
        return "".join(f"{k} = {self.entries[k].value}\n" for k in sorted(self.entries))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()
