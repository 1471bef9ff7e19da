"""Log-entry data model: timestamps, entries, parsing and canonical serialization.

A log line is modelled in its most basic form as three fields separated by
whitespace::

    20210830T104958 EFW Write failed
    <timestamp>     <event code> <description>

The timestamp notation is configurable through :class:`FieldSchema`; the
description is everything after the event code.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Iterator

from loggan.config import read_key_values

__all__ = [
    "TimestampStyle",
    "Timestamp",
    "LogEntry",
    "LogFile",
    "Order",
    "FieldSchema",
    "LogFormatError",
    "InvalidTimestamp",
    "MissingField",
    "parse_timestamp",
    "format_timestamp",
    "parse_entry",
    "serialize_entry",
    "cleanse_whitespace",
    "read_lines",
    "read_log_file",
    "write_log_file",
    "DEFAULT_SCHEMA",
    "CBS_SCHEMA",
]


class TimestampStyle(enum.Enum):
    T_SEPARATED = "t"  # 2021-09-30T14:00:07
    SPACE_SEPARATED = "space"  # 2021-09-30 14:00:07
    COMPACT = "compact"  # 20210930T140007


class Order(enum.Enum):
    ASCENDING = "asc"
    DESCENDING = "desc"
    UNKNOWN = "unknown"
    AUTO = "auto"


# 'd' marks a digit slot; everything else is literal.
_TEMPLATES = {
    TimestampStyle.T_SEPARATED: "dddd-dd-ddTdd:dd:dd",
    TimestampStyle.SPACE_SEPARATED: "dddd-dd-dd dd:dd:dd",
    TimestampStyle.COMPACT: "ddddddddTdddddd",
}
# (year, month, day, hour, minute, second) slices into the template.
_SLICES = {
    TimestampStyle.T_SEPARATED: ((0, 4), (5, 7), (8, 10), (11, 13), (14, 16), (17, 19)),
    TimestampStyle.SPACE_SEPARATED: ((0, 4), (5, 7), (8, 10), (11, 13), (14, 16), (17, 19)),
    TimestampStyle.COMPACT: ((0, 4), (4, 6), (6, 8), (9, 11), (11, 13), (13, 15)),
}

_HSPACE = re.compile(r"[^\S\r\n]+")


class LogFormatError(ValueError):
    """Base class for lines that do not fit the configured log format."""


class InvalidTimestamp(LogFormatError):
    BAD_LENGTH = "BAD_LENGTH"
    NON_DIGIT = "NON_DIGIT"
    OUT_OF_RANGE = "OUT_OF_RANGE"

    def __init__(self, reason: str, text: str = ""):
        super().__init__(f"{reason}: {text!r}")
        self.reason = reason
        self.text = text


class MissingField(LogFormatError):
    def __init__(self, found: int, required: int, text: str = ""):
        super().__init__(f"expected at least {required} fields, found {found}: {text!r}")
        self.found = found
        self.required = required


def is_leap(year: int) -> bool:
    return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)


def days_in_month(year: int, month: int) -> int:
    if month == 2:
        return 29 if is_leap(year) else 28
    return 30 if month in (4, 6, 9, 11) else 31


@dataclass(frozen=True, order=True)
class Timestamp:
    year: int
    month: int
    day: int
    hour: int
    minute: int
    second: int
    style: TimestampStyle = field(default=TimestampStyle.T_SEPARATED, compare=False)

    def __post_init__(self) -> None:
        if not _in_range(self.year, self.month, self.day, self.hour, self.minute, self.second):
            raise InvalidTimestamp(InvalidTimestamp.OUT_OF_RANGE, str(self.key()))

    def key(self) -> tuple[int, int, int, int, int, int]:
        return (self.year, self.month, self.day, self.hour, self.minute, self.second)

    def to_datetime(self) -> datetime:
        return datetime(*self.key())

    @classmethod
    def from_datetime(cls, dt: datetime, style: TimestampStyle = TimestampStyle.T_SEPARATED) -> "Timestamp":
        return cls(dt.year, dt.month, dt.day, dt.hour, dt.minute, dt.second, style)

    def shifted(self, seconds: int) -> "Timestamp":
        return Timestamp.from_datetime(self.to_datetime() + timedelta(seconds=seconds), self.style)

    def __str__(self) -> str:
        return format_timestamp(self)


def _in_range(year: int, month: int, day: int, hour: int, minute: int, second: int) -> bool:
    if not 1 <= year <= 9999 or not 1 <= month <= 12:
        return False
    return 1 <= day <= days_in_month(year, month) and hour < 24 and minute < 60 and second < 60 and min(hour, minute, second) >= 0


@dataclass(frozen=True)
class FieldSchema:
    """Which timestamp notations are legal and how fields are delimited.

    ``timestamp_suffix`` is a literal glued to the end of the timestamp field
    (CBS logs write ``2016-09-28 04:30:31,``). ``field_count`` is the minimum
    number of whitespace fields a line must carry, counting the timestamp as
    one; fields past the event code all belong to the description.
    """

    timestamp_formats: tuple[TimestampStyle, ...] = (
        TimestampStyle.T_SEPARATED,
        TimestampStyle.SPACE_SEPARATED,
        TimestampStyle.COMPACT,
    )
    separator: str = " "
    field_count: int = 3
    timestamp_suffix: str = ""

    def __post_init__(self) -> None:
        if self.field_count < 3:
            raise ValueError("field_count must be at least 3")
        if not self.timestamp_formats:
            raise ValueError("at least one timestamp format is required")
        if not self.separator or self.separator.strip():
            raise ValueError("separator must be non-empty whitespace")
        if any(ch.isspace() for ch in self.timestamp_suffix):
            raise ValueError("timestamp_suffix may not contain whitespace")

    @classmethod
    def from_config(cls, path: str | Path) -> "FieldSchema":
        """Load ``timestamp_formats``, ``field_count`` and ``timestamp_suffix`` keys."""
        return cls.from_mapping(read_key_values(path))

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "FieldSchema":
        kwargs: dict = {}
        if "timestamp_formats" in values:
            names = [n.strip() for n in values["timestamp_formats"].split(",") if n.strip()]
            kwargs["timestamp_formats"] = tuple(_style_by_name(n) for n in names)
        if "field_count" in values:
            kwargs["field_count"] = int(values["field_count"])
        if "timestamp_suffix" in values:
            kwargs["timestamp_suffix"] = values["timestamp_suffix"]
        unknown = set(values) - {"timestamp_formats", "field_count", "timestamp_suffix"}
        if unknown:
            raise ValueError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**kwargs)

    def to_mapping(self) -> dict[str, str]:
        return {
            "timestamp_formats": ",".join(s.name for s in self.timestamp_formats),
            "field_count": str(self.field_count),
            "timestamp_suffix": self.timestamp_suffix,
        }


def _style_by_name(name: str) -> TimestampStyle:
    key = name.strip().upper().replace("-", "_")
    aliases = {"T": "T_SEPARATED", "SPACE": "SPACE_SEPARATED", "ISO": "T_SEPARATED"}
    try:
        return TimestampStyle[aliases.get(key, key)]
    except KeyError:
        raise ValueError(f"unknown timestamp format {name!r}") from None


DEFAULT_SCHEMA = FieldSchema()
CBS_SCHEMA = FieldSchema(timestamp_formats=(TimestampStyle.SPACE_SEPARATED,), timestamp_suffix=",")


@dataclass(frozen=True)
class LogEntry:
    timestamp: Timestamp
    event_code: str
    description: str

    def __post_init__(self) -> None:
        if not self.event_code or any(ch.isspace() for ch in self.event_code):
            raise ValueError(f"event code must be a non-empty token: {self.event_code!r}")
        if "\n" in self.description or "\r" in self.description:
            raise ValueError("description may not contain line breaks")


@dataclass(frozen=True)
class LogFile:
    entries: tuple[LogEntry, ...] = ()
    declared_order: Order = Order.UNKNOWN

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[LogEntry]:
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def timestamps(self) -> list[Timestamp]:
        return [e.timestamp for e in self.entries]

    @property
    def event_codes(self) -> list[str]:
        return [e.event_code for e in self.entries]


def parse_timestamp(s: str, schema: FieldSchema = DEFAULT_SCHEMA) -> Timestamp:
    if not s:
        raise InvalidTimestamp(InvalidTimestamp.BAD_LENGTH, s)
    suffix = schema.timestamp_suffix
    body = s
    if suffix:
        if not s.endswith(suffix):
            raise InvalidTimestamp(InvalidTimestamp.BAD_LENGTH, s)
        body = s[: -len(suffix)]

    candidates = [st for st in schema.timestamp_formats if len(_TEMPLATES[st]) == len(body)]
    if not candidates:
        raise InvalidTimestamp(InvalidTimestamp.BAD_LENGTH, s)
    for style in candidates:
        if _matches(body, _TEMPLATES[style]):
            parts = [int(body[a:b]) for a, b in _SLICES[style]]
            if not _in_range(*parts):
                raise InvalidTimestamp(InvalidTimestamp.OUT_OF_RANGE, s)
            return Timestamp(*parts, style=style)
    raise InvalidTimestamp(InvalidTimestamp.NON_DIGIT, s)


def _matches(text: str, template: str) -> bool:
    for ch, slot in zip(text, template):
        if slot == "d":
            if not ("0" <= ch <= "9"):
                return False
        elif ch != slot:
            return False
    return True


def format_timestamp(ts: Timestamp, schema: FieldSchema | None = None) -> str:
    y, mo, d, h, mi, s = ts.key()
    if ts.style is TimestampStyle.COMPACT:
        text = f"{y:04d}{mo:02d}{d:02d}T{h:02d}{mi:02d}{s:02d}"
    else:
        sep = "T" if ts.style is TimestampStyle.T_SEPARATED else " "
        text = f"{y:04d}-{mo:02d}-{d:02d}{sep}{h:02d}:{mi:02d}:{s:02d}"
    if schema is not None:
        text += schema.timestamp_suffix
    return text


def cleanse_whitespace(line: str, separator: str = " ") -> str:
    """Collapse every run of horizontal whitespace to ``separator`` and trim the ends."""
    return _HSPACE.sub(separator, line).strip()


def _timestamp_width(fields: list[str], schema: FieldSchema) -> int:
    """How many whitespace fields the leading timestamp occupies (1 or 2)."""
    if TimestampStyle.SPACE_SEPARATED in schema.timestamp_formats and len(fields) >= 2:
        head = fields[0]
        if len(head) == 10 and _matches(head, "dddd-dd-dd"):
            return 2
    return 1


def parse_entry(line: str, schema: FieldSchema = DEFAULT_SCHEMA) -> LogEntry:
    fields = line.split()
    width = _timestamp_width(fields, schema)
    # One logical timestamp field plus the rest.
    logical = len(fields) - width + 1 if fields else 0
    if logical < schema.field_count:
        raise MissingField(logical, schema.field_count, line)
    if not any(ch.isdigit() for ch in fields[0]):
        # Leading token cannot be a timestamp at all: the field is absent.
        raise MissingField(logical - 1, schema.field_count, line)
    ts = parse_timestamp(" ".join(fields[:width]), schema)
    return LogEntry(ts, fields[width], " ".join(fields[width + 1:]))


def serialize_entry(e: LogEntry, schema: FieldSchema = DEFAULT_SCHEMA) -> str:
    sep = schema.separator
    parts = [format_timestamp(e.timestamp, schema), e.event_code]
    if e.description:
        parts.append(e.description)
    return sep.join(parts)


def read_lines(path: str | Path) -> Iterator[str]:
    """Yield lines of a UTF-8 log file with '\\n' or '\\r\\n' endings stripped."""
    with open(path, encoding="utf-8", newline="") as fh:
        for raw in fh:
            yield raw.rstrip("\r\n")


def read_log_file(
    path: str | Path, schema: FieldSchema = DEFAULT_SCHEMA, order: Order = Order.UNKNOWN
) -> tuple[LogFile, list[tuple[int, LogFormatError]]]:
    """Parse a whole file; unparseable lines are returned as ``(index, error)`` pairs."""
    entries: list[LogEntry] = []
    errors: list[tuple[int, LogFormatError]] = []
    for i, line in enumerate(read_lines(path)):
        if not line.strip():
            continue
        try:
            entries.append(parse_entry(line, schema))
        except LogFormatError as exc:
            errors.append((i, exc))
    return LogFile(tuple(entries), order), errors


def write_log_file(path: str | Path, entries: Iterable[LogEntry], schema: FieldSchema = DEFAULT_SCHEMA) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(serialize_entry(e, schema) + "\n")
