"""flog-style static log generator with chronology-preserving timestamps.

Entries are concatenations of an event code drawn from a weighted pool and a
description pattern whose ``{slot}`` markers are filled with random tokens.
Timestamps are not sampled per line: they advance from a start time by
geometric whole-second gaps, so the output is chronological by construction.
"""

from __future__ import annotations

import re
import string
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from loggan.logmodel import (
    DEFAULT_SCHEMA,
    FieldSchema,
    LogEntry,
    LogFile,
    Order,
    Timestamp,
    TimestampStyle,
    parse_timestamp,
)
from loggan.validator import CoherenceRule, check_coherence

SLOT = re.compile(r"\{(int|hex|word|id)\}")
_DIGIT_TOKEN = re.compile(r"\d")


@dataclass(frozen=True)
class GenTemplate:
    codes: tuple[str, ...]
    weights: tuple[float, ...]
    patterns: tuple[str, ...]
    start: Timestamp
    mean_interarrival: float = 1.0
    # Per-code pattern pools; codes missing here draw from ``patterns``.
    code_patterns: dict[str, tuple[str, ...]] = field(default_factory=dict, hash=False, compare=False)
    schema: FieldSchema = DEFAULT_SCHEMA

    def __post_init__(self) -> None:
        if not self.codes or len(self.codes) != len(self.weights):
            raise ValueError("need one weight per event code")
        if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
            raise ValueError("weights must be non-negative with positive sum")
        if self.mean_interarrival <= 0:
            raise ValueError("mean inter-arrival must be positive")
        for c in self.codes:
            if not c or any(ch.isspace() for ch in c):
                raise ValueError(f"bad event code {c!r}")
            if not self.patterns and not self.code_patterns.get(c):
                raise ValueError(f"no description pattern for code {c!r}")
        need = self.schema.field_count - 2
        for p in list(self.patterns) + [q for ps in self.code_patterns.values() for q in ps]:
            if "\n" in p or len(p.split()) < need:
                raise ValueError(f"pattern yields too few description fields: {p!r}")

    def pool_for(self, code: str) -> tuple[str, ...]:
        return self.code_patterns.get(code) or self.patterns


def _fill(pattern: str, rng: np.random.Generator) -> str:
    def sub(m: re.Match) -> str:
        kind = m.group(1)
        if kind == "int":
            return str(int(rng.integers(0, 100000)))
        if kind == "hex":
            return f"0x{int(rng.integers(0, 2**32)):08x}"
        if kind == "word":
            n = int(rng.integers(3, 11))
            return "".join(rng.choice(list(string.ascii_lowercase), n))
        alphabet = list(string.ascii_uppercase + string.digits)
        return "".join(rng.choice(alphabet, 8))
    return SLOT.sub(sub, pattern)


def _satisfy_rules(codes: list[str], rules: Sequence[CoherenceRule], rng: np.random.Generator) -> list[str]:
    """Overwrite earlier slots with precondition codes until every rule holds (log-time order)."""
    if not rules or not codes:
        return codes
    deps: dict[str, list[str]] = defaultdict(list)
    for r in rules:
        deps[r.dependent_code].append(r.precondition_code)
    _check_acyclic(deps)
    for _ in range(50 * len(codes) * len(rules) + 1):
        seen: set[str] = set()
        fixed = False
        for j, code in enumerate(codes):
            missing = [a for a in deps.get(code, ()) if a not in seen]
            if missing:
                a = missing[0]
                k = int(rng.integers(0, j)) if j > 0 else 0
                codes[k] = a
                fixed = True
                break
            seen.add(code)
        if not fixed:
            return codes
    raise RuntimeError("could not satisfy coherence rules")


def _check_acyclic(deps: dict[str, list[str]]) -> None:
    state: dict[str, int] = {}

    def visit(c: str) -> None:
        if state.get(c) == 1:
            raise ValueError(f"coherence rules are cyclic at {c!r}")
        if state.get(c) == 2:
            return
        state[c] = 1
        for a in deps.get(c, ()):
            visit(a)
        state[c] = 2

    for c in list(deps):
        visit(c)


def generate_static(t: GenTemplate, n: int, seed: int, order: Order = Order.ASCENDING,
                    rules: Sequence[CoherenceRule] | None = None) -> LogFile:
    if n < 0:
        raise ValueError("n must be non-negative")
    if order not in (Order.ASCENDING, Order.DESCENDING):
        raise ValueError("order must be ASCENDING or DESCENDING")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    p = np.asarray(t.weights, dtype=float)
    codes = [t.codes[i] for i in rng.choice(len(t.codes), size=n, p=p / p.sum())]
    codes = _satisfy_rules(codes, list(rules or ()), rng)

    # Geometric gaps on {0, 1, 2, ...} with mean mean_interarrival.
    gaps = rng.geometric(1.0 / (1.0 + t.mean_interarrival), size=n) - 1
    offsets = np.cumsum(gaps) - (gaps[0] if n else 0)
    entries = []
    for code, off in zip(codes, offsets):
        pool = t.pool_for(code)
        desc = _fill(pool[int(rng.integers(0, len(pool)))], rng)
        entries.append(LogEntry(t.start.shifted(int(off)), code, desc))
    if order is Order.DESCENDING:
        entries.reverse()
    out = LogFile(tuple(entries), order)
    if rules:
        ok, _ = check_coherence(out, rules)
        assert ok, "rule injection left violations"
    return out


def _generalize(description: str) -> str:
    out = []
    for tok in description.split():
        if _DIGIT_TOKEN.search(tok):
            out.append("{hex}" if "0x" in tok.lower() else "{int}" if tok.isdigit() else "{id}")
        else:
            out.append(tok)
    return " ".join(out)


def template_from_entries(entries: Sequence[LogEntry], schema: FieldSchema = DEFAULT_SCHEMA,
                          max_patterns: int = 50) -> GenTemplate:
    """Derive a template from real entries: code frequencies, digit-bearing tokens turned into slots."""
    if not entries:
        raise ValueError("need at least one entry")
    counts = Counter(e.event_code for e in entries)
    codes = tuple(sorted(counts, key=lambda c: (-counts[c], c)))
    per_code: dict[str, Counter] = defaultdict(Counter)
    for e in entries:
        if len(e.description.split()) >= schema.field_count - 2:
            per_code[e.event_code][_generalize(e.description)] += 1
    code_patterns = {
        c: tuple(p for p, _ in sorted(per_code[c].items(), key=lambda kv: (-kv[1], kv[0]))[:max_patterns])
        for c in codes if per_code[c]
    }
    fallback = tuple(sorted({p for ps in code_patterns.values() for p in ps}))[:max_patterns] or ("event {id}",)
    ts = sorted(e.timestamp for e in entries)
    span = (ts[-1].to_datetime() - ts[0].to_datetime()).total_seconds()
    mean_gap = max(span / max(len(ts) - 1, 1), 0.1)
    return GenTemplate(
        codes=codes,
        weights=tuple(float(counts[c]) for c in codes),
        patterns=fallback,
        start=ts[0],
        mean_interarrival=mean_gap,
        code_patterns=code_patterns,
        schema=schema,
    )


def default_template(schema: FieldSchema = DEFAULT_SCHEMA) -> GenTemplate:
    style = schema.timestamp_formats[0]
    return GenTemplate(
        codes=("PSTART", "PREAD", "PWRITE", "EFR", "EFW", "PSTOP"),
        weights=(2.0, 5.0, 5.0, 1.0, 1.0, 2.0),
        patterns=("Process {int} event {id}",),
        code_patterns={
            "PSTART": ("Process {int} started: {word}.exe",),
            "PREAD": ("Process {int} read C:\\data\\{word}.dat",),
            "PWRITE": ("Process {int} wrote {int} bytes to C:\\data\\{word}.dat",),
            "EFR": ("Could not access file C:\\data\\{word}.dat",),
            "EFW": ("Write failed on C:\\data\\{word}.dat",),
            "PSTOP": ("Process {int} exited normally",),
        },
        start=Timestamp(2021, 8, 30, 10, 49, 58, style),
        mean_interarrival=2.0,
        schema=schema,
    )


# ------------------------------------------------------------------ template files

def load_template(path: str | Path, schema: FieldSchema | None = None) -> GenTemplate:
    """Read a template file.

    ``key = value`` lines set ``start``, ``mean_interarrival``, ``codes``
    (``EFW:3, EFR:1``) and optionally the schema keys. Pattern lines start
    with ``|`` (shared pool) or ``CODE |`` (pool for one code)::

        start = 2021-08-30T10:49:58
        mean_interarrival = 2
        codes = EFW:3, EFR:1
        | Unexpected event {id}
        EFW | Write failed on {word}
    """
    values: dict[str, str] = {}
    shared: list[str] = []
    per_code: dict[str, list[str]] = defaultdict(list)
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = re.match(r"^(\S*)\s*\|\s?(.*)$", line)
        if m and (line.startswith("|") or "=" not in m.group(1)):
            (per_code[m.group(1)] if m.group(1) else shared).append(m.group(2))
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected 'key = value' or a pattern line")
        k, _, v = line.partition("=")
        values[k.strip().lower()] = v.strip()
    if schema is None:
        schema_keys = {k: values.pop(k) for k in ("timestamp_formats", "field_count", "timestamp_suffix")
                       if k in values}
        schema = FieldSchema.from_mapping(schema_keys) if schema_keys else DEFAULT_SCHEMA
    pairs = [c.strip().split(":") for c in values.pop("codes").split(",") if c.strip()]
    codes = tuple(p[0].strip() for p in pairs)
    weights = tuple(float(p[1]) if len(p) > 1 else 1.0 for p in pairs)
    start_text = values.pop("start")
    start = _parse_start(start_text, schema)
    mean = float(values.pop("mean_interarrival", "1"))
    if values:
        raise ValueError(f"unknown template keys: {sorted(values)}")
    return GenTemplate(codes, weights, tuple(shared), start, mean,
                       {c: tuple(ps) for c, ps in per_code.items()}, schema)


def _parse_start(text: str, schema: FieldSchema) -> Timestamp:
    # The start time is written without the schema suffix; try every notation.
    loose = FieldSchema(timestamp_formats=tuple(TimestampStyle))
    ts = parse_timestamp(text, loose)
    style = ts.style if ts.style in schema.timestamp_formats else schema.timestamp_formats[0]
    return Timestamp(*ts.key(), style=style)


def save_template(t: GenTemplate, path: str | Path) -> None:
    lines = [
        f"start = {t.start}",
        f"mean_interarrival = {t.mean_interarrival:g}",
        "codes = " + ", ".join(f"{c}:{w:g}" for c, w in zip(t.codes, t.weights)),
    ]
    for k, v in t.schema.to_mapping().items():
        if v:
            lines.append(f"{k} = {v}")
    lines += [f"| {p}" for p in t.patterns]
    for c, ps in t.code_patterns.items():
        lines += [f"{c} | {p}" for p in ps]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
