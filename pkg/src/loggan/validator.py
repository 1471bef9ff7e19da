"""Executable checks for syntactic (per-entry) and semantic (per-file) log properties.

Syntactic: date/time, event identifier, event description.
Semantic: chronology (non-strict monotone timestamps) and event coherence
(a dependent event code only after its precondition code).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from loggan.logmodel import (
    DEFAULT_SCHEMA,
    FieldSchema,
    InvalidTimestamp,
    LogEntry,
    LogFile,
    Order,
    TimestampStyle,
    parse_timestamp,
)

SYNTACTIC_PROPERTIES = ("date_time", "event_id", "description")
SEMANTIC_PROPERTIES = ("chronology", "coherence")

MAX_CODE_LENGTH = 32
LEXICON_MIN_COUNT = 5


@dataclass(frozen=True)
class CoherenceRule:
    precondition_code: str
    dependent_code: str
    support: int = 0

    def __post_init__(self) -> None:
        if self.precondition_code == self.dependent_code:
            raise ValueError("a rule needs two distinct event codes")


@dataclass(frozen=True)
class Violation:
    index: int
    prop: str
    reason: str


@dataclass(frozen=True)
class EntryVerdict:
    date_time_ok: bool
    event_id_ok: bool
    description_ok: bool


@dataclass
class PropertyReport:
    entries: list[EntryVerdict] = field(default_factory=list)
    chronology_ok: bool | None = None
    coherence_ok: bool | None = None
    violations: list[Violation] = field(default_factory=list)

    @property
    def pass_rates(self) -> dict[str, float]:
        n = len(self.entries)
        rates = {}
        for prop in SYNTACTIC_PROPERTIES:
            failed = sum(1 for v in self.violations if v.prop == prop)
            rates[prop] = 1.0 - failed / n if n else 1.0
        return rates

    @property
    def syntactic_ok(self) -> bool:
        return all(v.date_time_ok and v.event_id_ok and v.description_ok for v in self.entries)

    def to_dict(self) -> dict:
        return {
            "n_entries": len(self.entries),
            "pass_rates": self.pass_rates,
            "chronology_ok": self.chronology_ok,
            "coherence_ok": self.coherence_ok,
            "violations": [asdict(v) for v in self.violations],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class CoherenceRuleSet(tuple):
    """Ordered, immutable collection of :class:`CoherenceRule`."""

    def __new__(cls, rules: Iterable[CoherenceRule] = ()):
        return super().__new__(cls, tuple(rules))

    def to_text(self) -> str:
        return "".join(f"{r.precondition_code}\t{r.dependent_code}\t{r.support}\n" for r in self)

    @classmethod
    def from_text(cls, text: str) -> "CoherenceRuleSet":
        rules = []
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"rule line {n}: expected PRECONDITION<TAB>DEPENDENT<TAB>SUPPORT")
            rules.append(CoherenceRule(parts[0], parts[1], int(parts[2])))
        return cls(rules)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CoherenceRuleSet":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------- syntactic

def build_code_lexicon(entries: Iterable[LogEntry], min_count: int = LEXICON_MIN_COUNT) -> frozenset[str]:
    counts = Counter(e.event_code for e in entries)
    return frozenset(c for c, k in counts.items() if k >= min_count)


def _code_shape_ok(code: str) -> bool:
    return 1 <= len(code) <= MAX_CODE_LENGTH and not any(ch.isspace() for ch in code)


def check_line(line: str, schema: FieldSchema = DEFAULT_SCHEMA,
               lexicon: frozenset[str] | None = None) -> tuple[EntryVerdict, list[str]]:
    """Verdict for one raw line plus human-readable failure reasons.

    Fields are cut at the schema separator exactly as written, so stray
    leading or doubled separators before the description are flagged; run
    :func:`~loggan.logmodel.cleanse_whitespace` first to judge content alone.
    """
    sep = schema.separator
    fields = line.split(sep)
    width = 1
    if (TimestampStyle.SPACE_SEPARATED in schema.timestamp_formats and len(fields) >= 2
            and len(fields[0]) == 10 and "-" in fields[0]):
        width = 2
    reasons: list[str] = []

    ts_text = sep.join(fields[:width])
    try:
        parse_timestamp(ts_text, schema)
        date_ok = True
    except InvalidTimestamp as exc:
        date_ok = False
        reasons.append(f"date_time: {exc.reason}")

    # an empty header token means a doubled or leading separator: every later field is shifted
    shifted_before_code = "" in fields[:width]
    code = fields[width] if len(fields) > width else ""
    if shifted_before_code:
        code_ok = False
        reasons.append("event_id: shifted by a repeated separator")
    else:
        code_ok = code in lexicon if lexicon else _code_shape_ok(code)
        if not code_ok:
            reasons.append(f"event_id: {code!r} " + ("not in lexicon" if lexicon else "malformed"))

    desc = sep.join(fields[width + 1:])
    extra_needed = schema.field_count - 2
    desc_ok = "" not in fields[:width + 1] and len(desc.split()) >= extra_needed
    if not desc_ok:
        reasons.append("description: missing" if "" not in fields[:width + 1] else
                       "description: shifted by a repeated separator")
    return EntryVerdict(date_ok, code_ok, desc_ok), reasons


def check_syntactic(lines: Sequence[str], schema: FieldSchema = DEFAULT_SCHEMA,
                    lexicon: frozenset[str] | None = None) -> PropertyReport:
    report = PropertyReport()
    for i, line in enumerate(lines):
        verdict, reasons = check_line(line, schema, lexicon)
        report.entries.append(verdict)
        for r in reasons:
            prop, _, detail = r.partition(": ")
            report.violations.append(Violation(i, prop, detail))
    return report


# --------------------------------------------------------------------------- semantic

def detect_direction(file: LogFile) -> Order:
    """Direction of the first unequal adjacent pair; ASCENDING if none."""
    ts = file.timestamps
    for a, b in zip(ts, ts[1:]):
        if a != b:
            return Order.ASCENDING if a < b else Order.DESCENDING
    return Order.ASCENDING


def check_chronology(file: LogFile, order: Order = Order.AUTO) -> tuple[bool, list[Violation]]:
    """Non-strict monotonicity; a violation is reported at every inverted adjacent pair."""
    if order in (Order.AUTO, Order.UNKNOWN):
        order = detect_direction(file)
    ts = file.timestamps
    violations = []
    for i in range(1, len(ts)):
        bad = ts[i] < ts[i - 1] if order is Order.ASCENDING else ts[i] > ts[i - 1]
        if bad:
            violations.append(Violation(i, "chronology", f"{ts[i]} after {ts[i - 1]} in {order.value} file"))
    return not violations, violations


def file_direction(file: LogFile) -> Order:
    if file.declared_order in (Order.ASCENDING, Order.DESCENDING):
        return file.declared_order
    return detect_direction(file)


def _log_time_positions(file: LogFile) -> list[int]:
    positions = list(range(len(file)))
    if file_direction(file) is Order.DESCENDING:
        positions.reverse()
    return positions


def check_coherence(file: LogFile, rules: Iterable[CoherenceRule]) -> tuple[bool, list[Violation]]:
    """Every occurrence of a dependent code needs an earlier occurrence of its precondition.

    Earlier means earlier in log time, so a descending file is read bottom-up.
    """
    rules = list(rules)
    if not rules:
        return True, []
    codes = file.event_codes
    positions = _log_time_positions(file)
    by_dependent: dict[str, list[CoherenceRule]] = {}
    for r in rules:
        by_dependent.setdefault(r.dependent_code, []).append(r)
    seen: set[str] = set()
    violations = []
    for i in positions:
        code = codes[i]
        for r in by_dependent.get(code, ()):
            if r.precondition_code not in seen:
                violations.append(Violation(i, "coherence", f"{code} before any {r.precondition_code}"))
        seen.add(code)
    violations.sort(key=lambda v: v.index)
    return not violations, violations


def mine_rules(corpus: Sequence[LogFile], min_support: int = 1) -> CoherenceRuleSet:
    """Rules (A -> B) that hold in every file containing B, with B present in >= min_support files."""
    if not corpus:
        raise ValueError("cannot mine rules from an empty corpus")
    support: Counter[str] = Counter()
    # For each dependent code B, the set of codes seen before B's first occurrence, intersected across files.
    before_first: dict[str, set[str]] = {}
    for f in corpus:
        seen: set[str] = set()
        firsts: dict[str, set[str]] = {}
        codes = f.event_codes
        for code in (codes[i] for i in _log_time_positions(f)):
            if code not in firsts:
                firsts[code] = set(seen)
            seen.add(code)
        for code, prior in firsts.items():
            support[code] += 1
            if code in before_first:
                before_first[code] &= prior
            else:
                before_first[code] = prior
    rules = []
    for dep in sorted(before_first):
        if support[dep] < min_support:
            continue
        for pre in sorted(before_first[dep]):
            if pre != dep:
                rules.append(CoherenceRule(pre, dep, support[dep]))
    return CoherenceRuleSet(rules)


def chunk_file(file: LogFile, size: int) -> list[LogFile]:
    """Split one long file into consecutive windows, e.g. to mine rules from a single dump."""
    if size < 1:
        raise ValueError("chunk size must be positive")
    return [LogFile(file.entries[i:i + size], file.declared_order) for i in range(0, len(file), size)]


def validate_file(lines: Sequence[str], entries: LogFile, schema: FieldSchema = DEFAULT_SCHEMA,
                  rules: Iterable[CoherenceRule] = (), order: Order = Order.AUTO,
                  lexicon: frozenset[str] | None = None) -> PropertyReport:
    """Syntactic verdicts over ``lines`` plus semantic verdicts over the parsed ``entries``."""
    report = check_syntactic(lines, schema, lexicon)
    chrono_ok, chrono_v = check_chronology(entries, order)
    if order in (Order.ASCENDING, Order.DESCENDING):
        # An explicit direction also fixes which way log time runs for coherence.
        entries = LogFile(entries.entries, order)
    coh_ok, coh_v = check_coherence(entries, rules)
    report.chronology_ok = chrono_ok
    report.coherence_ok = coh_ok
    report.violations.extend(chrono_v)
    report.violations.extend(coh_v)
    return report
