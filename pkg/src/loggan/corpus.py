"""Corpus ingestion: disjoint random train/test samples and token vocabularies."""

from __future__ import annotations

import enum
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from loggan.logmodel import (
    DEFAULT_SCHEMA,
    FieldSchema,
    LogEntry,
    LogFile,
    LogFormatError,
    Order,
    cleanse_whitespace,
    parse_entry,
    read_lines,
    serialize_entry,
)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

DEFAULT_MAX_LEN = {"word": 64, "char": 160}


class InsufficientData(ValueError):
    def __init__(self, available: int, requested: int):
        super().__init__(f"only {available} parseable lines available, {requested} requested")
        self.available = available
        self.requested = requested


class TokenMode(enum.Enum):
    WORD = "word"
    CHAR = "char"


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[LogEntry, ...]
    test: tuple[LogEntry, ...]
    seed: int
    train_indices: tuple[int, ...] = ()
    test_indices: tuple[int, ...] = ()
    schema: FieldSchema = DEFAULT_SCHEMA

    def train_lines(self) -> list[str]:
        return [serialize_entry(e, self.schema) for e in self.train]

    def test_lines(self) -> list[str]:
        return [serialize_entry(e, self.schema) for e in self.test]

    def train_file(self) -> LogFile:
        return LogFile(self.train, Order.UNKNOWN)

    def test_file(self) -> LogFile:
        return LogFile(self.test, Order.UNKNOWN)

    def write_manifest(self, path: str | Path) -> None:
        """Plain-text manifest: one ``train <index>`` / ``test <index>`` line per entry."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# seed {self.seed}\n")
            for i in self.train_indices:
                fh.write(f"train {i}\n")
            for i in self.test_indices:
                fh.write(f"test {i}\n")


def read_manifest(path: str | Path) -> tuple[list[int], list[int]]:
    train, test = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        part, idx = line.split()
        (train if part == "train" else test).append(int(idx))
    return train, test


def sample_split(
    source: Iterable[str] | str | Path,
    n_train: int,
    n_test: int,
    seed: int,
    schema: FieldSchema = DEFAULT_SCHEMA,
) -> CorpusSplit:
    """Draw disjoint uniform samples of parseable lines in one pass.

    ``source`` is either a path or an iterable of raw lines. Reservoir
    sampling (algorithm R) picks ``n_train + n_test`` line indices, a seeded
    shuffle deals them into train and test, and each part is returned in
    source order so that a chronological source yields chronological splits.
    """
    if n_train < 0 or n_test < 0:
        raise ValueError("sample sizes must be non-negative")
    lines = read_lines(source) if isinstance(source, (str, Path)) else source
    k = n_train + n_test
    rng = random.Random(seed)
    reservoir: list[tuple[int, LogEntry]] = []
    seen = 0
    for idx, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            entry = parse_entry(line, schema)
        except LogFormatError:
            continue
        if seen < k:
            reservoir.append((idx, entry))
        else:
            j = rng.randint(0, seen)
            if j < k:
                reservoir[j] = (idx, entry)
        seen += 1
    if seen < k:
        raise InsufficientData(seen, k)
    rng.shuffle(reservoir)
    train = sorted(reservoir[:n_train], key=lambda p: p[0])
    test = sorted(reservoir[n_train:], key=lambda p: p[0])
    return CorpusSplit(
        train=tuple(e for _, e in train),
        test=tuple(e for _, e in test),
        seed=seed,
        train_indices=tuple(i for i, _ in train),
        test_indices=tuple(i for i, _ in test),
        schema=schema,
    )


def tokenize(line: str, mode: TokenMode) -> list[str]:
    if mode is TokenMode.WORD:
        cleaned = cleanse_whitespace(line)
        return cleaned.split(" ") if cleaned else []
    return list(line.rstrip("\r\n"))


@dataclass
class TokenSequence:
    """Token ids of one line; complete sequences end with EOS."""

    ids: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def complete(self) -> bool:
        return bool(self.ids) and self.ids[-1] == EOS


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    mode: TokenMode = TokenMode.WORD

    def __post_init__(self) -> None:
        if tuple(self.tokens[:4]) != RESERVED:
            raise ValueError("reserved tokens must occupy ids 0..3")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id_of(self, token: str) -> int:
        return self._index.get(token, UNK)

    def token_of(self, i: int) -> str:
        return self.tokens[i]

    @property
    def joiner(self) -> str:
        return " " if self.mode is TokenMode.WORD else ""

    def to_text(self) -> str:
        return "\n".join([self.mode.value] + list(self.tokens[4:])) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        mode = TokenMode(lines[0])
        return cls(RESERVED + tuple(lines[1:]), mode)


def build_vocabulary(entries: Sequence[LogEntry | str], mode: TokenMode = TokenMode.WORD, min_freq: int = 2,
                     schema: FieldSchema = DEFAULT_SCHEMA) -> Vocabulary:
    """Vocabulary over tokens seen at least ``min_freq`` times.

    Ids are assigned by descending frequency, ties broken lexicographically,
    after the four reserved ids. Entries may be parsed ``LogEntry`` objects
    or raw lines.
    """
    counts: Counter[str] = Counter()
    for e in entries:
        line = serialize_entry(e, schema) if isinstance(e, LogEntry) else e
        counts.update(tokenize(line, mode))
    kept = sorted((t for t, c in counts.items() if c >= min_freq and t not in RESERVED),
                  key=lambda t: (-counts[t], t))
    return Vocabulary(RESERVED + tuple(kept), mode)


def encode(line: str, v: Vocabulary, max_len: int | None = None) -> TokenSequence:
    """Token ids followed by EOS; BOS is not stored and is prepended at model input."""
    if max_len is None:
        max_len = DEFAULT_MAX_LEN[v.mode.value]
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    ids = [v.id_of(t) for t in tokenize(line, v.mode)][: max_len - 1]
    return TokenSequence(ids + [EOS])


def decode(t: TokenSequence | Sequence[int], v: Vocabulary) -> str:
    ids = t.ids if isinstance(t, TokenSequence) else t
    out: list[str] = []
    for i in ids:
        i = int(i)
        if i == EOS:
            break
        if i in (BOS, PAD):
            continue
        out.append(v.token_of(i))
    return v.joiner.join(out)


def pad_batch(seqs: Sequence[TokenSequence | Sequence[int]], length: int | None = None) -> np.ndarray:
    """Stack id lists into a ``(batch, length)`` int array, right-padded with PAD."""
    rows = [s.ids if isinstance(s, TokenSequence) else list(s) for s in seqs]
    width = length if length is not None else max((len(r) for r in rows), default=0)
    out = np.full((len(rows), width), PAD, dtype=np.int64)
    for i, r in enumerate(rows):
        r = r[:width]
        out[i, : len(r)] = r
    return out


def encode_batch(lines: Sequence[str], v: Vocabulary, max_len: int | None = None) -> np.ndarray:
    return pad_batch([encode(line, v, max_len) for line in lines])
