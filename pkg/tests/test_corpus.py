import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loggan.corpus import (
    BOS,
    EOS,
    PAD,
    RESERVED,
    UNK,
    InsufficientData,
    TokenMode,
    TokenSequence,
    Vocabulary,
    build_vocabulary,
    decode,
    encode,
    encode_batch,
    pad_batch,
    read_manifest,
    sample_split,
)
from loggan.logmodel import cleanse_whitespace


def toy_lines(n):
    return [f"20210830T1049{i % 60:02d} EV{i % 7} line number {i}" for i in range(n)]


class TestSampleSplit:
    def test_disjoint_and_deterministic(self):
        lines = toy_lines(100)
        a = sample_split(lines, 50, 20, seed=7)
        b = sample_split(lines, 50, 20, seed=7)
        assert len(a.train) == 50 and len(a.test) == 20
        idx = set(a.train_indices) | set(a.test_indices)
        assert len(idx) == 70
        assert a == b
        assert sample_split(lines, 50, 20, seed=8).train_indices != a.train_indices

    def test_splits_keep_source_order(self):
        s = sample_split(toy_lines(100), 30, 30, seed=1)
        assert list(s.train_indices) == sorted(s.train_indices)
        assert list(s.test_indices) == sorted(s.test_indices)

    def test_insufficient(self):
        with pytest.raises(InsufficientData) as exc:
            sample_split(toy_lines(10), 50, 0, seed=0)
        assert exc.value.available == 10

    def test_unparseable_lines_do_not_count(self):
        lines = toy_lines(5) + ["garbage", ""] * 5
        with pytest.raises(InsufficientData) as exc:
            sample_split(lines, 6, 0, seed=0)
        assert exc.value.available == 5

    def test_reads_path_and_writes_manifest(self, tmp_path):
        src = tmp_path / "c.log"
        src.write_text("\n".join(toy_lines(40)) + "\n")
        s = sample_split(src, 10, 5, seed=3)
        s.write_manifest(tmp_path / "m.txt")
        tr, te = read_manifest(tmp_path / "m.txt")
        assert tr == list(s.train_indices) and te == list(s.test_indices)
        assert s.train_lines()[0] == cleanse_whitespace(toy_lines(40)[s.train_indices[0]])

    def test_reservoir_uniformity_5_sigma(self):
        lines = toy_lines(20)
        reps, k = 10_000, 5
        counts = np.zeros(20)
        for seed in range(reps):
            for i in sample_split(lines, k, 0, seed=seed).train_indices:
                counts[i] += 1
        p = k / 20
        sigma = math.sqrt(reps * p * (1 - p))
        assert np.all(np.abs(counts - reps * p) < 5 * sigma), counts


class TestVocabulary:
    def test_hand_count(self):
        v = build_vocabulary(["a b", "a c"], TokenMode.WORD, min_freq=1)
        assert len(v) == 7
        assert v.tokens[:4] == RESERVED
        assert v.tokens[4:] == ("a", "b", "c")

    def test_min_freq_two(self):
        v = build_vocabulary(["a b", "a c"], TokenMode.WORD, min_freq=2)
        assert v.tokens[4:] == ("a",)
        assert encode("a b c", v).ids == [4, UNK, UNK, EOS]

    def test_degenerate(self):
        assert build_vocabulary(["   ", ""], TokenMode.WORD, min_freq=1).tokens == RESERVED

    def test_order_frequency_then_lexicographic(self):
        v = build_vocabulary(["z y x", "z y", "z w"], TokenMode.WORD, min_freq=1)
        assert v.tokens[4:] == ("z", "y", "w", "x")

    def test_reserved_fixed(self):
        assert (PAD, BOS, EOS, UNK) == (0, 1, 2, 3)
        with pytest.raises(ValueError):
            Vocabulary(("a",) + RESERVED)

    def test_text_round_trip(self):
        for mode in TokenMode:
            v = build_vocabulary(toy_lines(50), mode, min_freq=1)
            assert Vocabulary.from_text(v.to_text()) == v

    def test_char_mode(self):
        v = build_vocabulary(["ab  a"], TokenMode.CHAR, min_freq=1)
        assert set(v.tokens[4:]) == {"a", "b", " "}
        assert decode(encode("ab  a", v), v) == "ab  a"


class TestEncoding:
    def test_framing(self):
        v = Vocabulary(RESERVED + ("a", "b"))
        assert encode("a b", v).ids == [4, 5, EOS]
        assert encode("a b", v).complete

    def test_decode_empty(self):
        v = Vocabulary(RESERVED)
        assert decode(TokenSequence([EOS]), v) == ""

    def test_truncation(self):
        v = Vocabulary(RESERVED + ("a",))
        t = encode(" ".join(["a"] * 100), v, max_len=10)
        assert len(t) == 10 and t.ids[-1] == EOS and t.complete

    @given(st.lists(st.sampled_from(["alpha", "b", "c9", "0x1F", "d-e"]), min_size=0, max_size=12),
           st.sampled_from([" ", "  ", "\t", " \t "]))
    def test_word_round_trip_is_cleanse(self, words, sep):
        v = Vocabulary(RESERVED + ("alpha", "b", "c9", "0x1F", "d-e"))
        line = "  " + sep.join(words) + " "
        assert decode(encode(line, v, max_len=64), v) == cleanse_whitespace(line)

    def test_no_unk_for_frequent_tokens(self):
        lines = toy_lines(200)
        v = build_vocabulary(lines, TokenMode.WORD, min_freq=2)
        counts = {}
        for l in lines:
            for t in l.split():
                counts[t] = counts.get(t, 0) + 1
        for l in lines:
            for t, i in zip(l.split(), encode(l, v).ids):
                assert (i == UNK) == (counts[t] < 2)

    def test_pad_batch(self):
        b = pad_batch([[4, EOS], [4, 5, 6, EOS]])
        assert b.shape == (2, 4) and b[0].tolist() == [4, EOS, PAD, PAD]
        v = Vocabulary(RESERVED + ("a",))
        assert encode_batch(["a", "a a"], v).tolist() == [[4, EOS, PAD], [4, 4, EOS]]
