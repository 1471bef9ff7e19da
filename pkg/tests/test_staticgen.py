import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loggan.logmodel import CBS_SCHEMA, LogFile, Order, Timestamp, TimestampStyle, parse_entry, serialize_entry
from loggan.simulate import simulate_app, simulate_cbs
from loggan.staticgen import (
    GenTemplate,
    default_template,
    generate_static,
    load_template,
    save_template,
    template_from_entries,
)
from loggan.validator import (
    CoherenceRule,
    CoherenceRuleSet,
    check_chronology,
    check_coherence,
    check_syntactic,
    chunk_file,
    mine_rules,
)


def test_zero_entries():
    assert len(generate_static(default_template(), 0, seed=1)) == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 1000), st.sampled_from([Order.ASCENDING, Order.DESCENDING]))
def test_always_syntactic_and_chronological(seed, n, order):
    t = default_template()
    f = generate_static(t, n, seed, order)
    assert len(f) == n and f.declared_order is order
    lines = [serialize_entry(e, t.schema) for e in f]
    rates = check_syntactic(lines, t.schema).pass_rates
    assert all(r == 1.0 for r in rates.values())
    ok, v = check_chronology(f, order)
    assert ok and not v
    assert check_chronology(f, Order.AUTO)[0]


def test_large_n():
    f = generate_static(default_template(), 10_000, seed=99)
    assert check_chronology(f, Order.ASCENDING)[0]


def test_ties_occur():
    f = generate_static(default_template(), 2000, seed=5)
    ts = f.timestamps
    assert any(a == b for a, b in zip(ts, ts[1:]))


def test_geometric_mean_interarrival():
    t = default_template()
    f = generate_static(t, 20_000, seed=3)
    span = (f.timestamps[-1].to_datetime() - f.timestamps[0].to_datetime()).total_seconds()
    mean = span / (len(f) - 1)
    # geometric on {0,1,..} with mean 2 has sd sqrt(2*3); 5 sigma of the mean over 20k draws
    assert abs(mean - t.mean_interarrival) < 5 * np.sqrt(6 / 20_000)


def test_deterministic_bytes():
    t = default_template()
    a = [serialize_entry(e, t.schema) for e in generate_static(t, 300, seed=42)]
    b = [serialize_entry(e, t.schema) for e in generate_static(t, 300, seed=42)]
    c = [serialize_entry(e, t.schema) for e in generate_static(t, 300, seed=43)]
    assert a == b and a != c


def test_rule_injection():
    rules = CoherenceRuleSet([CoherenceRule("PSTART", "PWRITE")])
    for seed in range(30):
        f = generate_static(default_template(), 50, seed, rules=rules)
        assert check_coherence(f, rules)[0]
        assert check_chronology(f)[0]


def test_rule_injection_descending():
    rules = CoherenceRuleSet([CoherenceRule("PSTART", "PWRITE"), CoherenceRule("PSTART", "PSTOP")])
    f = generate_static(default_template(), 200, 4, Order.DESCENDING, rules)
    assert check_coherence(f, rules)[0]


def test_cyclic_rules_rejected():
    rules = [CoherenceRule("PSTART", "PWRITE"), CoherenceRule("PWRITE", "PSTART")]
    with pytest.raises(ValueError):
        generate_static(default_template(), 20, 1, rules=rules)


def test_template_invariants():
    start = Timestamp(2021, 1, 1, 0, 0, 0)
    with pytest.raises(ValueError):
        GenTemplate(("A",), (0.0,), ("x",), start)
    with pytest.raises(ValueError):
        GenTemplate(("A",), (-1.0,), ("x",), start)
    with pytest.raises(ValueError):
        GenTemplate(("A",), (1.0,), ("x",), start, mean_interarrival=0)
    with pytest.raises(ValueError):
        GenTemplate(("A",), (1.0,), (), start)


def test_template_file_round_trip(tmp_path):
    t = default_template()
    p = tmp_path / "t.cfg"
    save_template(t, p)
    back = load_template(p)
    assert back == t and back.code_patterns == t.code_patterns
    a = [serialize_entry(e, t.schema) for e in generate_static(t, 100, seed=1)]
    b = [serialize_entry(e, back.schema) for e in generate_static(back, 100, seed=1)]
    assert a == b


def test_template_file_format(tmp_path):
    p = tmp_path / "t.cfg"
    p.write_text("# flog-style\nstart = 2021-08-30T10:49:58\nmean_interarrival = 2\ncodes = EFW:3, EFR:1\n"
                 "| Unexpected event {id}\nEFW | Write failed on {word}\n")
    t = load_template(p)
    f = generate_static(t, 40, seed=2)
    assert {e.event_code for e in f} <= {"EFW", "EFR"}
    assert all(e.description.startswith("Write failed on ") for e in f if e.event_code == "EFW")
    assert f.timestamps[0] == Timestamp(2021, 8, 30, 10, 49, 58)


def test_template_from_cbs_corpus_with_mined_rules():
    entries = [parse_entry(l, CBS_SCHEMA) for l in simulate_cbs(1500, seed=6)]
    t = template_from_entries(entries, CBS_SCHEMA)
    assert t.start.style is TimestampStyle.SPACE_SEPARATED
    rules = mine_rules(chunk_file(LogFile(tuple(entries)), 100), 2)
    f = generate_static(t, 1000, 8, rules=rules)
    lines = [serialize_entry(e, CBS_SCHEMA) for e in f]
    assert all(r == 1.0 for r in check_syntactic(lines, CBS_SCHEMA).pass_rates.values())
    assert check_chronology(f)[0] and check_coherence(f, rules)[0]


def test_template_from_app_corpus():
    entries = [parse_entry(l) for l in simulate_app(800, seed=6)]
    t = template_from_entries(entries)
    assert set(t.codes) == {e.event_code for e in entries}
    f = generate_static(t, 300, 1)
    assert check_chronology(f)[0]
