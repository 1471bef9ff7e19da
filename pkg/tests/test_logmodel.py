import calendar
from datetime import datetime

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loggan.logmodel import (
    CBS_SCHEMA,
    DEFAULT_SCHEMA,
    FieldSchema,
    InvalidTimestamp,
    LogEntry,
    LogFormatError,
    MissingField,
    Timestamp,
    TimestampStyle,
    cleanse_whitespace,
    format_timestamp,
    parse_entry,
    parse_timestamp,
    read_log_file,
    serialize_entry,
    write_log_file,
)
from loggan.simulate import simulate_app, simulate_cbs


def reason(text, schema=DEFAULT_SCHEMA):
    with pytest.raises(InvalidTimestamp) as exc:
        parse_timestamp(text, schema)
    return exc.value.reason


class TestParseTimestamp:
    def test_t_separated(self):
        assert parse_timestamp("2021-09-30T14:00:07") == Timestamp(2021, 9, 30, 14, 0, 7)
        assert parse_timestamp("2021-09-30T14:00:07").style is TimestampStyle.T_SEPARATED

    def test_compact(self):
        ts = parse_timestamp("20210830T104958")
        assert ts.key() == (2021, 8, 30, 10, 49, 58)
        assert ts.style is TimestampStyle.COMPACT

    def test_space_separated(self):
        ts = parse_timestamp("2016-09-28 04:30:30")
        assert ts.key() == (2016, 9, 28, 4, 30, 30)
        assert ts.style is TimestampStyle.SPACE_SEPARATED

    def test_month_13(self):
        assert reason("20211340T104958") == "OUT_OF_RANGE"

    def test_excess_digits(self):
        assert reason("202108301T104958") == "BAD_LENGTH"

    def test_non_digit(self):
        assert reason("2021-O9-30T14:00:07") == "NON_DIGIT"
        assert reason("2021/09/30T14:00:07") == "NON_DIGIT"

    def test_empty(self):
        assert reason("") == "BAD_LENGTH"

    @pytest.mark.parametrize("text", ["2021-02-29T00:00:00", "2100-02-29T00:00:00", "2021-04-31T00:00:00",
                                      "2021-01-01T24:00:00", "2021-01-01T00:60:00", "2021-01-01T00:00:60",
                                      "0000-01-01T00:00:00", "2021-00-10T00:00:00", "2021-01-00T00:00:00"])
    def test_calendar_violations(self, text):
        assert reason(text) == "OUT_OF_RANGE"

    @pytest.mark.parametrize("text", ["2020-02-29T23:59:59", "2000-02-29T00:00:00", "2021-12-31T23:59:59"])
    def test_calendar_edges(self, text):
        assert parse_timestamp(text).to_datetime() == datetime.fromisoformat(text)

    def test_schema_restricts_styles(self):
        only_t = FieldSchema(timestamp_formats=(TimestampStyle.T_SEPARATED,))
        assert reason("20210830T104958", only_t) == "BAD_LENGTH"

    def test_cbs_suffix(self):
        ts = parse_timestamp("2016-09-28 04:30:31,", CBS_SCHEMA)
        assert ts.key() == (2016, 9, 28, 4, 30, 31)
        assert reason("2016-09-28 04:30:31", CBS_SCHEMA) == "BAD_LENGTH"

    @settings(max_examples=3000, deadline=None)
    @given(st.text(alphabet="0123456789", min_size=14, max_size=14))
    def test_fuzzed_compact_matches_calendar_oracle(self, digits):
        text = digits[:8] + "T" + digits[8:]
        y, mo, d, h, mi, s = (int(digits[a:b]) for a, b in ((0, 4), (4, 6), (6, 8), (8, 10), (10, 12), (12, 14)))
        valid = (y >= 1 and 1 <= mo <= 12 and 1 <= d <= calendar.monthrange(max(y, 1), mo if 1 <= mo <= 12 else 1)[1]
                 and h < 24 and mi < 60 and s < 60)
        try:
            ts = parse_timestamp(text)
        except InvalidTimestamp as exc:
            assert not valid
            assert exc.reason == "OUT_OF_RANGE"
        else:
            assert valid
            assert ts.key() == (y, mo, d, h, mi, s)

    @settings(max_examples=300, deadline=None)
    @given(st.datetimes(min_value=datetime(1, 1, 1), max_value=datetime(9999, 12, 31)),
           st.sampled_from(list(TimestampStyle)))
    def test_format_parse_round_trip(self, dt, style):
        ts = Timestamp.from_datetime(dt.replace(microsecond=0), style)
        text = format_timestamp(ts)
        back = parse_timestamp(text)
        assert back == ts and back.style is style
        assert format_timestamp(back) == text


class TestEntries:
    def test_eq1_example_with_extra_whitespace(self):
        e = parse_entry("20210830T104958  EFW  Write failed")
        assert e == LogEntry(Timestamp(2021, 8, 30, 10, 49, 58, TimestampStyle.COMPACT), "EFW", "Write failed")

    def test_table_row(self):
        e = parse_entry("2021-09-30T14:00:07 EFR Could not access file")
        assert (e.event_code, e.description) == ("EFR", "Could not access file")

    def test_missing_timestamp(self):
        with pytest.raises(MissingField):
            parse_entry("EFW Write failed")

    def test_too_few_fields(self):
        with pytest.raises(MissingField):
            parse_entry("20210830T104958 EFW")

    def test_bad_timestamp_propagates(self):
        with pytest.raises(InvalidTimestamp):
            parse_entry("20211340T104958 EFW Write failed")

    def test_serialize_compact(self):
        e = LogEntry(Timestamp(2021, 8, 30, 10, 49, 58, TimestampStyle.COMPACT), "EFW", "Write failed")
        assert serialize_entry(e) == "20210830T104958 EFW Write failed"

    def test_serialize_space_style(self):
        e = LogEntry(Timestamp(2021, 8, 30, 10, 49, 58, TimestampStyle.SPACE_SEPARATED), "EFW", "Write failed")
        assert serialize_entry(e).startswith("2021-08-30 10:49:58 EFW")
        assert parse_entry(serialize_entry(e)) == e

    def test_entry_invariants(self):
        ts = Timestamp(2021, 1, 1, 0, 0, 0)
        with pytest.raises(ValueError):
            LogEntry(ts, "", "x")
        with pytest.raises(ValueError):
            LogEntry(ts, "A B", "x")
        with pytest.raises(ValueError):
            LogEntry(ts, "A", "x\ny")

    def test_field_count_minimum(self):
        with pytest.raises(ValueError):
            FieldSchema(field_count=2)
        four = FieldSchema(field_count=4)
        with pytest.raises(MissingField):
            parse_entry("20210830T104958 EFW failed", four)
        assert parse_entry("20210830T104958 EFW Write failed", four).description == "Write failed"

    def test_round_trip_simulated_corpora(self):
        for line in simulate_cbs(500, seed=3):
            e = parse_entry(line, CBS_SCHEMA)
            assert parse_entry(serialize_entry(e, CBS_SCHEMA), CBS_SCHEMA) == e
        for line in simulate_app(500, seed=3):
            e = parse_entry(line)
            assert serialize_entry(e) == cleanse_whitespace(line)

    def test_file_io_keeps_source_order_and_reports_errors(self, tmp_path):
        p = tmp_path / "a.log"
        p.write_bytes(b"20210830T104958 PSTART go\r\nbroken line\n20210830T104957 EFW Write failed\n")
        lf, errors = read_log_file(p)
        assert [e.event_code for e in lf] == ["PSTART", "EFW"]
        assert len(errors) == 1 and errors[0][0] == 1 and isinstance(errors[0][1], LogFormatError)
        out = tmp_path / "b.log"
        write_log_file(out, lf.entries)
        assert out.read_text().splitlines() == ["20210830T104958 PSTART go", "20210830T104957 EFW Write failed"]

    def test_schema_config(self, tmp_path):
        p = tmp_path / "s.cfg"
        p.write_text("timestamp_formats = SPACE_SEPARATED\nfield_count = 3\ntimestamp_suffix = ,\n")
        assert FieldSchema.from_config(p) == CBS_SCHEMA
        assert FieldSchema.from_mapping(CBS_SCHEMA.to_mapping()) == CBS_SCHEMA


class TestCleanse:
    def test_example(self):
        assert cleanse_whitespace("20210830T104958     EFW   Write  failed") == "20210830T104958 EFW Write failed"

    def test_empty(self):
        assert cleanse_whitespace("") == ""
        assert cleanse_whitespace(" \t ") == ""

    @given(st.text(alphabet=st.sampled_from(list("ab1 \t  xyz")), max_size=60))
    def test_idempotent_and_token_preserving(self, text):
        once = cleanse_whitespace(text)
        assert cleanse_whitespace(once) == once
        assert once.split() == text.split()
        assert "  " not in once and once == once.strip()
