from __future__ import annotations

import io
from collections import defaultdict

import numpy as np
import pyarrow as pa
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from evacwatch.errors import InputError, SchemaError
from evacwatch.records import (
    BaselineProfile,
    ConnectivitySeries,
    RawRecord,
    RecordBatch,
    RecordSchema,
    aggregate_counts,
    build_baseline,
    collect_cells,
    parse_records,
    read_records,
    summarize,
    write_records,
)
from evacwatch.timebins import BIN_SECONDS, Clock, Window

T0 = 1706788800  # 2024-02-01 12:00 UTC, bin aligned


def naive_counts(records, window):
    cells = defaultdict(set)
    for r in records:
        if window.start <= r.timestamp < window.end:
            cells[(r.tower_id, (r.timestamp - window.start) // BIN_SECONDS)].add(r.device_id)
    return {k: len(v) for k, v in cells.items()}


def random_batch(rng, n, n_towers=5, n_devices=40, n_bins=8):
    return RecordBatch.from_records(
        RawRecord(f"d{rng.integers(n_devices)}", T0 + int(rng.integers(n_bins * BIN_SECONDS)), f"t{rng.integers(n_towers):02d}", 1.0)
        for _ in range(n)
    )


def _lines(n_good: int, bad: list[str]) -> str:
    good = [f"dev{i % 97},{T0 + 7 * i},tw{i % 5},{i % 13}.5" for i in range(n_good)]
    out = good[:10] + bad + good[10:]
    return "\n".join(out) + "\n"


BAD_LINES = ["dev1,not-a-time,tw1,3", "dev2,1706788800,tw1", "dev3,1706788800,tw2,-4"]


class TestParsing:
    def test_streaming_skips_and_tallies_malformed(self):
        reader = parse_records(io.StringIO(_lines(1000, BAD_LINES)))
        records = list(reader)
        assert len(records) == 1000
        assert reader.report.n_malformed == 3
        assert reader.report.n_lines == 1003

    def test_columnar_matches_streaming(self):
        text = _lines(1000, BAD_LINES)
        batch, report = read_records(io.BytesIO(text.encode()))
        assert (report.n_records, report.n_malformed) == (1000, 3)
        streamed = list(parse_records(io.StringIO(text)))
        assert list(batch) == streamed

    def test_header_is_detected(self):
        text = "device_id,timestamp,tower_id,data_kb\n" + _lines(5, [])
        batch, report = read_records(io.BytesIO(text.encode()))
        assert len(batch) == 5 and report.n_malformed == 0
        assert len(list(parse_records(io.StringIO(text)))) == 5

    def test_local_timestamps_and_custom_layout(self):
        schema = RecordSchema(("tower_id", "device_id", "timestamp"), ";", False)
        text = "A;d1;2024-02-02 16:45:00\nA;d2;1706903100\n"
        batch, _ = read_records(io.BytesIO(text.encode()), schema)
        # 16:45 at UTC-3 is 19:45 UTC
        assert_array_equal(batch.timestamp, [1706903100, 1706903100])
        assert batch.tower_id.to_pylist() == ["A", "A"]

    def test_mostly_malformed_is_a_schema_error(self):
        text = "a,b\nc,d\ne,f\n" + _lines(1, [])
        with pytest.raises(SchemaError):
            read_records(io.BytesIO(text.encode()))
        with pytest.raises(SchemaError):
            list(parse_records(io.StringIO(text)))

    def test_schema_requires_core_columns(self):
        with pytest.raises(SchemaError):
            RecordSchema(("device_id", "tower_id"))

    def test_empty_input(self):
        batch, report = read_records(io.BytesIO(b""))
        assert len(batch) == 0 and report.n_records == 0

    def test_round_trip(self, tmp_path, rng):
        batch = random_batch(rng, 300)
        path = tmp_path / "r.csv"
        write_records(path, batch)
        again, report = read_records(path)
        assert report.n_malformed == 0
        assert list(again) == list(batch)


class TestAggregation:
    def test_matches_set_oracle(self, rng):
        batch = random_batch(rng, 2000)
        window = Window(T0, T0 + 8 * BIN_SECONDS)
        series = aggregate_counts(batch, window)
        oracle = naive_counts(batch, window)
        for tower, b, c in series.cells():
            assert c == oracle.get((tower, (b - T0) // BIN_SECONDS), 0)

    def test_records_outside_window_are_dropped(self):
        recs = [RawRecord("d", T0 - 1, "a", 0), RawRecord("d", T0, "a", 0), RawRecord("e", T0 + BIN_SECONDS, "a", 0)]
        series = aggregate_counts(recs, Window(T0, T0 + BIN_SECONDS))
        assert_array_equal(series.counts, [[1]])

    def test_network_devices_are_distinct_across_towers(self):
        recs = [RawRecord("d", T0, "a", 0), RawRecord("d", T0 + 5, "b", 0)]
        series = aggregate_counts(recs)
        assert_array_equal(series.counts, [[1], [1]])
        assert_array_equal(series.network_devices, [1])
        assert summarize(series).mean_devices_per_bin == 1.0

    def test_shards_merge_to_whole(self, rng):
        batch = random_batch(rng, 1000)
        window = Window(T0, T0 + 8 * BIN_SECONDS)
        a = collect_cells(batch.take(np.arange(0, 400)), window)
        b = collect_cells(batch.take(np.arange(400, 1000)), window)
        assert a.merge(b).to_series().equals(aggregate_counts(batch, window))

    def test_approximate_mode_is_close(self, rng):
        n = 20000
        batch = RecordBatch(
            pa.array([f"d{i}" for i in range(n)]),
            np.full(n, T0, dtype=np.int64),
            pa.array(["a"] * n),
            np.zeros(n),
        )
        approx = aggregate_counts(batch, approximate=True)
        assert approx.approximate
        assert abs(approx.counts[0, 0] - n) / n < 0.2

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 4 * BIN_SECONDS - 1), st.integers(0, 2)), min_size=1, max_size=60), st.randoms())
    def test_order_and_duplication_invariance(self, rows, rnd):
        recs = [RawRecord(f"d{d}", T0 + t, f"t{w}", 0.0) for d, t, w in rows]
        window = Window(T0, T0 + 4 * BIN_SECONDS)
        shuffled = recs + recs[: len(recs) // 2]
        rnd.shuffle(shuffled)
        assert aggregate_counts(recs, window).equals(aggregate_counts(shuffled, window))


class TestSeriesIO:
    def test_csv_round_trip(self, tmp_path, clock, rng):
        window = Window(T0, T0 + 6 * BIN_SECONDS)
        series = ConnectivitySeries(("a", "b"), window, rng.integers(0, 9, (2, 6)))
        series.write_csv(tmp_path / "s.csv", clock)
        assert ConnectivitySeries.read_csv(tmp_path / "s.csv", clock).equals(series)

    def test_missing_columns(self, tmp_path, clock):
        (tmp_path / "s.csv").write_text("tower,bin\nA,1\n")
        with pytest.raises(SchemaError):
            ConnectivitySeries.read_csv(tmp_path / "s.csv", clock)

    def test_empty_file(self, tmp_path, clock):
        (tmp_path / "s.csv").write_text("tower_id,bin_start_iso8601,count\n")
        with pytest.raises(InputError, match="zero valid rows"):
            ConnectivitySeries.read_csv(tmp_path / "s.csv", clock)


class TestBaseline:
    @pytest.fixture
    def two_days(self, clock):
        start = clock.parse("2024-01-25 00:00")
        window = Window(start, start + 2 * 96 * BIN_SECONDS)
        counts = np.vstack([np.r_[np.full(96, 10), np.full(96, 20)], np.arange(192)])
        return ConnectivitySeries(("a", "b"), window, counts)

    def test_time_of_day_pools_days(self, two_days, clock):
        profile = build_baseline(two_days, clock=clock)
        assert profile.expected.shape == (2, 1, 96)
        assert_allclose(profile.expected[0, 0], 15.0)
        assert_allclose(profile.expected[1, 0], np.arange(96) + 48)
        assert_array_equal(profile.support, 2)

    def test_day_offset_keeps_days_apart(self, two_days, clock):
        profile = build_baseline(two_days, rule="day_offset", clock=clock)
        assert profile.n_classes == 2
        assert_allclose(profile.expected[0, 1], 20.0)

    def test_expected_for_aligns_time_of_day(self, two_days, clock):
        profile = build_baseline(two_days, clock=clock)
        start = clock.parse("2024-02-01 07:00")
        event = ConnectivitySeries(("b", "c"), Window(start, start + 4 * BIN_SECONDS), np.zeros((2, 4), int))
        common, n_b = profile.expected_for(event, clock)
        assert common == ("b",)
        assert_allclose(n_b[0], np.arange(28, 32) + 48)

    def test_partial_coverage_is_nan(self, clock):
        start = clock.parse("2024-01-25 07:00")
        base = ConnectivitySeries(("a",), Window(start, start + 4 * BIN_SECONDS), np.ones((1, 4), int))
        profile = build_baseline(base, clock=clock)
        event = ConnectivitySeries(("a",), Window(start + 86400 - 4 * BIN_SECONDS, start + 86400 + 4 * BIN_SECONDS), np.ones((1, 8), int))
        _, n_b = profile.expected_for(event, clock)
        assert np.isnan(n_b[0, :4]).all() and (n_b[0, 4:] == 1).all()

    def test_csv_round_trip(self, two_days, clock, tmp_path):
        profile = build_baseline(two_days, rule="day_offset", clock=clock)
        profile.write_csv(tmp_path / "b.csv")
        again = BaselineProfile.read_csv(tmp_path / "b.csv")
        assert again.rule == "day_offset"
        assert_allclose(again.expected, profile.expected)
        assert_array_equal(again.support, profile.support)

    def test_unknown_rule(self, two_days):
        with pytest.raises(ValueError):
            build_baseline(two_days, rule="weekday")


def test_summary_quadruple():
    recs = [RawRecord("d1", T0, "a", 0), RawRecord("d2", T0, "b", 0), RawRecord("d1", T0 + BIN_SECONDS, "a", 0)]
    s = summarize(aggregate_counts(recs))
    assert s.total_records == 3
    assert s.mean_devices_per_bin == 1.5
    assert s.mean_active_towers_per_bin == 1.5
    assert s.devices_are_network_distinct
