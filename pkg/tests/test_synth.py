from __future__ import annotations

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from evacwatch import synth
from evacwatch.errors import UsageError
from evacwatch.records import ConnectivitySeries, aggregate_counts, read_records
from evacwatch.seg import Seg
from evacwatch.timebins import BIN_SECONDS

ZERO = (0.0,) * 8


def _small(**changes):
    base = synth.null_scenario(seed=5, n_per_group=2)
    return synth.with_seed(base, 5, baseline_mean=20.0, **changes)


def _flat(coefs, **changes):
    seg = synth.Segment("2024-02-02 00:00", "2024-02-03 00:00", "2024-02-02 16:45", {s: coefs for s in Seg})
    return _small(segments=(seg,), sigma=0.0, **changes)


class TestSeries:
    def test_null_noiseless_event_equals_baseline(self):
        out = synth.generate_series(_flat(ZERO, count_noise=0.0, baseline_spread=0.0))
        base_day = out.baseline.counts[:, -96:]
        assert_array_equal(out.event.counts, base_day)

    def test_full_evacuation_step_empties_towers(self):
        out = synth.generate_series(_flat((0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0)))
        t_star = out.event.window.index(out.clock.parse("2024-02-02 18:00"))
        assert np.all(out.event.counts[:, t_star:] == 0)
        assert np.all(out.event.counts[:, :t_star] > 0)

    def test_rex_reaching_one_is_fatal(self):
        with pytest.raises(UsageError):
            synth.generate_series(_flat((1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)))

    def test_invalid_configs(self):
        with pytest.raises(UsageError):
            synth.generate_series(_small(sigma=-1.0))
        with pytest.raises(UsageError):
            synth.generate_series(_small(delay_min=20))
        with pytest.raises(UsageError):
            synth.generate_series(_small(n_control={Seg.LOW: 0, Seg.MEDIUM: 1, Seg.HIGH: 1}))

    def test_same_seed_same_output(self):
        a, b = synth.generate_series(_small()), synth.generate_series(_small())
        assert a.event.equals(b.event) and a.baseline.equals(b.baseline)
        assert a.truth.to_json() == b.truth.to_json()
        c = synth.generate_series(synth.with_seed(_small(), 6))
        assert not np.array_equal(a.event.counts, c.event.counts)

    def test_circadian_peak_in_afternoon(self):
        out = synth.generate_series(_small(count_noise=0.0))
        day = out.baseline.counts[:, -96:].sum(axis=0)
        assert abs(int(np.argmax(day)) - 14 * 4) <= 1

    def test_ground_truth_json_round_trip(self):
        truth = synth.generate_series(_small()).truth
        assert synth.GroundTruth.from_json(truth.to_json()) == truth


class TestGolden:
    def test_preset_values(self):
        config = synth.golden_scenario()
        day1 = config.segments[0]
        assert config.delay_min == 75
        assert day1.troughs[(Seg.HIGH, True)] == -0.93
        assert day1.troughs[(Seg.LOW, False)] == -0.47
        assert day1.coefficients[Seg.HIGH][2] == -0.675
        assert len(config.alerts) == 14

    def test_no_clipping(self, golden):
        assert golden.truth.clip_events == 0
        assert golden.truth.count_clip_events == 0

    def test_injected_rex_matches_counts(self, golden):
        _, n_b = golden.profile.expected_for(golden.event, golden.clock)
        implied = (golden.event.counts - n_b) / (golden.event.counts + n_b)
        assert np.max(np.abs(implied - golden.rex.values)) < 0.01

    def test_alert_times(self, golden):
        alerts = golden.geography.alerts
        clock = golden.clock
        assert clock.iso(alerts[0].sent_at) == "2024-02-02T16:45:00-03:00"
        assert clock.iso(alerts[-1].sent_at) == "2024-02-03T18:30:00-03:00"
        assert alerts[0].places[0] == "Quebrada Escobares"


@pytest.fixture(scope="module")
def generated():
    return synth.generate_records(_small())


class TestRecords:
    def test_round_trip_through_aggregation(self, generated):
        batch, out = generated
        assert len(batch) == out.truth.emitted_record_count
        for series in (out.baseline, out.event):
            again = aggregate_counts(batch, series.window)
            assert again.towers == series.towers
            assert_array_equal(again.counts, series.counts)

    def test_shuffled_stream_same_counts(self, generated):
        batch, out = generated
        perm = np.random.default_rng(0).permutation(len(batch))
        assert aggregate_counts(batch.take(perm), out.event.window).equals(out.event)

    def test_written_scenario_reads_back(self, generated, tmp_path):
        batch, out = generated
        paths = synth.write_scenario(out, tmp_path, batch)
        again, report = read_records(paths["records.csv"])
        assert report.n_malformed == 0 and len(again) == len(batch)
        assert ConnectivitySeries.read_csv(paths["event_series.csv"], out.clock).equals(out.event)
        truth = json.loads((tmp_path / "ground_truth.json").read_text())
        assert truth["emitted_record_count"] == len(batch)
        assert json.loads((tmp_path / "scenario.json").read_text())["seed"] == 5


def test_throughput_preset_size():
    config = synth.throughput_scenario(target_records=10**5)
    out = synth.generate_series(config)
    expected = (1 + config.repeat_extra) * (out.baseline.counts.sum() + out.event.counts.sum())
    assert 0.8e5 < expected < 1.2e5
    assert out.event.window.n_bins == 96 and out.event.window.start % BIN_SECONDS == 0
