from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from evacwatch.errors import InputError
from evacwatch.metrics import (
    ALL,
    NON_WARNED,
    WARNED,
    GroupCurve,
    TowerSeries,
    cdf_snapshot,
    differential,
    differential_rex,
    dominates,
    ecdf,
    evac_rate,
    evac_series,
    group_series,
    rex,
    rex_series,
    threshold_series,
    trough,
)
from evacwatch.records import ConnectivitySeries, build_baseline
from evacwatch.seg import Seg, SegAssignment
from evacwatch.timebins import BIN_SECONDS, Window

from oracles import ecdf_oracle

T0 = 1706788800
counts_st = st.integers(0, 10**6)


def _series(values, towers=None):
    values = np.asarray(values, dtype=float)
    towers = towers or tuple(f"t{i}" for i in range(values.shape[0]))
    return TowerSeries(tuple(towers), Window(T0, T0 + values.shape[1] * BIN_SECONDS), values, "evac_rate")


def _one_seg(towers, seg=Seg.HIGH):
    return SegAssignment({"z": seg}, (0.0, 0.0), {t: seg for t in towers})


class TestScalarMetrics:
    def test_examples(self):
        assert rex(0, 400) == -1.0
        assert rex(250, 250) == 0.0
        assert rex(150, 50) == 0.5
        assert rex(0, 0) == 0.0
        assert evac_rate(300, 300) == 0.0
        assert evac_rate(0, 439) == -100.0
        assert evac_rate(658, 439) == pytest.approx(50, abs=0.5)

    def test_zero_baseline_rate_is_nan(self):
        assert np.isnan(evac_rate(5, 0))

    def test_negative_counts_rejected(self):
        with pytest.raises(InputError):
            rex(-1, 3)
        with pytest.raises(InputError):
            evac_rate(1, -3)

    @settings(max_examples=300)
    @given(counts_st, counts_st, st.integers(1, 1000))
    def test_rex_algebra(self, a, b, k):
        r = rex(a, b)
        assert -1.0 <= r <= 1.0
        assert r == -rex(b, a)
        assert rex(k * a, k * b) == pytest.approx(r, abs=1e-12)
        if b > 0 and a != b:
            assert np.sign(r) == np.sign(evac_rate(a, b))

    def test_vectorized(self):
        assert_allclose(rex(np.array([0, 150, 0]), np.array([0, 50, 3])), [0, 0.5, -1])


class TestTowerMetrics:
    def test_rex_and_rate_from_series(self, clock):
        base = ConnectivitySeries(("a", "b"), Window(T0, T0 + 2 * BIN_SECONDS), np.array([[100, 0], [10, 10]]))
        profile = build_baseline(base, clock=clock)
        event = ConnectivitySeries(("a", "b", "c"), Window(T0 + 86400, T0 + 86400 + 2 * BIN_SECONDS), np.array([[50, 3], [10, 30], [1, 1]]))
        r = rex_series(event, profile, clock)
        assert r.towers == ("a", "b")
        assert_allclose(r.values, [[-1 / 3, 1.0], [0.0, 0.5]])
        e = evac_series(event, profile, clock)
        assert_allclose(e.values, [[-50, np.nan], [0, 200]])
        assert e.n_excluded == 1

    def test_csv_round_trip(self, tmp_path, clock):
        s = _series([[1.5, np.nan], [-2.0, 3.25]])
        s.write_csv(tmp_path / "e.csv", clock)
        again = TowerSeries.read_csv(tmp_path / "e.csv", "evac_rate")
        assert again.towers == s.towers and again.window == s.window
        assert_array_equal(again.values, s.values)


class TestGroupCurves:
    def test_matches_student_t(self, rng):
        v = rng.normal(size=(12, 5))
        c = GroupCurve.from_values(np.arange(5), v)
        se = v.std(axis=0, ddof=1) / np.sqrt(12)
        assert_allclose(c.mean, v.mean(axis=0))
        assert_allclose(c.half_width, stats.t.ppf(0.975, 11) * se)

    def test_single_tower_is_degenerate(self):
        c = GroupCurve.from_values(np.arange(2), np.array([[0.3, -0.2]]))
        assert_array_equal(c.degenerate, True)
        assert_array_equal(c.ci_lo, c.ci_hi)

    def test_identical_values_zero_width(self):
        c = GroupCurve.from_values(np.arange(3), np.full((4, 3), -0.25))
        assert_allclose(c.mean, -0.25)
        assert_allclose(c.half_width, 0.0)

    def test_nan_cells_are_skipped(self):
        c = GroupCurve.from_values(np.arange(2), np.array([[1.0, np.nan], [3.0, np.nan]]))
        assert_array_equal(c.n, [2, 0])
        assert c.mean[0] == 2.0 and np.isnan(c.mean[1])

    def test_partitions(self):
        class Warned:
            def __contains__(self, t):
                return t in {"a", "b"}

        s = _series(np.arange(12.0).reshape(4, 3), ("a", "b", "c", "d"))
        assign = _one_seg(s.towers)
        gs = group_series(s, assign, Warned(), WARNED)
        assert set(gs.keys()) == {(Seg.HIGH, WARNED), (Seg.HIGH, NON_WARNED)}
        assert_allclose(gs[(Seg.HIGH, WARNED)].mean, [1.5, 2.5, 3.5])
        assert set(group_series(s, assign, None, ALL).keys()) == {(Seg.HIGH, ALL)}
        with pytest.raises(ValueError):
            group_series(s, assign, None, WARNED)

    def test_differential(self, rng):
        a = GroupCurve.from_values(np.arange(4), rng.normal(-0.4, 0.1, (20, 4)))
        c = GroupCurve.from_values(np.arange(4), rng.normal(0.0, 0.2, (30, 4)))
        d = differential(a, c)
        assert_allclose(d.mean, a.mean - c.mean)
        va, vc = a.se**2, c.se**2
        assert_allclose(d.df, (va + vc) ** 2 / (va**2 / 19 + vc**2 / 29))
        same = differential(a, a)
        assert_allclose(same.mean, 0.0)

    def test_differential_offset_and_mismatch(self):
        a = GroupCurve.from_values(np.arange(3), np.full((3, 3), -0.4))
        c = GroupCurve.from_values(np.arange(3), np.zeros((3, 3)))
        assert_allclose(differential(a, c).mean, -0.4)
        with pytest.raises(InputError):
            differential(a, GroupCurve.from_values(np.arange(1, 4), np.zeros((3, 3))))

    def test_trough(self):
        c = GroupCurve.from_values(np.array([10, 20, 30]), np.array([[0.0, -0.9, -0.5], [0.0, -0.7, -0.5]]))
        b, m, lo, hi = trough(c)
        assert b == 20 and m == pytest.approx(-0.8) and lo < m < hi


class TestDistributions:
    def test_three_point_ecdf(self):
        assert_allclose(ecdf(np.array([-10.0, 0.0, 10.0]), np.array([-10.0, 0.0, 10.0])), [1 / 3, 2 / 3, 1.0])

    def test_constant_values(self):
        assert_allclose(ecdf(np.full(4, 2.0), np.array([1.0, 2.0, 3.0])), [0, 1, 1])

    @settings(max_examples=100)
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=30), st.lists(st.floats(-120, 120), min_size=1, max_size=10))
    def test_ecdf_oracle_and_shape(self, values, grid):
        g = np.sort(np.asarray(grid))
        f = ecdf(np.asarray(values), g)
        assert_allclose(f, [ecdf_oracle(values, x) for x in g])
        assert np.all(np.diff(f) >= 0)
        assert ecdf(np.asarray(values), np.array([max(values)]))[0] == 1.0

    def test_snapshot_per_seg(self):
        s = _series([[-10.0], [0.0], [10.0], [-50.0]], ("a", "b", "c", "d"))
        assign = SegAssignment({}, (0, 0), {"a": Seg.LOW, "b": Seg.LOW, "c": Seg.LOW, "d": Seg.HIGH})
        snap = cdf_snapshot(s, T0, assign)
        assert_allclose(snap.grid, [-50, -10, 0, 10])
        assert_allclose(snap.cum_fraction[Seg.LOW], [0, 1 / 3, 2 / 3, 1])
        assert_allclose(snap.cum_fraction[Seg.HIGH], [1, 1, 1, 1])
        assert dominates(snap, Seg.HIGH, Seg.LOW) and not dominates(snap, Seg.LOW, Seg.HIGH)
        with pytest.raises(InputError):
            cdf_snapshot(s, T0 + BIN_SECONDS, assign)


class TestThresholds:
    def test_saturation(self):
        s = _series(np.full((5, 4), -100.0))
        ts = threshold_series(s, _one_seg(s.towers), (50, 75, 85))
        for frac in ts.fractions.values():
            assert_allclose(frac, 1.0)

    def test_instant_vs_ever(self):
        s = _series([[-60.0, 0.0, -80.0], [0.0, -90.0, 0.0], [np.nan, np.nan, np.nan]])
        assign = _one_seg(s.towers)
        inst = threshold_series(s, assign, (50,), "instant").fractions[(Seg.HIGH, 50.0)]
        ever = threshold_series(s, assign, (50,), "ever").fractions[(Seg.HIGH, 50.0)]
        assert_allclose(inst, [0.5, 0.5, 0.5])
        assert_allclose(ever, [0.5, 1.0, 1.0])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 12), st.integers(0, 2**31))
    def test_ever_monotone_and_above_instant(self, n, m, seed):
        g = np.random.default_rng(seed)
        v = g.uniform(-100, 50, (n, m))
        v[g.random((n, m)) < 0.2] = np.nan
        s = _series(v)
        assign = _one_seg(s.towers)
        inst = threshold_series(s, assign, (50, 75), "instant")
        ever = threshold_series(s, assign, (50, 75), "ever")
        for key, f in ever.fractions.items():
            if np.isnan(f).all():
                continue
            assert np.all(np.diff(f) >= 0)
            assert np.all(f >= inst.fractions[key])

    def test_bad_arguments(self):
        s = _series(np.zeros((1, 1)))
        with pytest.raises(ValueError):
            threshold_series(s, _one_seg(s.towers), (0,))
        with pytest.raises(ValueError):
            threshold_series(s, _one_seg(s.towers), (50,), "sometimes")


class TestGolden:
    def test_high_warned_trough_matches_injected(self, golden, golden_groups):
        warned, assign = golden_groups
        gs = group_series(rex_series(golden.event, golden.profile, golden.clock), assign, warned)
        _, mean, lo, hi = trough(gs[(Seg.HIGH, WARNED)])
        assert lo <= -0.93 <= hi
        assert mean == pytest.approx(-0.93, abs=0.02)

    def test_high_seg_crosses_half_evacuation(self, golden, golden_groups):
        warned, assign = golden_groups
        rates = evac_series(golden.event, golden.profile, golden.clock)
        ts = threshold_series(rates, assign, (50,), "instant", set(warned.first_warned))
        first_alert = golden.geography.alerts[0].sent_at
        j = rates.window.index(first_alert + 5 * BIN_SECONDS)
        assert ts.fractions[(Seg.HIGH, 50.0)][: j + 1].max() > 0.95

    def test_differential_key_layout(self, golden, golden_groups):
        warned, assign = golden_groups
        d = differential_rex(group_series(rex_series(golden.event, golden.profile, golden.clock), assign, warned))
        assert set(d.keys()) == {(s, "differential") for s in Seg}
