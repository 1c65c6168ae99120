"""Tower-level REX and evacuation rate, per-group curves, ECDFs and threshold series.

REX = (n_t - n_b) / (n_t + n_b) lies in [-1, 1] and is invariant to the
overall size of a tower's population; the evacuation rate is the plain
percentage change 100 (n_t - n_b) / n_b.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .errors import InputError
from .geoalert import WarnedSet
from .records import BaselineProfile, ConnectivitySeries
from .seg import Seg, SegAssignment
from .timebins import BIN_SECONDS, Clock, Window

log = logging.getLogger(__name__)

WARNED = "warned"
NON_WARNED = "non-warned"
ALL = "all"
DEFAULT_THRESHOLDS = (50.0, 75.0, 85.0)
THRESHOLD_MODES = ("instant", "ever")


def rex(n_t, n_b):
    """Relative evacuation index; ``rex(0, 0)`` is defined as 0."""
    a = np.asarray(n_t, dtype=np.float64)
    b = np.asarray(n_b, dtype=np.float64)
    if np.any(a < 0) or np.any(b < 0):
        raise InputError("device counts must be nonnegative")
    total = a + b
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(total > 0, (a - b) / np.where(total > 0, total, 1.0), 0.0)
    out = np.where(np.isnan(a) | np.isnan(b), np.nan, out)
    return out.item() if out.ndim == 0 else out


def evac_rate(n_t, n_b):
    """Percentage change against baseline; NaN where ``n_b`` is 0 (or missing)."""
    a = np.asarray(n_t, dtype=np.float64)
    b = np.asarray(n_b, dtype=np.float64)
    if np.any(a < 0) or np.any(b < 0):
        raise InputError("device counts must be nonnegative")
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(b > 0, 100.0 * (a - b) / np.where(b > 0, b, 1.0), np.nan)
    out = np.where(np.isnan(a) | np.isnan(b), np.nan, out)
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class TowerSeries:
    """A metric per (tower, bin); NaN marks undefined cells."""

    towers: tuple[str, ...]
    window: Window
    values: np.ndarray
    metric: str
    n_excluded: int = 0

    @property
    def bins(self) -> np.ndarray:
        return self.window.bins

    def rows(self, towers: Iterable[str]) -> np.ndarray:
        index = {t: i for i, t in enumerate(self.towers)}
        return self.values[[index[t] for t in towers if t in index]]

    def select(self, towers: Iterable[str]) -> "TowerSeries":
        keep = set(towers)
        names = tuple(t for t in self.towers if t in keep)
        return TowerSeries(names, self.window, self.rows(names), self.metric, self.n_excluded)

    def restrict(self, window: Window) -> "TowerSeries":
        if window.start < self.window.start or window.end > self.window.end:
            raise InputError("requested window is not covered by the series")
        a, b = self.window.index(window.start), self.window.index(window.end)
        return TowerSeries(self.towers, window, self.values[:, a:b], self.metric, self.n_excluded)

    def column(self, bin_start: int) -> np.ndarray:
        if bin_start not in self.window:
            raise InputError("requested bin lies outside the series window")
        return self.values[:, self.window.index(bin_start)]

    def to_frame(self, clock: Clock) -> pd.DataFrame:
        iso = clock.iso_many(self.bins)
        n_t, n_b = self.values.shape
        return pd.DataFrame(
            {
                "tower_id": np.repeat(np.array(self.towers, dtype=object), n_b),
                "bin_start_iso8601": np.tile(np.array(iso, dtype=object), n_t),
                self.metric: self.values.reshape(-1),
            }
        )

    def write_csv(self, path, clock: Clock) -> None:
        self.to_frame(clock).to_csv(path, index=False, lineterminator="\n", float_format="%.10g")

    @classmethod
    def read_csv(cls, path, metric: str = "rex") -> "TowerSeries":
        try:
            df = pd.read_csv(path, dtype={"tower_id": str, "bin_start_iso8601": str})
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise InputError(f"cannot read {path}: {exc}") from exc
        if not {"tower_id", "bin_start_iso8601", metric} <= set(df.columns) or df.empty:
            raise InputError(f"{path}: expected non-empty columns tower_id, bin_start_iso8601, {metric}")
        stamps = pd.to_datetime(df["bin_start_iso8601"], utc=True, format="ISO8601")
        ts = (stamps.astype("int64") // 10**9).to_numpy()
        window = Window(int(ts.min()), int(ts.max()) + BIN_SECONDS)
        towers = tuple(sorted(df["tower_id"].unique()))
        values = np.full((len(towers), window.n_bins), np.nan)
        values[pd.Index(towers).get_indexer(df["tower_id"]), window.index(ts)] = df[metric].to_numpy(dtype=float)
        return cls(towers, window, values, metric)


def tower_metric(
    event: ConnectivitySeries,
    profile: BaselineProfile,
    clock: Clock | None = None,
    metric: str = "rex",
) -> TowerSeries:
    """REX or evacuation rate for towers present in both the event series and the profile.

    Cells without baseline support are NaN. For the evacuation rate, cells
    with a zero baseline are also NaN and tallied in ``n_excluded``.
    """
    clock = clock or Clock()
    common, n_b = profile.expected_for(event, clock)
    if not common:
        raise InputError("no tower appears in both the event series and the baseline profile")
    dropped = len(event.towers) - len(common)
    if dropped:
        log.info("%d event tower(s) have no baseline and are skipped", dropped)
    n_t = event.select(common).counts.astype(np.float64)
    if metric == "rex":
        values = rex(n_t, n_b)
        excluded = 0
    elif metric == "evac_rate":
        values = evac_rate(n_t, n_b)
        excluded = int(np.sum(n_b == 0))
        if excluded:
            log.info("evacuation rate: %d tower-bin(s) with zero baseline excluded", excluded)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return TowerSeries(common, event.window, np.asarray(values, dtype=np.float64), metric, excluded)


def rex_series(event, profile, clock=None) -> TowerSeries:
    return tower_metric(event, profile, clock, "rex")


def evac_series(event, profile, clock=None) -> TowerSeries:
    return tower_metric(event, profile, clock, "evac_rate")


# ---------------------------------------------------------------------------
# group curves


@dataclass(frozen=True, eq=False)
class GroupCurve:
    """Per-bin mean with a Student-t interval.

    ``se`` is the standard error of the mean and ``df`` its degrees of
    freedom; bins with ``n == 0`` carry NaN. A bin with a single tower gets a
    zero-width interval and is listed in ``degenerate``.
    """

    bins: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    df: np.ndarray
    n: np.ndarray

    @property
    def half_width(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            q = stats.t.ppf(0.975, np.where(self.df > 0, self.df, np.nan))
        return np.where(self.n > 1, q * self.se, np.where(self.n == 1, 0.0, np.nan))

    @property
    def ci_lo(self) -> np.ndarray:
        return self.mean - self.half_width

    @property
    def ci_hi(self) -> np.ndarray:
        return self.mean + self.half_width

    @property
    def degenerate(self) -> np.ndarray:
        return self.n == 1

    def argmin(self) -> int:
        return int(np.nanargmin(self.mean))

    @classmethod
    def from_values(cls, bins: np.ndarray, values: np.ndarray) -> "GroupCurve":
        """Curve over the rows of a (tower x bin) array, ignoring NaN cells."""
        n = np.sum(~np.isnan(values), axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.where(n > 0, np.nansum(values, axis=0) / np.maximum(n, 1), np.nan)
            dev = np.where(np.isnan(values), 0.0, values - mean)
            var = np.where(n > 1, np.sum(dev * dev, axis=0) / np.maximum(n - 1, 1), 0.0)
            se = np.where(n > 0, np.sqrt(var / np.maximum(n, 1)), np.nan)
        return cls(np.asarray(bins), mean, se, (n - 1).astype(np.float64), n)


@dataclass(frozen=True, eq=False)
class GroupSeries:
    """Group curves keyed by (Seg, partition label)."""

    window: Window
    curves: dict[tuple[Seg, str], GroupCurve] = field(default_factory=dict)

    def __getitem__(self, key: tuple[Seg, str]) -> GroupCurve:
        return self.curves[key]

    def keys(self):
        return self.curves.keys()

    def to_frame(self, clock: Clock) -> pd.DataFrame:
        iso = np.array(clock.iso_many(self.window.bins), dtype=object)
        parts = []
        for (seg, label), c in sorted(self.curves.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            keep = c.n > 0
            parts.append(
                pd.DataFrame(
                    {
                        "seg": seg.label,
                        "warned_flag": label,
                        "bin_iso": iso[keep],
                        "mean": c.mean[keep],
                        "ci_lo": c.ci_lo[keep],
                        "ci_hi": c.ci_hi[keep],
                        "n": c.n[keep],
                    }
                )
            )
        cols = ["seg", "warned_flag", "bin_iso", "mean", "ci_lo", "ci_hi", "n"]
        return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=cols)

    def write_csv(self, path, clock: Clock) -> None:
        self.to_frame(clock).to_csv(path, index=False, lineterminator="\n", float_format="%.10g")


def _partition(
    towers: Sequence[str], assignment: SegAssignment, warned: WarnedSet | None, partition: str
) -> dict[tuple[Seg, str], list[int]]:
    groups: dict[tuple[Seg, str], list[int]] = {}
    for i, t in enumerate(towers):
        seg = assignment.tower_seg.get(t)
        if seg is None:
            continue
        if partition == ALL:
            label = ALL
        elif partition == WARNED:
            if warned is None:
                raise ValueError("a warned set is required to split warned from non-warned towers")
            label = WARNED if t in warned else NON_WARNED
        else:
            raise ValueError(f"unknown partition {partition!r}")
        groups.setdefault((seg, label), []).append(i)
    return groups


def group_series(
    series: TowerSeries,
    assignment: SegAssignment,
    warned: WarnedSet | None = None,
    partition: str = WARNED,
) -> GroupSeries:
    """Mean and 95% Student-t interval across towers, per group and bin.

    ``partition=WARNED`` splits each SEG into warned and non-warned towers;
    ``partition=ALL`` keeps one curve per SEG.
    """
    curves = {}
    for key, rows in _partition(series.towers, assignment, warned, partition).items():
        curves[key] = GroupCurve.from_values(series.bins, series.values[rows])
    return GroupSeries(series.window, curves)


def differential(affected: GroupCurve, control: GroupCurve) -> GroupCurve:
    """Affected minus control with a Welch interval.

    The standard error is sqrt(se_a^2 + se_c^2) and the degrees of freedom
    follow Welch-Satterthwaite.
    """
    if affected.bins.shape != control.bins.shape or not np.array_equal(affected.bins, control.bins):
        raise InputError("affected and control series cover different bins")
    va, vc = affected.se**2, control.se**2
    se = np.sqrt(va + vc)
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = np.where(affected.df > 0, va**2 / affected.df, 0.0) + np.where(control.df > 0, vc**2 / control.df, 0.0)
        df = np.where(denom > 0, (va + vc) ** 2 / np.where(denom > 0, denom, 1.0), np.nan)
    # both sides with a single tower: no spread estimate, flag via n == 1
    n = np.where((affected.n == 1) & (control.n == 1), 1, affected.n + control.n)
    n = np.where((affected.n == 0) | (control.n == 0), 0, n)
    return GroupCurve(affected.bins, affected.mean - control.mean, se, df, n)


def differential_rex(series: GroupSeries) -> GroupSeries:
    """Warned minus non-warned curve for every SEG with both groups present."""
    curves = {}
    for seg in Seg:
        a, c = series.curves.get((seg, WARNED)), series.curves.get((seg, NON_WARNED))
        if a is not None and c is not None:
            curves[(seg, "differential")] = differential(a, c)
    return GroupSeries(series.window, curves)


# ---------------------------------------------------------------------------
# distributions and thresholds


@dataclass(frozen=True, eq=False)
class CdfSnapshot:
    """Exact ECDF per SEG on the union of observed values."""

    time: int
    grid: np.ndarray
    cum_fraction: dict[Seg, np.ndarray]

    def to_frame(self) -> pd.DataFrame:
        parts = [
            pd.DataFrame({"seg": seg.label, "x": self.grid, "cum_fraction": f})
            for seg, f in sorted(self.cum_fraction.items())
        ]
        return pd.concat(parts, ignore_index=True)

    def write_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n", float_format="%.10g")


def ecdf(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Fraction of ``values`` that are <= each grid point."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    return np.searchsorted(v, grid, side="right") / v.size


def cdf_snapshot(
    series: TowerSeries,
    bin_start: int,
    assignment: SegAssignment,
    towers: Iterable[str] | None = None,
) -> CdfSnapshot:
    """Per-SEG ECDF of tower values at one bin; undefined cells are dropped."""
    column = series.column(bin_start)
    keep = None if towers is None else set(towers)
    by_seg: dict[Seg, list[float]] = {}
    for t, v in zip(series.towers, column.tolist()):
        seg = assignment.tower_seg.get(t)
        if seg is None or np.isnan(v) or (keep is not None and t not in keep):
            continue
        by_seg.setdefault(seg, []).append(v)
    if not by_seg:
        raise InputError("no defined tower values at the requested bin")
    grid = np.unique(np.concatenate([np.asarray(v) for v in by_seg.values()]))
    return CdfSnapshot(bin_start, grid, {seg: ecdf(np.asarray(v), grid) for seg, v in by_seg.items()})


def dominates(snapshot: CdfSnapshot, a: Seg, b: Seg) -> bool:
    """True if group ``a`` has at least as much mass at or below every x as ``b``.

    With negative values meaning evacuation, this reads as "a evacuated at
    least as strongly as b everywhere", strictly somewhere.
    """
    fa, fb = snapshot.cum_fraction[a], snapshot.cum_fraction[b]
    return bool(np.all(fa >= fb) and np.any(fa > fb))


@dataclass(frozen=True, eq=False)
class ThresholdSeries:
    window: Window
    mode: str
    fractions: dict[tuple[Seg, float], np.ndarray]

    def to_frame(self, clock: Clock) -> pd.DataFrame:
        iso = np.array(clock.iso_many(self.window.bins), dtype=object)
        parts = [
            pd.DataFrame({"seg": seg.label, "threshold": thr, "bin_iso": iso, "fraction": f})
            for (seg, thr), f in sorted(self.fractions.items())
        ]
        return pd.concat(parts, ignore_index=True)

    def write_csv(self, path, clock: Clock) -> None:
        self.to_frame(clock).to_csv(path, index=False, lineterminator="\n", float_format="%.10g")


def threshold_series(
    rates: TowerSeries,
    assignment: SegAssignment,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    mode: str = "instant",
    towers: Iterable[str] | None = None,
) -> ThresholdSeries:
    """Fraction of each SEG's towers at or beyond an evacuation level.

    A tower counts at bin t when its rate is <= -threshold at t
    (``mode="instant"``) or at any bin up to t (``mode="ever"``). The
    denominator is the number of towers in the group with at least one
    defined rate in the window, so both modes share it and undefined cells
    never count as crossings.
    """
    if mode not in THRESHOLD_MODES:
        raise ValueError(f"mode must be one of {THRESHOLD_MODES}")
    for thr in thresholds:
        if not 0 < thr <= 100:
            raise ValueError(f"threshold {thr} outside (0, 100]")
    keep = None if towers is None else set(towers)
    rows: dict[Seg, list[int]] = {}
    for i, t in enumerate(rates.towers):
        seg = assignment.tower_seg.get(t)
        if seg is not None and (keep is None or t in keep):
            rows.setdefault(seg, []).append(i)
    out = {}
    for seg, idx in sorted(rows.items()):
        vals = rates.values[idx]
        defined = np.any(~np.isnan(vals), axis=1)
        denom = int(defined.sum())
        for thr in thresholds:
            with np.errstate(invalid="ignore"):
                hit = vals <= -float(thr)
            if mode == "ever":
                hit = np.logical_or.accumulate(hit, axis=1)
            frac = hit.sum(axis=0) / denom if denom else np.full(vals.shape[1], np.nan)
            out[(seg, float(thr))] = frac
    return ThresholdSeries(rates.window, mode, out)


def trough(curve: GroupCurve) -> tuple[int, float, float, float]:
    """(bin start, mean, ci_lo, ci_hi) at the curve's minimum."""
    j = curve.argmin()
    return int(curve.bins[j]), float(curve.mean[j]), float(curve.ci_lo[j]), float(curve.ci_hi[j])

