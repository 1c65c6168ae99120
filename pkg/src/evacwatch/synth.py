"""Seeded synthetic scenarios with known ground truth.

Per tower the generator draws a baseline population with a daily cycle, then
builds event-day REX trajectories from segmented-regression coefficients and
back-solves event counts from the baseline profile:

    n_t = n_b (1 + r) / (1 - r)

Randomness comes from numpy's PCG64 generator. Every tower draws from its own
child stream spawned from the scenario seed, so a tower's draws do not depend
on the number of towers generated before it.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

import numpy as np
import pyarrow as pa

from .errors import UsageError
from .geoalert import AlertMessage, Gazetteer, Tower, haversine_km, normalize_place, write_alerts, write_towers
from .records import BaselineProfile, ConnectivitySeries, RecordBatch, build_baseline, write_records
from .seg import CensusZone, Seg, write_zones
from .timebins import BIN_SECONDS, BINS_PER_DAY, Clock, Window
from .metrics import TowerSeries

log = logging.getLogger(__name__)

REX_CEILING = 1.0 - 1e-6
PEAK_HOUR = 14.0
MAX_DEVICES_PER_CELL = 10**6

Coefficients = tuple[float, float, float, float, float, float, float, float]
GroupKey = tuple[Seg, bool]  # (seg, warned)

# Segmented-regression coefficients (b0..b7) injected by the golden preset.
GOLDEN_DAY1: dict[Seg, Coefficients] = {
    Seg.LOW: (-0.051, 0.001, -0.393, 0.026, -0.065, 0.0, -0.360, 0.030),
    Seg.MEDIUM: (-0.045, 0.001, -0.463, 0.031, -0.054, 0.001, -0.242, 0.015),
    Seg.HIGH: (-0.053, 0.001, -0.675, 0.045, -0.042, 0.0, -0.114, 0.005),
}
GOLDEN_DAY2: dict[Seg, Coefficients] = {
    Seg.LOW: (0.141, 0.0, -0.002, 0.001, 0.128, 0.0, 0.054, -0.003),
    Seg.MEDIUM: (0.256, -0.001, -0.003, 0.001, 0.0, 0.0, -0.046, -0.004),
    Seg.HIGH: (0.487, -0.002, 0.005, 0.002, -0.228, 0.001, -0.073, -0.001),
}
GOLDEN_TROUGHS: dict[GroupKey, float] = {
    (Seg.LOW, False): -0.47,
    (Seg.MEDIUM, False): -0.56,
    (Seg.HIGH, False): -0.81,
    (Seg.LOW, True): -0.87,
    (Seg.MEDIUM, True): -0.80,
    (Seg.HIGH, True): -0.93,
}
# (local send time, newly warned towers per group)
GOLDEN_ALERTS: tuple[tuple[str, dict[Seg, int]], ...] = tuple(
    (when, {Seg.HIGH: h, Seg.MEDIUM: m, Seg.LOW: lo})
    for when, h, m, lo in [
        ("2024-02-02 16:45", 2, 0, 0),
        ("2024-02-02 18:30", 12, 12, 4),
        ("2024-02-02 18:45", 4, 8, 3),
        ("2024-02-02 19:45", 0, 7, 6),
        ("2024-02-02 21:15", 1, 1, 0),
        ("2024-02-03 10:45", 1, 0, 1),
        ("2024-02-03 12:15", 4, 1, 3),
        ("2024-02-03 13:00", 1, 2, 0),
        ("2024-02-03 14:15", 6, 6, 2),
        ("2024-02-03 14:30", 0, 1, 1),
        ("2024-02-03 15:00", 17, 0, 0),
        ("2024-02-03 17:00", 0, 1, 0),
        ("2024-02-03 18:00", 2, 0, 6),
        ("2024-02-03 18:30", 0, 0, 2),
    ]
)
PLACE_NAMES = (
    "Quebrada Escobares",
    "Población Achupallas",
    "El Olivar",
    "Villa Independencia",
    "Nueva Aurora",
    "Forestal Alto",
    "Chorrillos",
    "Miraflores Alto",
    "Santa Julia",
    "Gómez Carreño",
    "Reñaca Alto",
    "Canal Beagle",
    "Glorias Navales",
    "Limonares",
)
GEO_CENTER = (-33.05, -71.45)


@dataclass(frozen=True)
class Segment:
    """One regression regime: T restarts at ``start``; I0 switches on at intervention + delay."""

    start: str
    end: str
    intervention: str
    coefficients: Mapping[Seg, Coefficients]
    troughs: Mapping[GroupKey, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of a synthetic scenario.

    ``heterogeneity`` is the across-tower standard deviation of persistent
    tower offsets. Offsets are scaled by (1 - |r|)^2 around the group
    trajectory and sum to zero within each group, so they widen group
    intervals without moving group means. ``trough_bins`` consecutive bins
    starting at intervention + delay are pinned to the group's trough target
    (when one is given) by a transient orthogonal to the group's own
    segmented-regression design.
    """

    seed: int = 0
    n_warned: Mapping[Seg, int] = field(default_factory=lambda: {s: 20 for s in Seg})
    n_control: Mapping[Seg, int] = field(default_factory=lambda: {s: 20 for s in Seg})
    baseline_mean: float = 440.0
    baseline_spread: float = 0.25
    amplitude: float = 0.6
    count_noise: float = 0.03
    sigma: float = 0.02
    delay_min: int = 75
    segments: tuple[Segment, ...] = ()
    heterogeneity: float = 0.0
    trough_bins: int = 2
    plateau: Mapping[GroupKey, float] = field(default_factory=dict)
    baseline_window: tuple[str, str] = ("2024-01-25 07:00", "2024-01-28 00:00")
    event_window: tuple[str, str] = ("2024-02-01 07:00", "2024-02-04 00:00")
    baseline_rule: str = "time_of_day"
    alerts: tuple[tuple[str, Mapping[Seg, int]], ...] | None = None
    repeat_extra: float = 0.5
    tz: str = "America/Santiago"
    name: str = "custom"

    def validate(self) -> None:
        if self.sigma < 0 or self.heterogeneity < 0 or self.count_noise < 0:
            raise UsageError("noise parameters must be nonnegative")
        if self.delay_min < 0 or (self.delay_min * 60) % BIN_SECONDS:
            raise UsageError("delay must be a nonnegative multiple of 15 minutes")
        for seg in Seg:
            if self.n_warned.get(seg, 0) < 1 or self.n_control.get(seg, 0) < 1:
                raise UsageError("every SEG needs at least one warned and one control tower")
        if not self.segments:
            raise UsageError("scenario needs at least one regression segment")
        if self.baseline_mean <= 0 or not 0 <= self.amplitude < 1:
            raise UsageError("baseline mean must be positive and amplitude in [0, 1)")
        if self.alerts is not None:
            for seg in Seg:
                if sum(a[1].get(seg, 0) for a in self.alerts) != self.n_warned[seg]:
                    raise UsageError(f"alert schedule does not warn exactly n_warned[{seg.label}] towers")

    @property
    def clock(self) -> Clock:
        return Clock(self.tz)

    def window(self, which: str) -> Window:
        start, end = self.baseline_window if which == "baseline" else self.event_window
        return Window.parse(start, end, self.clock)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_warned"] = {s.label: n for s, n in self.n_warned.items()}
        d["n_control"] = {s.label: n for s, n in self.n_control.items()}
        d["segments"] = [
            {
                "start": g.start,
                "end": g.end,
                "intervention": g.intervention,
                "coefficients": {s.label: list(c) for s, c in g.coefficients.items()},
                "troughs": {f"{s.label}/{'warned' if w else 'control'}": v for (s, w), v in g.troughs.items()},
            }
            for g in self.segments
        ]
        d["plateau"] = {f"{s.label}/{'warned' if w else 'control'}": v for (s, w), v in self.plateau.items()}
        d["alerts"] = None if self.alerts is None else [[t, {s.label: n for s, n in m.items()}] for t, m in self.alerts]
        return d


def golden_scenario(seed: int = 20240202) -> ScenarioConfig:
    """Two daily regimes with the reference coefficients, 75 min delay and trough targets.

    Warned counts per SEG follow the alert schedule (50 high, 39 medium,
    27 low); each SEG also has 100 control towers.
    """
    day1 = Segment("2024-02-02 00:00", "2024-02-03 00:00", "2024-02-02 16:45", GOLDEN_DAY1, GOLDEN_TROUGHS)
    day2 = Segment("2024-02-03 00:00", "2024-02-04 00:00", "2024-02-03 10:45", GOLDEN_DAY2)
    warned = {seg: sum(a[1][seg] for a in GOLDEN_ALERTS) for seg in Seg}
    return ScenarioConfig(
        seed=seed,
        n_warned=warned,
        n_control={s: 100 for s in Seg},
        segments=(day1, day2),
        heterogeneity=0.25,
        alerts=GOLDEN_ALERTS,
        name="golden",
    )


def null_scenario(seed: int = 0, n_per_group: int = 40) -> ScenarioConfig:
    """Affected and control towers generated identically (no group terms, no troughs)."""
    coefs = {seg: (c[0], c[1], c[2], c[3], 0.0, 0.0, 0.0, 0.0) for seg, c in GOLDEN_DAY1.items()}
    day1 = Segment("2024-02-02 00:00", "2024-02-03 00:00", "2024-02-02 16:45", coefs)
    return ScenarioConfig(
        seed=seed,
        n_warned={s: n_per_group for s in Seg},
        n_control={s: n_per_group for s in Seg},
        segments=(day1,),
        event_window=("2024-02-02 00:00", "2024-02-03 00:00"),
        name="null",
    )


def throughput_scenario(target_records: int = 10**7, seed: int = 7) -> ScenarioConfig:
    """One baseline day and one event day sized to emit about ``target_records`` records."""
    n_per_group = 10
    n_towers = 6 * n_per_group
    cells = n_towers * 2 * BINS_PER_DAY
    day = Segment("2024-02-02 00:00", "2024-02-03 00:00", "2024-02-02 16:45", GOLDEN_DAY1)
    # event-day counts run a little below baseline on average
    mean = target_records / (cells * (1.0 + 0.5) * 0.93)
    return ScenarioConfig(
        seed=seed,
        n_warned={s: n_per_group for s in Seg},
        n_control={s: n_per_group for s in Seg},
        baseline_mean=mean,
        segments=(day,),
        baseline_window=("2024-01-25 00:00", "2024-01-26 00:00"),
        event_window=("2024-02-02 00:00", "2024-02-03 00:00"),
        name="throughput",
    )


PRESETS = {"golden": golden_scenario, "null": null_scenario, "throughput": throughput_scenario}


# ---------------------------------------------------------------------------
# ground truth and outputs


@dataclass
class GroundTruth:
    seed: int
    delay_min: int
    coefficients: list[dict[str, list[float]]]
    interventions: list[str]
    troughs: dict[str, float]
    tower_seg: dict[str, str]
    tower_warned: dict[str, bool]
    first_alert: dict[str, int]
    new_towers_per_alert: list[dict[str, int]]
    zone_seg: dict[str, str]
    clip_events: int = 0
    count_clip_events: int = 0
    emitted_record_count: int | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        return cls(**json.loads(text))

    def towers(self, seg: Seg, warned: bool) -> list[str]:
        return sorted(t for t, s in self.tower_seg.items() if s == seg.label and self.tower_warned[t] == warned)


@dataclass(frozen=True, eq=False)
class Geography:
    towers: tuple[Tower, ...]
    zones: tuple[CensusZone, ...]
    gazetteer: Gazetteer
    place_names: tuple[str, ...]
    alerts: tuple[AlertMessage, ...]


@dataclass(frozen=True, eq=False)
class SynthOutput:
    config: ScenarioConfig
    baseline: ConnectivitySeries
    event: ConnectivitySeries
    profile: BaselineProfile
    rex: TowerSeries
    truth: GroundTruth
    geography: Geography

    @property
    def clock(self) -> Clock:
        return self.config.clock


# ---------------------------------------------------------------------------
# trajectories


def _its_block(n_bins: int, t_star: int) -> np.ndarray:
    t = np.arange(n_bins, dtype=np.float64)
    post = (t >= t_star).astype(np.float64)
    return np.column_stack([np.ones(n_bins), t, post, np.maximum(0.0, t - t_star)])


def segment_trajectory(
    coefficients: Coefficients, n_bins: int, t_star: int, warned: bool, trough: float | None = None, trough_bins: int = 2
) -> np.ndarray:
    """Noiseless group REX over one segment, optionally pinned to a trough target."""
    X = _its_block(n_bins, t_star)
    b = np.asarray(coefficients, dtype=np.float64)
    m = X @ b[:4] + (X @ b[4:] if warned else 0.0)
    if trough is None:
        return m
    K = np.arange(t_star, min(n_bins, t_star + trough_bins))
    if K.size == 0:
        return m
    # transient d = (I - P) E c lies outside the column space of X
    M = np.eye(n_bins) - X @ np.linalg.solve(X.T @ X, X.T)
    c = np.linalg.solve(M[np.ix_(K, K)], np.full(K.size, trough) - m[K])
    return m + M[:, K] @ c


def group_trajectory(config: ScenarioConfig, key: GroupKey) -> np.ndarray:
    """Noiseless REX of one (SEG, warned) group over the event window."""
    seg, warned = key
    clock = config.clock
    window = config.window("event")
    r = np.zeros(window.n_bins)
    covered = np.zeros(window.n_bins, dtype=bool)
    first_start = None
    delay_bins = config.delay_min * 60 // BIN_SECONDS
    for s in config.segments:
        w = Window.parse(s.start, s.end, clock)
        if w.start < window.start or w.end > window.end:
            raise UsageError(f"segment {s.start}..{s.end} lies outside the event window")
        t_int = (clock.parse(s.intervention) - w.start) // BIN_SECONDS
        if not 0 <= t_int < w.n_bins:
            raise UsageError(f"intervention {s.intervention} lies outside its segment")
        traj = segment_trajectory(
            s.coefficients[seg], w.n_bins, int(t_int + delay_bins), warned, s.troughs.get(key), config.trough_bins
        )
        a = int(window.index(w.start))
        r[a : a + w.n_bins] = traj
        covered[a : a + w.n_bins] = True
        first_start = a if first_start is None else min(first_start, a)
    after = ~covered & (np.arange(window.n_bins) > (first_start or 0))
    r[after] = config.plateau.get(key, 0.0)
    if np.any(r >= 1.0) or np.any(r < -1.0):
        raise UsageError(f"injected REX for {seg.label}/{'warned' if warned else 'control'} leaves [-1, 1)")
    return r


def daily_curve(tod_hours: np.ndarray) -> np.ndarray:
    """Raised cosine in [-1, 1] peaking at 14:00 local."""
    return np.cos(2.0 * math.pi * (tod_hours - PEAK_HOUR) / 24.0)


# ---------------------------------------------------------------------------
# geography


def _offset_point(rng: np.random.Generator, lat: float, lon: float, max_km: float) -> tuple[float, float]:
    dist = max_km * math.sqrt(rng.random())
    theta = 2 * math.pi * rng.random()
    dlat = dist * math.cos(theta) / 111.195
    dlon = dist * math.sin(theta) / (111.195 * math.cos(math.radians(lat)))
    return lat + dlat, lon + dlon


def _alert_schedule(config: ScenarioConfig) -> tuple[tuple[str, Mapping[Seg, int]], ...]:
    if config.alerts is not None:
        return config.alerts
    return ((config.segments[0].intervention, dict(config.n_warned)),)


def build_geography(config: ScenarioConfig, labels: list[GroupKey], tower_ids: list[str]) -> tuple[Geography, dict[str, int]]:
    """Places, alerts, tower positions and census zones consistent with the labels.

    Each alert names its own place (plus the previous alert's place); its
    newly warned towers sit within 3.5 km of that place. Places are 15 km
    apart and controls lie more than 6 km from every place, so the warned
    set at a 5 km radius is exactly the labelled one.
    """
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    clock = config.clock
    schedule = _alert_schedule(config)
    n_alerts = len(schedule)
    side = max(1, math.ceil(math.sqrt(n_alerts)))
    places = []
    for k in range(n_alerts):
        row, col = divmod(k, side)
        lat = GEO_CENTER[0] + (row - side / 2) * 15.0 / 111.195
        lon = GEO_CENTER[1] + (col - side / 2) * 15.0 / (111.195 * math.cos(math.radians(GEO_CENTER[0])))
        name = PLACE_NAMES[k] if k < len(PLACE_NAMES) else f"Sector {k:02d}"
        places.append((name, round(lat, 6), round(lon, 6)))
    gazetteer = Gazetteer()
    for name, lat, lon in places:
        gazetteer.add(name, lat, lon)

    # hand out warned towers to alerts in schedule order
    pools: dict[Seg, list[int]] = {s: [i for i, (seg, w) in enumerate(labels) if seg == s and w] for s in Seg}
    first_alert: dict[str, int] = {}
    coords: dict[int, tuple[float, float]] = {}
    for k, (_, counts) in enumerate(schedule):
        for seg in Seg:
            for _ in range(counts.get(seg, 0)):
                i = pools[seg].pop(0)
                first_alert[tower_ids[i]] = k
                coords[i] = _offset_point(rng, places[k][1], places[k][2], 3.5)
    lats = [p[1] for p in places]
    lons = [p[2] for p in places]
    lat_lo, lat_hi = min(lats) - 0.15, max(lats) + 0.15
    lon_lo, lon_hi = min(lons) - 0.18, max(lons) + 0.18
    for i, (_, warned) in enumerate(labels):
        if warned:
            continue
        while True:
            cand = (lat_lo + (lat_hi - lat_lo) * rng.random(), lon_lo + (lon_hi - lon_lo) * rng.random())
            if min(haversine_km(cand, (la, lo)) for la, lo in zip(lats, lons)) > 6.0:
                coords[i] = cand
                break

    # zones: each SEG block holds exactly one third of the population
    frac_ranges = {Seg.LOW: (0.05, 0.25), Seg.MEDIUM: (0.30, 0.50), Seg.HIGH: (0.55, 0.85)}
    zones: list[CensusZone] = []
    zone_of: dict[int, str] = {}
    block_zones: dict[Seg, list[list[int]]] = {}
    for seg in Seg:
        members = [i for i, (s, _) in enumerate(labels) if s == seg]
        members = [members[j] for j in rng.permutation(len(members))]
        chunks, pos = [], 0
        while pos < len(members):
            size = 1 if pos == len(members) - 1 else int(rng.integers(1, 3))
            chunks.append(members[pos : pos + size])
            pos += size
        block_zones[seg] = chunks
    pops = {seg: [int(p) for p in rng.integers(800, 2500, len(ch))] for seg, ch in block_zones.items()}
    target = max(sum(p) for p in pops.values())
    zone_no = 0
    for seg in Seg:
        extra = target - sum(pops[seg])
        share, rem = divmod(extra, len(pops[seg]))
        pops[seg] = [p + share for p in pops[seg]]
        pops[seg][0] += rem
        lo, hi = frac_ranges[seg]
        fracs = np.sort(rng.uniform(lo, hi, len(block_zones[seg])))
        for chunk, pop, frac in zip(block_zones[seg], pops[seg], fracs):
            zid = f"Z{zone_no:04d}"
            zone_no += 1
            zones.append(CensusZone(zid, pop, round(float(frac), 6)))
            for i in chunk:
                zone_of[i] = zid
    towers = tuple(
        Tower(tower_ids[i], round(coords[i][0], 6), round(coords[i][1], 6), zone_of[i]) for i in range(len(labels))
    )
    alerts = []
    for k, (when, _) in enumerate(schedule):
        names = (places[k][0],) if k == 0 else (places[k][0], places[k - 1][0])
        alerts.append(
            AlertMessage(
                id=k,
                sent_at=clock.parse(when),
                event="Incendio forestal",
                threat="Amenaza de incendio",
                message=f"Evacue sector {places[k][0]}",
                region="Valparaiso",
                places=names,
            )
        )
    names = tuple(p[0] for p in places)
    geo = Geography(towers, tuple(sorted(zones, key=lambda z: z.zone_id)), gazetteer, names, tuple(alerts))
    return geo, {t: first_alert[t] for t in sorted(first_alert)}


# ---------------------------------------------------------------------------
# generation


def _labels(config: ScenarioConfig) -> list[GroupKey]:
    out: list[GroupKey] = []
    for seg in Seg:
        out += [(seg, True)] * config.n_warned[seg]
        out += [(seg, False)] * config.n_control[seg]
    return out


def generate_series(config: ScenarioConfig) -> SynthOutput:
    """Baseline and event connectivity series plus the injected REX panel."""
    config.validate()
    clock = config.clock
    base_w, event_w = config.window("baseline"), config.window("event")
    labels = _labels(config)
    n = len(labels)
    # ids carry no information about group membership
    perm = np.random.default_rng(np.random.SeedSequence([config.seed, 2])).permutation(n)
    tower_ids = [f"T{int(perm[i]) + 1:04d}" for i in range(n)]
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence([config.seed, 3]).spawn(n)]

    base_off = clock.constant_offset(base_w.start, max(base_w.start, base_w.end - BIN_SECONDS))
    tod_h = (clock.tod_index(base_w.bins, base_off) * BIN_SECONDS / 3600.0).astype(np.float64)
    shape = 1.0 + config.amplitude * daily_curve(tod_h)

    base_counts = np.zeros((n, base_w.n_bins), dtype=np.int64)
    count_clips = 0
    draws = []
    for i, rng in enumerate(streams):
        mu = config.baseline_mean * math.exp(config.baseline_spread * rng.standard_normal() - config.baseline_spread**2 / 2)
        level = mu * shape
        raw = np.rint(level + config.count_noise * level * rng.standard_normal(base_w.n_bins))
        count_clips += int(np.sum(raw < 0))
        base_counts[i] = np.maximum(raw, 0).astype(np.int64)
        draws.append((rng.standard_normal(), rng.standard_normal(event_w.n_bins)))

    order = np.argsort(tower_ids)
    ids_sorted = tuple(tower_ids[i] for i in order)
    baseline = ConnectivitySeries(ids_sorted, base_w, base_counts[order])
    profile = build_baseline(baseline, rule=config.baseline_rule, clock=clock)
    shell = ConnectivitySeries(ids_sorted, event_w, np.zeros((n, event_w.n_bins), dtype=np.int64))
    _, n_b_sorted = profile.expected_for(shell, clock)
    if np.isnan(n_b_sorted).any():
        raise UsageError("baseline window does not cover every time-of-day bin of the event window")
    n_b = np.empty_like(n_b_sorted)
    n_b[order] = n_b_sorted

    trajectories = {key: group_trajectory(config, key) for key in set(labels)}
    offsets = np.zeros(n)
    if config.heterogeneity > 0:
        z = np.array([d[0] for d in draws])
        for key in trajectories:
            idx = np.array([i for i, lab in enumerate(labels) if lab == key])
            if idx.size > 1:
                u = z[idx] - z[idx].mean()
                sd = u.std(ddof=1)
                offsets[idx] = u * (config.heterogeneity / sd) if sd > 0 else 0.0
    r = np.empty((n, event_w.n_bins))
    for i, key in enumerate(labels):
        g = trajectories[key]
        r[i] = g + offsets[i] * (1.0 - np.abs(g)) ** 2 + config.sigma * draws[i][1]
    clips = int(np.sum((r < -1.0) | (r > REX_CEILING)))
    if clips:
        log.warning("%d injected REX values clipped into [-1, 1)", clips)
    r = np.clip(r, -1.0, REX_CEILING)
    event_counts = np.rint(n_b * (1.0 + r) / (1.0 - r)).astype(np.int64)

    event = ConnectivitySeries(ids_sorted, event_w, event_counts[order])
    rex_panel = TowerSeries(ids_sorted, event_w, r[order], "rex")

    geography, first_alert = build_geography(config, labels, tower_ids)
    schedule = _alert_schedule(config)
    truth = GroundTruth(
        seed=config.seed,
        delay_min=config.delay_min,
        coefficients=[{s.label: list(c) for s, c in seg.coefficients.items()} for seg in config.segments],
        interventions=[seg.intervention for seg in config.segments],
        troughs={
            f"{s.label}/{'warned' if w else 'control'}": v for seg in config.segments[:1] for (s, w), v in seg.troughs.items()
        },
        tower_seg={tower_ids[i]: labels[i][0].label for i in range(n)},
        tower_warned={tower_ids[i]: labels[i][1] for i in range(n)},
        first_alert=first_alert,
        new_towers_per_alert=[{s.label: int(c.get(s, 0)) for s in Seg} for _, c in schedule],
        zone_seg={},
        clip_events=clips,
        count_clip_events=count_clips,
    )
    zone_labels = {}
    by_id = {t.tower_id: t for t in geography.towers}
    for tid, seg_label in truth.tower_seg.items():
        zone_labels[by_id[tid].census_zone] = seg_label
    truth.zone_seg = dict(sorted(zone_labels.items()))
    return SynthOutput(config, baseline, event, profile, rex_panel, truth, geography)


def series_to_records(series: ConnectivitySeries, rng: np.random.Generator, repeat_extra: float = 0.5) -> RecordBatch:
    """Raw records whose distinct-device aggregation reproduces ``series`` exactly.

    In cell (tower, bin) with count c the devices are that tower's ids 0..c-1,
    so a device keeps its id across bins. Each device emits 1 + Poisson
    (``repeat_extra``) events at uniform offsets inside the bin.
    """
    counts = series.counts.reshape(-1).astype(np.int64)
    if counts.size and counts.max() >= MAX_DEVICES_PER_CELL:
        raise UsageError("cell count too large for synthetic device numbering")
    n_bins = series.window.n_bins
    cell = np.repeat(np.arange(counts.size, dtype=np.int64), counts)
    starts = np.cumsum(counts) - counts
    local = np.arange(cell.size, dtype=np.int64) - starts[cell]
    tower = cell // n_bins
    device = tower * MAX_DEVICES_PER_CELL + local
    mult = 1 + rng.poisson(repeat_extra, cell.size)
    rec_cell = np.repeat(cell, mult)
    rec_device = np.repeat(device, mult)
    ts = series.window.start + (rec_cell % n_bins) * BIN_SECONDS + rng.integers(0, BIN_SECONDS, rec_cell.size)
    kb = np.round(rng.exponential(40.0, rec_cell.size), 3)
    order = np.argsort(ts, kind="stable")
    names = pa.array(list(series.towers), type=pa.string())
    return RecordBatch(
        pa.array(rec_device[order]).cast(pa.string()),
        ts[order].astype(np.int64),
        names.take(pa.array(rec_cell[order] // n_bins)),
        kb[order],
    )


def generate_records(config: ScenarioConfig, output: SynthOutput | None = None) -> tuple[RecordBatch, SynthOutput]:
    """Records for the baseline and event windows, plus the series they aggregate to."""
    output = output or generate_series(config)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 4]))
    batch = RecordBatch.concat(
        [series_to_records(output.baseline, rng, config.repeat_extra), series_to_records(output.event, rng, config.repeat_extra)]
    )
    output.truth.emitted_record_count = len(batch)
    return batch, output


def write_scenario(output: SynthOutput, out_dir, records: RecordBatch | None = None) -> dict[str, str]:
    """Write every scenario artifact into ``out_dir``; returns name -> path."""
    os.makedirs(out_dir, exist_ok=True)
    clock = output.clock
    paths = {
        name: os.path.join(out_dir, name)
        for name in (
            "towers.csv",
            "zones.csv",
            "gazetteer.csv",
            "alerts.csv",
            "baseline_series.csv",
            "event_series.csv",
            "ground_truth.json",
            "scenario.json",
        )
    }
    geo = output.geography
    write_towers(paths["towers.csv"], geo.towers)
    write_zones(paths["zones.csv"], geo.zones)
    geo.gazetteer.write_csv(paths["gazetteer.csv"], {normalize_place(name): name for name in geo.place_names})
    write_alerts(paths["alerts.csv"], geo.alerts, clock)
    output.baseline.write_csv(paths["baseline_series.csv"], clock)
    output.event.write_csv(paths["event_series.csv"], clock)
    if records is not None:
        paths["records.csv"] = os.path.join(out_dir, "records.csv")
        write_records(paths["records.csv"], records)
    with open(paths["ground_truth.json"], "w", encoding="utf-8") as fh:
        fh.write(output.truth.to_json())
    with open(paths["scenario.json"], "w", encoding="utf-8") as fh:
        json.dump(output.config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def with_seed(config: ScenarioConfig, seed: int, **changes) -> ScenarioConfig:
    return replace(config, seed=seed, **changes)
