"""Evacuation alerts, offline place resolution and warned-tower identification.

Alerts carry no usable polygon, so the treatment area of an alert is the union
of closed balls of ``radius_km`` around every place it names. Places are
resolved against a gazetteer file instead of a live geocoder.
"""

from __future__ import annotations

import csv
import logging
import math
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError
from .timebins import Clock

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
DEFAULT_RADIUS_KM = 5.0
ALERT_COLUMNS = ("date", "hour", "event", "threat", "message", "polygon", "region", "url", "places")


def normalize_place(name: str) -> str:
    """Case-fold, strip accents and collapse whitespace."""
    decomposed = unicodedata.normalize("NFKD", name)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return " ".join(stripped.casefold().split())


def _check_coords(lat: float, lon: float, what: str) -> None:
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0) or math.isnan(lat) or math.isnan(lon):
        raise InputError(f"{what}: coordinates out of range ({lat}, {lon})")


@dataclass(frozen=True)
class Tower:
    tower_id: str
    lat: float
    lon: float
    census_zone: str


@dataclass(frozen=True)
class AlertMessage:
    id: int
    sent_at: int  # epoch seconds
    event: str
    threat: str
    message: str
    polygon: str = ""
    region: str = ""
    url: str = ""
    places: tuple[str, ...] = ()

    @property
    def unresolvable(self) -> bool:
        return not self.places


@dataclass(frozen=True)
class ResolvedPoint:
    alert_id: int
    sent_at: int
    place: str
    lat: float
    lon: float


class Gazetteer:
    """Offline place-name lookup; one coordinate per normalized name."""

    def __init__(self, entries: dict[str, tuple[float, float]] | None = None):
        self.entries: dict[str, tuple[float, float]] = {}
        for name, (lat, lon) in (entries or {}).items():
            self.add(name, lat, lon)

    def add(self, name: str, lat: float, lon: float) -> None:
        _check_coords(lat, lon, f"gazetteer entry {name!r}")
        key = normalize_place(name)
        if not key:
            raise InputError("gazetteer entry with empty name")
        prev = self.entries.get(key)
        if prev is not None and prev != (lat, lon):
            raise InputError(f"gazetteer lists {name!r} twice with different coordinates")
        self.entries[key] = (float(lat), float(lon))

    def lookup(self, name: str) -> tuple[float, float] | None:
        return self.entries.get(normalize_place(name))

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def read_csv(cls, path) -> "Gazetteer":
        gaz = cls()
        rows = _read_dicts(path, ("place", "lat", "lon"))
        for i, row in enumerate(rows, start=2):
            try:
                lat, lon = float(row["lat"]), float(row["lon"])
            except ValueError as exc:
                raise InputError(f"{path}:{i}: bad coordinate") from exc
            gaz.add(row["place"], lat, lon)
        return gaz

    def write_csv(self, path, names: dict[str, str] | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["place", "lat", "lon"])
            for key in sorted(self.entries):
                lat, lon = self.entries[key]
                w.writerow([(names or {}).get(key, key), repr(lat), repr(lon)])


def _read_dicts(path, required: Sequence[str]) -> list[dict[str, str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise InputError(f"{path}: missing header")
            missing = [c for c in required if c not in reader.fieldnames]
            if missing:
                raise InputError(f"{path}: missing column(s) {', '.join(missing)}")
            return [row for row in reader]
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def read_towers(path) -> list[Tower]:
    towers = []
    seen = set()
    for i, row in enumerate(_read_dicts(path, ("tower_id", "lat", "lon", "census_zone")), start=2):
        tid = row["tower_id"].strip()
        if not tid or tid in seen:
            raise InputError(f"{path}:{i}: empty or duplicate tower_id {tid!r}")
        try:
            lat, lon = float(row["lat"]), float(row["lon"])
        except ValueError as exc:
            raise InputError(f"{path}:{i}: bad coordinate") from exc
        _check_coords(lat, lon, f"tower {tid}")
        seen.add(tid)
        towers.append(Tower(tid, lat, lon, row["census_zone"].strip()))
    return towers


def write_towers(path, towers: Iterable[Tower]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tower_id", "lat", "lon", "census_zone"])
        for t in towers:
            w.writerow([t.tower_id, repr(t.lat), repr(t.lon), t.census_zone])


def parse_alerts(path, clock: Clock | None = None, *, strict: bool = False) -> list[AlertMessage]:
    """Read the alerts sheet (CSV export) and return alerts sorted by time.

    ``date`` is D/M/YYYY and ``hour`` HH:MM (24 h), both local. The ``places``
    column is a semicolon-separated list. Alert ids are the 0-based data-row
    numbers. Rows with a bad date or hour are reported with their row number
    and skipped (or raised on with ``strict=True``).
    """
    clock = clock or Clock()
    rows = _read_dicts(path, ("date", "hour", "event", "threat", "message", "places"))
    alerts, errors = [], []
    for idx, row in enumerate(rows):
        row_no = idx + 2
        try:
            local = datetime.strptime(f"{row['date'].strip()} {row['hour'].strip()}", "%d/%m/%Y %H:%M")
        except ValueError:
            msg = f"{path}: row {row_no}: bad date/hour {row['date']!r} {row['hour']!r}"
            if strict:
                raise InputError(msg) from None
            errors.append(msg)
            log.warning(msg)
            continue
        places = tuple(p.strip() for p in (row.get("places") or "").split(";") if p.strip())
        alert = AlertMessage(
            id=idx,
            sent_at=clock.to_epoch(local),
            event=row["event"],
            threat=row["threat"],
            message=row["message"],
            polygon=row.get("polygon", "") or "",
            region=row.get("region", "") or "",
            url=row.get("url", "") or "",
            places=places,
        )
        if alert.unresolvable:
            log.warning("alert %d has no places and cannot be resolved", alert.id)
        alerts.append(alert)
    if not alerts:
        raise InputError(f"{path}: zero valid alert rows" + (f" ({errors[0]})" if errors else ""))
    return sorted(alerts, key=lambda a: (a.sent_at, a.id))


def write_alerts(path, alerts: Iterable[AlertMessage], clock: Clock) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ALERT_COLUMNS)
        for a in alerts:
            local = clock.local(a.sent_at)
            w.writerow(
                [
                    f"{local.day}/{local.month}/{local.year}",
                    local.strftime("%H:%M"),
                    a.event,
                    a.threat,
                    a.message,
                    a.polygon,
                    a.region,
                    a.url,
                    ";".join(a.places),
                ]
            )


@dataclass
class Resolution:
    points: list[ResolvedPoint]
    unresolved: dict[int, list[str]] = field(default_factory=dict)


def resolve_places(alerts: Iterable[AlertMessage], gazetteer: Gazetteer) -> Resolution:
    """One coordinate per resolvable place mention; misses go to ``unresolved``."""
    points, unresolved = [], {}
    for alert in alerts:
        hits = 0
        for name in alert.places:
            coord = gazetteer.lookup(name)
            if coord is None:
                unresolved.setdefault(alert.id, []).append(name)
                continue
            points.append(ResolvedPoint(alert.id, alert.sent_at, name, coord[0], coord[1]))
            hits += 1
        if hits == 0:
            log.warning("alert %d: no place could be resolved", alert.id)
    return Resolution(points, unresolved)


def haversine_km(p1: tuple[float, float], p2: tuple[float, float]) -> float:
    """Great-circle distance in km between two (lat, lon) points in degrees."""
    lat1, lon1 = map(math.radians, p1)
    lat2, lon2 = map(math.radians, p2)
    a = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def haversine_matrix(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Pairwise distances (km), shape (len(lat1), len(lat2))."""
    la1 = np.radians(np.asarray(lat1, dtype=float))[:, None]
    lo1 = np.radians(np.asarray(lon1, dtype=float))[:, None]
    la2 = np.radians(np.asarray(lat2, dtype=float))[None, :]
    lo2 = np.radians(np.asarray(lon2, dtype=float))[None, :]
    a = np.sin((la2 - la1) / 2) ** 2 + np.cos(la1) * np.cos(la2) * np.sin((lo2 - lo1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(a)))


@dataclass(frozen=True)
class WarnedSet:
    """First-warned time per tower plus every (alert, tower) warning event."""

    first_warned: dict[str, int]
    first_alert: dict[str, int]
    warning_events: tuple[tuple[int, str], ...]
    radius_km: float = DEFAULT_RADIUS_KM

    def __contains__(self, tower_id: str) -> bool:
        return tower_id in self.first_warned

    def warned_by(self, cutoff: int | None = None) -> set[str]:
        if cutoff is None:
            return set(self.first_warned)
        return {t for t, ts in self.first_warned.items() if ts <= cutoff}

    def new_towers_per_alert(self, labels: dict[str, object] | None = None) -> dict[int, dict[object, int]]:
        """Towers first warned by each alert, optionally tallied by a label (e.g. SEG)."""
        out: dict[int, dict[object, int]] = {}
        for tower, alert_id in self.first_alert.items():
            key = labels.get(tower) if labels is not None else None
            bucket = out.setdefault(alert_id, {})
            bucket[key] = bucket.get(key, 0) + 1
        return out

    def write_csv(self, path, clock: Clock) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tower_id", "first_warned_iso8601", "first_alert_id"])
            for tower in sorted(self.first_warned):
                w.writerow([tower, clock.iso(self.first_warned[tower]), self.first_alert[tower]])

    @classmethod
    def read_csv(cls, path, clock: Clock) -> "WarnedSet":
        first, alert = {}, {}
        for row in _read_dicts(path, ("tower_id", "first_warned_iso8601", "first_alert_id")):
            ts = int(datetime.fromisoformat(row["first_warned_iso8601"]).timestamp())
            first[row["tower_id"]] = ts
            alert[row["tower_id"]] = int(row["first_alert_id"])
        events = tuple(sorted((a, t) for t, a in alert.items()))
        return cls(first, alert, events)


def warned_towers(
    points: Iterable[ResolvedPoint], towers: Sequence[Tower], radius_km: float = DEFAULT_RADIUS_KM
) -> WarnedSet:
    """Towers within ``radius_km`` (inclusive) of any resolved alert point.

    ``first_warned`` keeps the earliest alert time per tower; ties on time go
    to the lower alert id so the result does not depend on input order.
    """
    if not radius_km > 0:
        raise ValueError("radius_km must be positive")
    points = list(points)
    if not points or not towers:
        log.warning("no alert points or no towers: treatment group is empty")
        return WarnedSet({}, {}, (), radius_km)
    dist = haversine_matrix(
        [t.lat for t in towers], [t.lon for t in towers], [p.lat for p in points], [p.lon for p in points]
    )
    hit_t, hit_p = np.nonzero(dist <= radius_km)
    events = sorted({(points[p].alert_id, towers[t].tower_id) for t, p in zip(hit_t.tolist(), hit_p.tolist())})
    first: dict[str, tuple[int, int]] = {}
    for t, p in zip(hit_t.tolist(), hit_p.tolist()):
        key = (points[p].sent_at, points[p].alert_id)
        tid = towers[t].tower_id
        if tid not in first or key < first[tid]:
            first[tid] = key
    if not first:
        log.warning("no tower lies within %.3f km of any alert point: treatment group is empty", radius_km)
    return WarnedSet(
        {t: k[0] for t, k in first.items()},
        {t: k[1] for t, k in first.items()},
        tuple(events),
        radius_km,
    )
