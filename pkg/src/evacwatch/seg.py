"""Socio-economic groups from population-weighted tertiles of higher-education share."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError
from .geoalert import Tower, _read_dicts

log = logging.getLogger(__name__)

MAX_UNKNOWN_ZONE_FRACTION = 0.10


class Seg(IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, text: str) -> "Seg":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise InputError(f"unknown socio-economic group {text!r}") from None


@dataclass(frozen=True)
class CensusZone:
    zone_id: str
    population: int
    higher_ed_fraction: float

    def __post_init__(self):
        if self.population < 0:
            raise InputError(f"zone {self.zone_id}: negative population")
        if not 0.0 <= self.higher_ed_fraction <= 1.0:
            raise InputError(f"zone {self.zone_id}: higher_ed_fraction outside [0, 1]")


@dataclass(frozen=True)
class SegAssignment:
    zone_seg: dict[str, Seg]
    cut_points: tuple[float, float]
    tower_seg: dict[str, Seg] = field(default_factory=dict)
    unknown_towers: tuple[str, ...] = ()

    def with_towers(self, tower_seg: dict[str, Seg], unknown: Sequence[str] = ()) -> "SegAssignment":
        return SegAssignment(self.zone_seg, self.cut_points, tower_seg, tuple(unknown))

    def towers_in(self, seg: Seg) -> list[str]:
        return sorted(t for t, s in self.tower_seg.items() if s == seg)

    def write_zone_csv(self, path) -> None:
        _write_pairs(path, "zone_id", self.zone_seg)

    def write_tower_csv(self, path) -> None:
        _write_pairs(path, "tower_id", self.tower_seg)

    def write_sidecar(self, path) -> None:
        payload = {"cut_points": list(self.cut_points), "n_zones": len(self.zone_seg)}
        for seg in Seg:
            payload[f"n_zones_{seg.label.lower()}"] = sum(1 for s in self.zone_seg.values() if s == seg)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, zone_csv, tower_csv=None, sidecar=None) -> "SegAssignment":
        zones = _read_pairs(zone_csv, "zone_id")
        towers = _read_pairs(tower_csv, "tower_id") if tower_csv else {}
        cuts = (float("nan"), float("nan"))
        if sidecar:
            with open(sidecar, encoding="utf-8") as fh:
                cuts = tuple(json.load(fh)["cut_points"])
        return cls(zones, cuts, towers)


def _write_pairs(path, key: str, mapping: Mapping[str, Seg]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([key, "seg"])
        for k in sorted(mapping):
            w.writerow([k, mapping[k].label])


def _read_pairs(path, key: str) -> dict[str, Seg]:
    return {row[key]: Seg.parse(row["seg"]) for row in _read_dicts(path, (key, "seg"))}


def read_zones(path) -> list[CensusZone]:
    zones, seen = [], set()
    for i, row in enumerate(_read_dicts(path, ("zone_id", "population", "higher_ed_fraction")), start=2):
        zid = row["zone_id"].strip()
        if zid in seen:
            raise InputError(f"{path}:{i}: duplicate zone_id {zid!r}")
        try:
            pop = int(row["population"])
            frac = float(row["higher_ed_fraction"])
        except ValueError as exc:
            raise InputError(f"{path}:{i}: {exc}") from exc
        seen.add(zid)
        zones.append(CensusZone(zid, pop, frac))
    return zones


def write_zones(path, zones: Iterable[CensusZone]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zone_id", "population", "higher_ed_fraction"])
        for z in zones:
            w.writerow([z.zone_id, z.population, repr(z.higher_ed_fraction)])


def assign_zone_seg(zones: Sequence[CensusZone]) -> SegAssignment:
    """Split zones into population tertiles of ``higher_ed_fraction``.

    Zones are ordered by (fraction, zone_id). With cumulative population
    ``c`` before a zone and total ``T``, the zone is Low if ``c < T/3``,
    Medium if ``c < 2T/3`` and High otherwise, so a zone straddling a cut
    falls in the lower group. Integer arithmetic keeps the comparison exact.

    The cut points are the fractions of the zones that contain the 1/3 and
    2/3 population quantiles.
    """
    ids = [z.zone_id for z in zones]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate zone_id in zone list")
    total = sum(z.population for z in zones)
    if total <= 0:
        raise InputError("total zone population is zero; tertiles are undefined")
    if len(zones) < 3:
        log.warning("only %d census zone(s): tertiles are degenerate", len(zones))
    ordered = sorted(zones, key=lambda z: (z.higher_ed_fraction, z.zone_id))
    zone_seg: dict[str, Seg] = {}
    cuts: list[float] = []
    cum = 0
    for z in ordered:
        if 3 * cum < total:
            seg = Seg.LOW
        elif 3 * cum < 2 * total:
            seg = Seg.MEDIUM
        else:
            seg = Seg.HIGH
        zone_seg[z.zone_id] = seg
        after = cum + z.population
        for k in (1, 2):
            if len(cuts) < k and 3 * after >= k * total and z.population > 0:
                cuts.append(z.higher_ed_fraction)
        cum = after
    while len(cuts) < 2:
        cuts.append(ordered[-1].higher_ed_fraction)
    return SegAssignment(zone_seg, (cuts[0], cuts[1]))


def assign_tower_seg(towers: Sequence[Tower], zones: SegAssignment) -> SegAssignment:
    """Each tower inherits the group of its census zone.

    Towers whose zone is unknown are listed and left unassigned; more than
    10% unknown is fatal.
    """
    tower_seg: dict[str, Seg] = {}
    unknown = []
    for t in towers:
        seg = zones.zone_seg.get(t.census_zone)
        if seg is None:
            unknown.append(t.tower_id)
            log.error("tower %s: unknown census zone %r", t.tower_id, t.census_zone)
        else:
            tower_seg[t.tower_id] = seg
    if towers and len(unknown) > MAX_UNKNOWN_ZONE_FRACTION * len(towers):
        raise InputError(
            f"{len(unknown)} of {len(towers)} towers reference unknown census zones: {', '.join(unknown[:10])}"
        )
    return zones.with_towers(tower_seg, unknown)


def group_populations(zones: Sequence[CensusZone], assignment: SegAssignment) -> np.ndarray:
    """Total population per group, indexed by Seg value."""
    out = np.zeros(len(Seg), dtype=np.int64)
    for z in zones:
        out[assignment.zone_seg[z.zone_id]] += z.population
    return out
