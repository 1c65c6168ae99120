"""15-minute time bins in a single configured civil timezone.

Instants are handled as integer epoch seconds throughout the package. Bins are
identified by their start instant. Local time-of-day and calendar-day indices
are derived with one UTC offset per analysed span; spans that cross a DST
transition are rejected rather than silently misaligned.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from functools import lru_cache
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

import numpy as np

from .errors import InputError, UsageError

BIN_SECONDS = 900
BINS_PER_DAY = 96
DAY_SECONDS = 86400
DEFAULT_TZ = "America/Santiago"
TZ_ENV_VAR = "EVACWATCH_TZ"

_LOCAL_FORMATS = ("%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M")


def floor_to_bin(ts):
    """Start of the 15-minute bin containing ``ts`` (scalar or array).

    Equivalent to flooring in local time because every offset accepted by
    :class:`Clock` is a whole number of bins.
    """
    if isinstance(ts, np.ndarray):
        return ts - np.mod(ts, BIN_SECONDS)
    ts = int(ts)
    return ts - ts % BIN_SECONDS


def resolve_tz(name: str | None = None) -> str:
    return name or os.environ.get(TZ_ENV_VAR) or DEFAULT_TZ


@lru_cache(maxsize=None)
def _zone(name: str) -> ZoneInfo:
    try:
        return ZoneInfo(name)
    except (ZoneInfoNotFoundError, ValueError) as exc:
        raise UsageError(f"unknown timezone {name!r}") from exc


@dataclass(frozen=True)
class Clock:
    """Conversions between epoch seconds and local civil time."""

    tz: str = DEFAULT_TZ

    @property
    def zone(self) -> ZoneInfo:
        return _zone(self.tz)

    def offset(self, ts: int) -> int:
        off = datetime.fromtimestamp(int(ts), self.zone).utcoffset()
        seconds = int(off.total_seconds())
        if seconds % BIN_SECONDS:
            raise InputError(f"UTC offset of {self.tz} is not a multiple of 15 minutes")
        return seconds

    def constant_offset(self, ts_min: int, ts_max: int) -> int:
        """UTC offset valid for the whole span, or InputError if it changes."""
        first = self.offset(ts_min)
        step = 6 * 3600 if ts_max - ts_min <= 400 * DAY_SECONDS else DAY_SECONDS
        for ts in range(int(ts_min), int(ts_max) + 1, step):
            if self.offset(ts) != first:
                break
        else:
            if self.offset(ts_max) == first:
                return first
        raise InputError(
            f"span {self.iso(ts_min)} .. {self.iso(ts_max)} crosses a DST transition in {self.tz}"
        )

    def to_epoch(self, local: datetime) -> int:
        if local.tzinfo is None:
            local = local.replace(tzinfo=self.zone)
        return int(local.timestamp())

    def parse(self, text: str) -> int:
        """Epoch seconds from a local 'YYYY-MM-DD HH:MM[:SS]' string or an integer string."""
        text = text.strip()
        if text.lstrip("-").isdigit():
            return int(text)
        for fmt in _LOCAL_FORMATS:
            try:
                return self.to_epoch(datetime.strptime(text, fmt))
            except ValueError:
                continue
        if len(text) == 10:
            try:
                return self.to_epoch(datetime.strptime(text, "%Y-%m-%d"))
            except ValueError:
                pass
        raise InputError(f"cannot parse local time {text!r}")

    def local(self, ts: int) -> datetime:
        return datetime.fromtimestamp(int(ts), self.zone)

    def iso(self, ts: int) -> str:
        return self.local(ts).isoformat()

    def iso_many(self, ts) -> list[str]:
        ts = np.asarray(ts, dtype=np.int64)
        if ts.size == 0:
            return []
        off = self.constant_offset(int(ts.min()), int(ts.max()))
        tzinfo = timezone(timedelta(seconds=off))
        return [datetime.fromtimestamp(int(t), tzinfo).isoformat() for t in ts]

    def tod_index(self, ts, offset: int):
        """Local time-of-day bin index 0..95."""
        return np.mod(np.asarray(ts, dtype=np.int64) + offset, DAY_SECONDS) // BIN_SECONDS

    def day_number(self, ts, offset: int):
        """Local calendar day as days since 1970-01-01 (local)."""
        return np.floor_divide(np.asarray(ts, dtype=np.int64) + offset, DAY_SECONDS)


@dataclass(frozen=True)
class Window:
    """Half-open, bin-aligned interval [start, end) of epoch seconds."""

    start: int
    end: int

    def __post_init__(self):
        if self.start % BIN_SECONDS or self.end % BIN_SECONDS:
            raise UsageError("window bounds must be aligned to 15-minute bins")
        if self.end < self.start:
            raise UsageError("window end precedes window start")

    @property
    def n_bins(self) -> int:
        return (self.end - self.start) // BIN_SECONDS

    @property
    def bins(self) -> np.ndarray:
        return np.arange(self.start, self.end, BIN_SECONDS, dtype=np.int64)

    def __contains__(self, ts) -> bool:
        return self.start <= ts < self.end

    def index(self, ts):
        return (np.asarray(ts, dtype=np.int64) - self.start) // BIN_SECONDS

    @classmethod
    def parse(cls, start: str, end: str, clock: Clock) -> "Window":
        return cls(clock.parse(start), clock.parse(end))


# Default observation windows (local time).
BASELINE_WINDOW_LOCAL = ("2024-01-25 07:00", "2024-01-28 00:00")
EVENT_WINDOW_LOCAL = ("2024-02-01 07:00", "2024-02-04 00:00")
