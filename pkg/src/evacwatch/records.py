"""Per-device network records: parsing, distinct-device aggregation, baselines.

Two ingest paths share one validation contract:

* :func:`parse_records` streams :class:`RawRecord` objects through the stdlib
  ``csv`` module; it is the reference path and suits small inputs.
* :func:`read_records` parses columnar with pyarrow and is what the CLI uses for
  corpora of tens of millions of lines.

Aggregation is exact by default: the count for a (tower, bin) cell is the
cardinality of the set of device ids seen there.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.compute as pc
import pyarrow.csv as pacsv

from .errors import InputError, SchemaError
from .timebins import BIN_SECONDS, BINS_PER_DAY, Clock, Window, floor_to_bin

log = logging.getLogger(__name__)

COLUMNS = ("device_id", "timestamp", "tower_id", "data_kb")
REQUIRED = ("device_id", "timestamp", "tower_id")
MAX_MALFORMED_FRACTION = 0.5
_LOCAL_TS = "%Y-%m-%d %H:%M:%S"
_INT_RE = re.compile(r"^\s*-?\d+\s*$")
_KB_RE = re.compile(r"^\s*\+?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?\s*$")

DAY_CLASS_RULES = ("time_of_day", "day_offset")


@dataclass(frozen=True)
class RecordSchema:
    """Column layout of a record file.

    ``columns`` lists the field at each position; names outside
    :data:`COLUMNS` are ignored. ``header=None`` auto-detects a header line.
    """

    columns: tuple[str, ...] = COLUMNS
    delimiter: str = ","
    header: bool | None = None
    tz: str = "America/Santiago"

    def __post_init__(self):
        missing = [c for c in REQUIRED if c not in self.columns]
        if missing:
            raise SchemaError(f"schema lacks required column(s): {', '.join(missing)}")
        named = [c for c in self.columns if c in COLUMNS]
        if len(set(named)) != len(named):
            raise SchemaError("schema names a column twice")

    def position(self, name: str) -> int | None:
        return self.columns.index(name) if name in self.columns else None


@dataclass(frozen=True, slots=True)
class RawRecord:
    device_id: str
    timestamp: int
    tower_id: str
    data_kb: float = 0.0


@dataclass
class ParseReport:
    n_lines: int = 0
    n_records: int = 0
    n_malformed: int = 0
    examples: list[tuple[int, str]] = field(default_factory=list)

    def malformed(self, line_no: int, reason: str) -> None:
        self.n_malformed += 1
        if len(self.examples) < 10:
            self.examples.append((line_no, reason))

    def check(self) -> None:
        if self.n_lines and self.n_malformed > MAX_MALFORMED_FRACTION * self.n_lines:
            detail = "; ".join(f"line {n}: {r}" for n, r in self.examples[:3])
            raise SchemaError(
                f"{self.n_malformed} of {self.n_lines} lines malformed; wrong schema? ({detail})"
            )


def _looks_like_header(fields: list[str], schema: RecordSchema, clock: Clock) -> bool:
    pos = schema.position("timestamp")
    if pos is None or pos >= len(fields):
        return False
    try:
        clock.parse(fields[pos])
    except InputError:
        return True
    return False


def _validate(fields: list[str], schema: RecordSchema, clock: Clock) -> RawRecord | str:
    if len(fields) != len(schema.columns):
        return f"expected {len(schema.columns)} fields, saw {len(fields)}"
    values = {name: fields[i].strip() for i, name in enumerate(schema.columns) if name in COLUMNS}
    if not values["device_id"]:
        return "empty device_id"
    if not values["tower_id"]:
        return "empty tower_id"
    ts_text = values["timestamp"]
    if _INT_RE.match(ts_text):
        ts = int(ts_text)
    else:
        try:
            ts = clock.to_epoch(_strptime(ts_text))
        except ValueError:
            return f"bad timestamp {ts_text!r}"
    kb_text = values.get("data_kb", "0")
    if not _KB_RE.match(kb_text):
        return f"bad data_kb {kb_text!r}"
    kb = float(kb_text)
    if not math.isfinite(kb):
        return f"bad data_kb {kb_text!r}"
    return RawRecord(values["device_id"], ts, values["tower_id"], kb)


def _strptime(text: str):
    from datetime import datetime

    return datetime.strptime(text, _LOCAL_TS)


class RecordReader:
    """Iterator over valid records; the tally is in :attr:`report` once exhausted."""

    def __init__(self, stream, schema: RecordSchema):
        if isinstance(stream, (io.RawIOBase, io.BufferedIOBase)) or hasattr(stream, "mode") and "b" in getattr(stream, "mode", ""):
            stream = io.TextIOWrapper(stream, encoding="utf-8", newline="")
        self._stream = stream
        self.schema = schema
        self.report = ParseReport()
        self._clock = Clock(schema.tz)

    def __iter__(self) -> Iterator[RawRecord]:
        maybe_header = self.schema.header is not False
        try:
            reader = csv.reader(self._stream, delimiter=self.schema.delimiter)
            for line_no, fields in enumerate(reader, start=1):
                if not fields or (len(fields) == 1 and not fields[0].strip()):
                    continue
                if maybe_header:
                    maybe_header = False
                    if self.schema.header or _looks_like_header(fields, self.schema, self._clock):
                        continue
                self.report.n_lines += 1
                rec = _validate(fields, self.schema, self._clock)
                if isinstance(rec, str):
                    self.report.malformed(line_no, rec)
                    continue
                self.report.n_records += 1
                yield rec
        except (OSError, UnicodeDecodeError, csv.Error) as exc:
            raise InputError(f"unreadable record stream: {exc}") from exc
        self.report.check()


def parse_records(stream, schema: RecordSchema | None = None) -> RecordReader:
    """Stream :class:`RawRecord` objects from delimiter-separated text.

    Malformed lines are skipped and tallied in ``reader.report``; if more than
    half the lines are malformed a :class:`SchemaError` is raised at the end.
    """
    return RecordReader(stream, schema or RecordSchema())


@dataclass(frozen=True)
class RecordBatch:
    """Columnar records: pyarrow string arrays for ids, numpy for numbers."""

    device_id: pa.Array
    timestamp: np.ndarray
    tower_id: pa.Array
    data_kb: np.ndarray

    def __len__(self) -> int:
        return len(self.timestamp)

    def __iter__(self) -> Iterator[RawRecord]:
        for d, t, w, k in zip(
            self.device_id.to_pylist(), self.timestamp.tolist(), self.tower_id.to_pylist(), self.data_kb.tolist()
        ):
            yield RawRecord(d, t, w, k)

    @classmethod
    def from_records(cls, records: Iterable[RawRecord]) -> "RecordBatch":
        recs = list(records)
        return cls(
            pa.array([r.device_id for r in recs], type=pa.string()),
            np.array([r.timestamp for r in recs], dtype=np.int64),
            pa.array([r.tower_id for r in recs], type=pa.string()),
            np.array([r.data_kb for r in recs], dtype=np.float64),
        )

    @classmethod
    def concat(cls, batches: Iterable["RecordBatch"]) -> "RecordBatch":
        batches = list(batches)
        return cls(
            pa.concat_arrays([b.device_id for b in batches]),
            np.concatenate([b.timestamp for b in batches]),
            pa.concat_arrays([b.tower_id for b in batches]),
            np.concatenate([b.data_kb for b in batches]),
        )

    def take(self, idx) -> "RecordBatch":
        idx = np.asarray(idx)
        return RecordBatch(
            self.device_id.take(pa.array(idx)), self.timestamp[idx], self.tower_id.take(pa.array(idx)), self.data_kb[idx]
        )


def _read_bytes(source) -> bytes:
    try:
        if isinstance(source, (str, os.PathLike)):
            with open(source, "rb") as fh:
                return fh.read()
        data = source.read()
    except OSError as exc:
        raise InputError(f"unreadable record stream: {exc}") from exc
    return data.encode("utf-8") if isinstance(data, str) else data


def read_records(source, schema: RecordSchema | None = None) -> tuple[RecordBatch, ParseReport]:
    """Columnar counterpart of :func:`parse_records` (same validation rules)."""
    schema = schema or RecordSchema()
    clock = Clock(schema.tz)
    data = _read_bytes(source)
    report = ParseReport()
    empty = RecordBatch(pa.array([], pa.string()), np.zeros(0, np.int64), pa.array([], pa.string()), np.zeros(0))
    stripped = data.lstrip()
    if not stripped:
        return empty, report

    skip = 0
    if schema.header is not False:
        first = stripped.split(b"\n", 1)[0].decode("utf-8", "replace").rstrip("\r")
        fields = next(csv.reader([first], delimiter=schema.delimiter))
        if schema.header or _looks_like_header(fields, schema, clock):
            skip = 1

    names = [f"c{i}" for i in range(len(schema.columns))]
    bad_lines: list[tuple[int, str]] = []

    def on_invalid(row):
        bad_lines.append((row.number if row.number is not None else -1, f"expected {row.expected_columns} fields, saw {row.actual_columns}"))
        return "skip"

    try:
        table = pacsv.read_csv(
            pa.py_buffer(stripped),
            read_options=pacsv.ReadOptions(column_names=names, skip_rows=skip, use_threads=True),
            parse_options=pacsv.ParseOptions(delimiter=schema.delimiter, invalid_row_handler=on_invalid),
            convert_options=pacsv.ConvertOptions(column_types={n: pa.string() for n in names}, strings_can_be_null=False),
        )
    except pa.ArrowInvalid as exc:
        if "Empty CSV" in str(exc):
            return empty, report
        raise InputError(f"unreadable record stream: {exc}") from exc

    for line_no, reason in bad_lines:
        report.malformed(line_no + skip if line_no >= 0 else -1, reason)

    def col(name):
        pos = schema.position(name)
        return None if pos is None else pc.utf8_trim_whitespace(table.column(names[pos]).combine_chunks())

    dev, ts_text, tower, kb_text = col("device_id"), col("timestamp"), col("tower_id"), col("data_kb")
    n = table.num_rows
    report.n_lines = n + len(bad_lines)

    ok = pc.and_(pc.greater(pc.utf8_length(dev), 0), pc.greater(pc.utf8_length(tower), 0))

    is_int = pc.match_substring_regex(ts_text, r"^-?\d+$")
    ts_int = pc.cast(pc.if_else(is_int, ts_text, "0"), pa.int64())
    local = pc.strptime(ts_text, format=_LOCAL_TS, unit="s", error_is_null=True)
    ts = ts_int.to_numpy(zero_copy_only=False).astype(np.int64)
    is_local = pc.and_(pc.invert(is_int), pc.is_valid(local))
    is_local_np = is_local.to_numpy(zero_copy_only=False)
    if is_local_np.any():
        naive = pc.cast(pc.fill_null(local, 0), pa.int64()).to_numpy(zero_copy_only=False)
        lo, hi = int(naive[is_local_np].min()), int(naive[is_local_np].max())
        offset = clock.offset(lo - clock.offset(lo))
        clock.constant_offset(lo - offset, hi - offset)
        ts = np.where(is_local_np, naive - offset, ts)
    ok = pc.and_(ok, pc.or_(is_int, is_local))

    if kb_text is not None:
        kb_ok = pc.match_substring_regex(kb_text, r"^\+?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
        kb = pc.cast(pc.if_else(kb_ok, kb_text, "0"), pa.float64()).to_numpy(zero_copy_only=False)
        kb_ok = pc.and_(kb_ok, pa.array(np.isfinite(kb)))
        ok = pc.and_(ok, kb_ok)
    else:
        kb = np.zeros(n)

    ok_np = ok.to_numpy(zero_copy_only=False)
    if not ok_np.all():
        bad_idx = np.flatnonzero(~ok_np)
        for i in bad_idx[: max(0, 10 - len(report.examples))]:
            report.examples.append((-1, f"invalid field in data row {int(i) + 1}"))
        report.n_malformed += len(bad_idx)
    report.n_records = int(ok_np.sum())
    report.examples.sort(key=lambda e: e[0])
    report.check()

    keep = pa.array(ok_np)
    batch = RecordBatch(
        pc.filter(dev, keep), ts[ok_np].astype(np.int64), pc.filter(tower, keep), kb[ok_np].astype(np.float64)
    )
    return batch, report


def write_records(path, batch: RecordBatch) -> None:
    """Write records as headerless ``device_id,timestamp,tower_id,data_kb`` lines."""
    table = pa.table(
        {"device_id": batch.device_id, "timestamp": batch.timestamp, "tower_id": batch.tower_id, "data_kb": batch.data_kb}
    )
    pacsv.write_csv(table, path, write_options=pacsv.WriteOptions(include_header=False, quoting_style="needed"))


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True, eq=False)
class ConnectivitySeries:
    """Distinct-device counts on a dense (tower x bin) grid.

    Towers are sorted by id. Every bin in ``window`` has a value for every
    tower, zero when the tower saw no device in that bin.
    """

    towers: tuple[str, ...]
    window: Window
    counts: np.ndarray
    n_records: int | None = None
    network_devices: np.ndarray | None = None
    approximate: bool = False

    def __post_init__(self):
        if self.counts.shape != (len(self.towers), self.window.n_bins):
            raise ValueError("counts shape does not match towers x window bins")

    @property
    def bins(self) -> np.ndarray:
        return self.window.bins

    def tower_index(self, tower_id: str) -> int:
        try:
            return self._index[tower_id]
        except KeyError:
            raise KeyError(tower_id) from None

    @property
    def _index(self) -> dict[str, int]:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {t: i for i, t in enumerate(self.towers)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def __getitem__(self, key: tuple[str, int]):
        tower, bin_start = key
        if bin_start % BIN_SECONDS or bin_start not in self.window:
            raise KeyError(key)
        return self.counts[self.tower_index(tower), self.window.index(bin_start)]

    def cells(self) -> Iterator[tuple[str, int, int]]:
        bins = self.bins.tolist()
        for i, t in enumerate(self.towers):
            for j, b in enumerate(bins):
                yield t, b, self.counts[i, j].item()

    def equals(self, other: "ConnectivitySeries") -> bool:
        return (
            self.towers == other.towers
            and self.window == other.window
            and np.array_equal(self.counts, other.counts)
        )

    def select(self, towers: Iterable[str]) -> "ConnectivitySeries":
        towers = tuple(sorted(set(towers)))
        idx = [self.tower_index(t) for t in towers]
        return ConnectivitySeries(towers, self.window, self.counts[idx], approximate=self.approximate)

    def restrict(self, window: Window) -> "ConnectivitySeries":
        if window.start < self.window.start or window.end > self.window.end:
            raise InputError("requested window is not covered by the series")
        a, b = self.window.index(window.start), self.window.index(window.end)
        net = None if self.network_devices is None else self.network_devices[a:b]
        return ConnectivitySeries(self.towers, window, self.counts[:, a:b], network_devices=net, approximate=self.approximate)

    def to_frame(self, clock: Clock) -> pd.DataFrame:
        iso = clock.iso_many(self.bins)
        n_t, n_b = self.counts.shape
        return pd.DataFrame(
            {
                "tower_id": np.repeat(np.array(self.towers, dtype=object), n_b),
                "bin_start_iso8601": np.tile(np.array(iso, dtype=object), n_t),
                "count": self.counts.reshape(-1),
            }
        )

    def write_csv(self, path, clock: Clock) -> None:
        self.to_frame(clock).to_csv(path, index=False, lineterminator="\n")

    @classmethod
    def read_csv(cls, path, clock: Clock, window: Window | None = None) -> "ConnectivitySeries":
        try:
            df = pd.read_csv(path, dtype={"tower_id": str, "bin_start_iso8601": str})
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise InputError(f"cannot read series {path}: {exc}") from exc
        expected = {"tower_id", "bin_start_iso8601", "count"}
        if not expected <= set(df.columns):
            raise SchemaError(f"{path}: expected columns {sorted(expected)}")
        if df.empty:
            raise InputError(f"{path}: zero valid rows")
        stamps = pd.to_datetime(df["bin_start_iso8601"], utc=True, format="ISO8601")
        ts = (stamps.astype("int64") // 10**9).to_numpy()
        if np.any(ts % BIN_SECONDS):
            raise InputError(f"{path}: bin starts not aligned to 15 minutes")
        if window is None:
            window = Window(int(ts.min()), int(ts.max()) + BIN_SECONDS)
        towers = tuple(sorted(df["tower_id"].unique()))
        t_idx = pd.Index(towers).get_indexer(df["tower_id"])
        inside = (ts >= window.start) & (ts < window.end)
        counts = np.zeros((len(towers), window.n_bins), dtype=df["count"].dtype)
        counts[t_idx[inside], window.index(ts[inside])] = df["count"].to_numpy()[inside]
        return cls(towers, window, counts)


@dataclass(frozen=True, eq=False)
class DeviceCells:
    """Unique (tower, bin, device) triples; mergeable across record shards."""

    towers: np.ndarray  # sorted tower ids (object)
    devices: pd.Index
    window: Window
    tower_code: np.ndarray
    bin_index: np.ndarray
    device_code: np.ndarray
    n_records: int

    def merge(self, other: "DeviceCells") -> "DeviceCells":
        if self.window != other.window:
            raise InputError("cannot merge shards aggregated over different windows")
        towers = np.union1d(self.towers, other.towers)
        devices = self.devices.append(other.devices.difference(self.devices, sort=False))
        parts = []
        for part in (self, other):
            parts.append(
                (
                    np.searchsorted(towers, part.towers)[part.tower_code],
                    part.bin_index,
                    devices.get_indexer(part.devices)[part.device_code],
                )
            )
        t = np.concatenate([p[0] for p in parts])
        b = np.concatenate([p[1] for p in parts])
        d = np.concatenate([p[2] for p in parts])
        t, b, d = _unique_triples(t, b, d, self.window.n_bins, len(devices))
        return DeviceCells(towers, devices, self.window, t, b, d, self.n_records + other.n_records)

    def to_series(self) -> ConnectivitySeries:
        n_bins = self.window.n_bins
        cell = self.tower_code.astype(np.int64) * n_bins + self.bin_index
        counts = np.bincount(cell, minlength=len(self.towers) * n_bins).reshape(len(self.towers), n_bins)
        net_key = self.bin_index.astype(np.int64) * max(len(self.devices), 1) + self.device_code
        net_bins = pd.unique(net_key) // max(len(self.devices), 1)
        network = np.bincount(net_bins, minlength=n_bins)
        return ConnectivitySeries(
            tuple(self.towers.tolist()), self.window, counts.astype(np.int64), self.n_records, network.astype(np.int64)
        )


def _unique_triples(t, b, d, n_bins, n_dev):
    key = (t.astype(np.int64) * n_bins + b) * max(n_dev, 1) + d
    key = np.sort(pd.unique(key))
    d_out = key % max(n_dev, 1)
    cell = key // max(n_dev, 1)
    return cell // n_bins, cell % n_bins, d_out


def _as_batch(records) -> RecordBatch:
    return records if isinstance(records, RecordBatch) else RecordBatch.from_records(records)


def _encode(arr: pa.Array) -> tuple[np.ndarray, np.ndarray]:
    enc = arr.dictionary_encode()
    if isinstance(enc, pa.ChunkedArray):
        enc = enc.combine_chunks()
    return enc.indices.to_numpy(zero_copy_only=False).astype(np.int64), np.asarray(enc.dictionary.to_pylist(), dtype=object)


def _window_for(ts: np.ndarray) -> Window:
    if ts.size == 0:
        return Window(0, 0)
    return Window(int(floor_to_bin(int(ts.min()))), int(floor_to_bin(int(ts.max()))) + BIN_SECONDS)


def collect_cells(records, window: Window | None = None) -> DeviceCells:
    """Reduce records to their unique (tower, bin, device) triples inside ``window``."""
    batch = _as_batch(records)
    ts = batch.timestamp
    if window is None:
        window = _window_for(ts)
    inside = (ts >= window.start) & (ts < window.end)
    if not inside.all():
        batch = batch.take(np.flatnonzero(inside))
        ts = batch.timestamp
    if len(batch) == 0:
        z = np.zeros(0, np.int64)
        return DeviceCells(np.zeros(0, dtype=object), pd.Index([], dtype=object), window, z, z, z, 0)
    t_codes, t_names = _encode(batch.tower_id)
    order = np.argsort(t_names, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    t_codes = rank[t_codes]
    towers = t_names[order]
    d_codes, d_names = _encode(batch.device_id)
    b_idx = window.index(floor_to_bin(ts))
    t, b, d = _unique_triples(t_codes, b_idx, d_codes, window.n_bins, len(d_names))
    return DeviceCells(towers, pd.Index(d_names, dtype=object), window, t, b, d, len(batch))


def aggregate_counts(
    records, window: Window | None = None, *, approximate: bool = False, hll_precision: int = 8
) -> ConnectivitySeries:
    """Distinct device count per (tower, 15-minute bin).

    Parameters
    ----------
    records : RecordBatch or iterable of RawRecord
    window : Window, optional
        Bin-aligned analysis window; records outside it are dropped. Defaults
        to the span of the data.
    approximate : bool
        Use HyperLogLog sketches per cell instead of exact sets. Intended for
        inputs too large for exact counting; never used by the test suite's
        exactness checks.
    """
    if not approximate:
        return collect_cells(records, window).to_series()
    return _approximate_counts(_as_batch(records), window, hll_precision)


def _bit_length(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    out = np.zeros(x.shape, dtype=np.int64)
    for shift in (32, 16, 8, 4, 2, 1):
        big = x >= (np.uint64(1) << np.uint64(shift))
        out[big] += shift
        x[big] >>= np.uint64(shift)
    out += (x > 0).astype(np.int64)
    return out


def _approximate_counts(batch: RecordBatch, window: Window | None, p: int) -> ConnectivitySeries:
    ts = batch.timestamp
    if window is None:
        window = _window_for(ts)
    inside = np.flatnonzero((ts >= window.start) & (ts < window.end))
    batch = batch.take(inside)
    t_codes, t_names = _encode(batch.tower_id)
    order = np.argsort(t_names, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    t_codes = rank[t_codes]
    d_codes, d_names = _encode(batch.device_id)
    hashes = pd.util.hash_array(d_names)[d_codes].astype(np.uint64)
    m = 1 << p
    reg = (hashes >> np.uint64(64 - p)).astype(np.int64)
    rest = hashes << np.uint64(p)
    rho = np.where(rest == 0, 64 - p + 1, 64 - _bit_length(rest) + 1)
    n_bins = window.n_bins
    cell = t_codes * n_bins + window.index(floor_to_bin(batch.timestamp))
    registers = np.zeros((len(t_names) * n_bins, m), dtype=np.uint8)
    np.maximum.at(registers, (cell, reg), rho.astype(np.uint8))
    alpha = 0.7213 / (1 + 1.079 / m)
    raw = alpha * m * m / np.sum(np.ldexp(1.0, -registers.astype(np.int64)), axis=1)
    zeros = np.sum(registers == 0, axis=1)
    small = (raw <= 2.5 * m) & (zeros > 0)
    est = np.where(small, m * np.log(m / np.maximum(zeros, 1)), raw)
    est = np.where(zeros == m, 0.0, est)
    counts = np.rint(est).astype(np.int64).reshape(len(t_names), n_bins)
    return ConnectivitySeries(tuple(t_names[order].tolist()), window, counts, len(batch), approximate=True)


# ---------------------------------------------------------------------------
# baseline


@dataclass(frozen=True, eq=False)
class BaselineProfile:
    """Mean count per (tower, day class, time-of-day bin) over baseline days.

    ``expected`` has shape (n_towers, n_classes, 96) with NaN for cells no
    baseline day contributed to; ``support`` counts contributing days.
    """

    towers: tuple[str, ...]
    rule: str
    expected: np.ndarray
    support: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.expected.shape[1]

    def expected_for(self, event: ConnectivitySeries, clock: Clock) -> tuple[tuple[str, ...], np.ndarray]:
        """Baseline value aligned to each cell of ``event``.

        Only towers present in both the profile and the event series are
        returned. Cells without baseline support are NaN.
        """
        common = tuple(t for t in event.towers if t in set(self.towers))
        p_idx = [self.towers.index(t) for t in common] if len(common) < 64 else pd.Index(self.towers).get_indexer(common)
        bins = event.bins
        if bins.size == 0:
            return common, np.zeros((len(common), 0))
        offset = clock.constant_offset(int(bins[0]), int(bins[-1]))
        tod = clock.tod_index(bins, offset)
        cls = _day_class(bins, event.window, self.rule, clock, offset)
        valid = cls < self.n_classes
        out = np.full((len(common), bins.size), np.nan)
        sub = self.expected[np.asarray(p_idx, dtype=np.int64)]
        out[:, valid] = sub[:, cls[valid], tod[valid]]
        return common, out

    def as_series(self, window: Window, clock: Clock) -> ConnectivitySeries:
        """The profile laid out over ``window`` as a (float-valued) series."""
        shell = ConnectivitySeries(self.towers, window, np.zeros((len(self.towers), window.n_bins)))
        _, values = self.expected_for(shell, clock)
        return ConnectivitySeries(self.towers, window, values)

    def to_frame(self) -> pd.DataFrame:
        mask = np.broadcast_to(self.support[None, :, :] > 0, self.expected.shape)
        t, c, b = np.nonzero(mask)
        return pd.DataFrame(
            {
                "tower_id": np.asarray(self.towers, dtype=object)[t],
                "day_class": c,
                "tod_bin": b,
                "expected": self.expected[t, c, b],
                "support": self.support[c, b],
            }
        )

    def write_csv(self, path) -> None:
        df = self.to_frame()
        with open(path, "w", newline="") as fh:
            fh.write(f"# rule={self.rule}\n")
            df.to_csv(fh, index=False, lineterminator="\n")

    @classmethod
    def read_csv(cls, path) -> "BaselineProfile":
        try:
            with open(path) as fh:
                first = fh.readline()
            rule = first.strip().split("=", 1)[1] if first.startswith("# rule=") else "time_of_day"
            df = pd.read_csv(path, comment="#", dtype={"tower_id": str})
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise InputError(f"cannot read baseline {path}: {exc}") from exc
        if df.empty:
            raise InputError(f"{path}: zero valid rows")
        towers = tuple(sorted(df["tower_id"].unique()))
        n_classes = int(df["day_class"].max()) + 1
        t_idx = pd.Index(towers).get_indexer(df["tower_id"])
        expected = np.full((len(towers), n_classes, BINS_PER_DAY), np.nan)
        support = np.zeros((n_classes, BINS_PER_DAY), dtype=np.int64)
        c, b = df["day_class"].to_numpy(), df["tod_bin"].to_numpy()
        expected[t_idx, c, b] = df["expected"].to_numpy()
        support[c, b] = df["support"].to_numpy()
        return cls(towers, rule, expected, support)


def _day_class(bins: np.ndarray, window: Window, rule: str, clock: Clock, offset: int) -> np.ndarray:
    if rule == "time_of_day":
        return np.zeros(bins.size, dtype=np.int64)
    if rule == "day_offset":
        return clock.day_number(bins, offset) - clock.day_number(window.start, offset)
    raise ValueError(f"unknown day-class rule {rule!r}; expected one of {DAY_CLASS_RULES}")


def build_baseline(
    series: ConnectivitySeries,
    window: Window | None = None,
    rule: str = "time_of_day",
    clock: Clock | None = None,
) -> BaselineProfile:
    """Average baseline-day counts per (tower, day class, time-of-day bin).

    ``rule="time_of_day"`` pools every baseline day; ``rule="day_offset"``
    keeps the ordinal day within the window as the day class, so the n-th
    baseline day is compared with the n-th event day.
    """
    clock = clock or Clock()
    if rule not in DAY_CLASS_RULES:
        raise ValueError(f"unknown day-class rule {rule!r}; expected one of {DAY_CLASS_RULES}")
    if window is not None:
        series = series.restrict(window)
    if series.window.n_bins == 0 or not series.towers:
        raise InputError("baseline window is empty")
    bins = series.bins
    offset = clock.constant_offset(int(bins[0]), int(bins[-1]))
    tod = clock.tod_index(bins, offset)
    cls = _day_class(bins, series.window, rule, clock, offset)
    n_classes = int(cls.max()) + 1
    flat = cls * BINS_PER_DAY + tod
    support = np.bincount(flat, minlength=n_classes * BINS_PER_DAY).reshape(n_classes, BINS_PER_DAY)
    sums = np.zeros((len(series.towers), n_classes * BINS_PER_DAY))
    np.add.at(sums.T, flat, series.counts.T.astype(np.float64))
    with np.errstate(invalid="ignore", divide="ignore"):
        expected = sums.reshape(len(series.towers), n_classes, BINS_PER_DAY) / support[None]
    expected[:, support == 0] = np.nan
    return BaselineProfile(series.towers, rule, expected, support)


@dataclass(frozen=True)
class SeriesSummary:
    """Network-level quadruple: records, distinct devices per bin, active towers per bin."""

    total_records: int | None
    mean_devices_per_bin: float
    sd_devices_per_bin: float
    mean_active_towers_per_bin: float
    sd_active_towers_per_bin: float
    n_bins: int
    devices_are_network_distinct: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def summarize(series: ConnectivitySeries) -> SeriesSummary:
    """Summary statistics over all bins of the window.

    Devices per bin are network-wide distinct counts when the series came
    straight from records; otherwise the per-tower counts are summed, which
    counts a device seen at two towers twice.
    """
    if series.window.n_bins == 0 or not series.towers:
        raise InputError("cannot summarize an empty series")
    network = series.network_devices is not None
    devices = series.network_devices if network else series.counts.sum(axis=0)
    active = (series.counts > 0).sum(axis=0)
    ddof = 1 if series.window.n_bins > 1 else 0
    return SeriesSummary(
        series.n_records,
        float(np.mean(devices)),
        float(np.std(devices, ddof=ddof)),
        float(np.mean(active)),
        float(np.std(active, ddof=ddof)),
        series.window.n_bins,
        network,
    )
