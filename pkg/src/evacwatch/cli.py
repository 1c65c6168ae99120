"""Command-line entry point.

Every subcommand reads CSV/JSON inputs and writes CSV/JSON/SVG outputs. With
``--in DIR`` inputs are looked up by their standard file names inside DIR and
any missing intermediate (baseline profile, warned set, SEG assignment) is
derived from the raw scenario files on the fly. Outputs go to ``--out`` or,
when that is omitted, into the ``--in`` directory.

Exit codes: 0 success, 1 usage error, 2 input or format error, 3 statistical
failure. Failures print a JSON object to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from functools import cached_property
from typing import Sequence

import numpy as np

from . import __version__
from .cits import DEFAULT_DELAY_GRID, DEFAULT_DELAY_MIN, default_hac_lag, delay_sweep, fit_cits, fit_its, format_table
from .errors import EvacwatchError, InputError, UsageError
from .geoalert import DEFAULT_RADIUS_KM, Gazetteer, WarnedSet, parse_alerts, read_towers, resolve_places, warned_towers
from .metrics import (
    DEFAULT_THRESHOLDS,
    NON_WARNED,
    WARNED,
    TowerSeries,
    cdf_snapshot,
    differential_rex,
    evac_series,
    group_series,
    rex_series,
    threshold_series,
)
from .records import DAY_CLASS_RULES, COLUMNS, BaselineProfile, ConnectivitySeries, RecordSchema, aggregate_counts, build_baseline, read_records, summarize
from .seg import Seg, SegAssignment, assign_tower_seg, assign_zone_seg, read_zones
from .timebins import BIN_SECONDS, Clock, Window, resolve_tz

log = logging.getLogger("evacwatch")

FILES = {
    "records": "records.csv",
    "towers": "towers.csv",
    "zones": "zones.csv",
    "gazetteer": "gazetteer.csv",
    "alerts": "alerts.csv",
    "baseline_series": "baseline_series.csv",
    "event_series": "event_series.csv",
    "baseline": "baseline.csv",
    "warned": "warned.csv",
    "zone_seg": "zone_seg.csv",
    "tower_seg": "tower_seg.csv",
    "seg_cuts": "seg_cuts.json",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# workspace


class Workspace:
    """Resolves inputs from explicit flags or from standard names in ``--in``."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.root = getattr(args, "in_dir", None)
        if self.root and not os.path.isdir(self.root):
            raise InputError(f"input directory not found: {self.root}")
        self.clock = Clock(resolve_tz(getattr(args, "tz", None)))

    def path(self, key: str, required: bool = True) -> str | None:
        explicit = getattr(self.args, key, None)
        if explicit:
            if not os.path.exists(explicit):
                raise InputError(f"input file not found: {explicit}")
            return explicit
        if self.root:
            candidate = os.path.join(self.root, FILES[key])
            if os.path.exists(candidate):
                return candidate
        if required:
            raise UsageError(f"missing input: pass --{key.replace('_', '-')} or --in DIR containing {FILES[key]}")
        return None

    def has(self, key: str) -> bool:
        return self.path(key, required=False) is not None

    def out(self, name: str) -> str:
        base = getattr(self.args, "out", None) or self.root
        if base is None:
            raise UsageError("no output location: pass --out or --in")
        if os.path.splitext(base)[1] and not os.path.isdir(base):
            parent = os.path.dirname(base)
            if parent:
                os.makedirs(parent, exist_ok=True)
            return base
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, name)

    def out_dir(self) -> str:
        base = getattr(self.args, "out", None) or self.root
        if base is None:
            raise UsageError("no output location: pass --out or --in")
        os.makedirs(base, exist_ok=True)
        return base

    @cached_property
    def towers(self):
        return read_towers(self.path("towers"))

    @cached_property
    def alerts(self):
        return parse_alerts(self.path("alerts"), self.clock)

    @cached_property
    def event(self) -> ConnectivitySeries:
        return ConnectivitySeries.read_csv(self.path("event_series"), self.clock)

    @cached_property
    def profile(self) -> BaselineProfile:
        if self.has("baseline"):
            return BaselineProfile.read_csv(self.path("baseline"))
        series = ConnectivitySeries.read_csv(self.path("baseline_series"), self.clock)
        return build_baseline(series, rule=getattr(self.args, "day_class", "time_of_day"), clock=self.clock)

    @cached_property
    def warned(self) -> WarnedSet:
        if self.has("warned"):
            return WarnedSet.read_csv(self.path("warned"), self.clock)
        gaz = Gazetteer.read_csv(self.path("gazetteer"))
        res = resolve_places(self.alerts, gaz)
        return warned_towers(res.points, self.towers, getattr(self.args, "radius_km", DEFAULT_RADIUS_KM))

    @cached_property
    def seg(self) -> SegAssignment:
        if self.has("tower_seg") and self.has("zone_seg"):
            return SegAssignment.read(self.path("zone_seg"), self.path("tower_seg"), self.path("seg_cuts", required=False))
        return assign_tower_seg(self.towers, assign_zone_seg(read_zones(self.path("zones"))))

    @cached_property
    def rex(self) -> TowerSeries:
        return rex_series(self.event, self.profile, self.clock)

    @cached_property
    def evac(self) -> TowerSeries:
        return evac_series(self.event, self.profile, self.clock)

    def alert_times(self) -> list[int]:
        return sorted({a.sent_at for a in self.alerts}) if self.has("alerts") else []


# ---------------------------------------------------------------------------
# flag parsing helpers


def _thresholds(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"bad threshold list {text!r}") from None
    if not vals or any(not 0 < v <= 100 for v in vals):
        raise UsageError("thresholds must lie in (0, 100]")
    return vals


def _delays(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"bad delay list {text!r}") from None
    if not vals or any(v < 0 or v % 15 for v in vals):
        raise UsageError("delays must be nonnegative multiples of 15 minutes")
    return vals


def _validate(args: argparse.Namespace) -> None:
    if getattr(args, "radius_km", 1.0) <= 0:
        raise UsageError("--radius-km must be positive")
    delay = getattr(args, "delay_min", None)
    if delay is not None and (delay < 0 or delay % 15):
        raise UsageError("--delay-min must be a nonnegative multiple of 15")
    lag = getattr(args, "hac_lag", None)
    if lag is not None and lag < 0:
        raise UsageError("--hac-lag must be nonnegative")
    if getattr(args, "thresholds", None) is not None:
        args.thresholds = _thresholds(args.thresholds)
    if getattr(args, "delays", None) is not None:
        args.delays = _delays(args.delays)
    if bool(getattr(args, "window_start", None)) != bool(getattr(args, "window_end", None)):
        raise UsageError("--window-start and --window-end go together")


def _window(args, clock: Clock) -> Window | None:
    if getattr(args, "window_start", None):
        return Window.parse(args.window_start, args.window_end, clock)
    return None


def _model_timing(ws: Workspace) -> tuple[int, Window]:
    """Intervention instant and model window (default: the local day of the first alert)."""
    args = ws.args
    if args.intervention:
        intervention = ws.clock.parse(args.intervention)
    else:
        window = _window(args, ws.clock)
        times = [t for t in ws.alert_times() if window is None or t in window]
        if not times:
            raise UsageError("no alert to use as intervention: pass --intervention")
        intervention = times[0]
    window = _window(args, ws.clock)
    if window is None:
        local = ws.clock.local(intervention)
        start = ws.clock.to_epoch(local.replace(hour=0, minute=0, second=0, microsecond=0, tzinfo=None))
        window = Window(start, start + 96 * BIN_SECONDS)
        ev = ws.event.window
        window = Window(max(window.start, ev.start), min(window.end, ev.end))
    if intervention % BIN_SECONDS:
        intervention -= intervention % BIN_SECONDS
    return intervention, window


def _selected_segs(args) -> list[Seg]:
    return [Seg.parse(args.seg)] if getattr(args, "seg", None) else list(Seg)


def _dump_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_aggregate(args, ws: Workspace) -> int:
    columns = tuple(c.strip() for c in args.columns.split(","))
    header = {"auto": None, "yes": True, "no": False}[args.header]
    schema = RecordSchema(columns, args.delimiter, header, ws.clock.tz)
    batch, report = read_records(ws.path("records"), schema)
    if report.n_malformed:
        log.warning("skipped %d malformed line(s)", report.n_malformed)
    if report.n_records == 0:
        raise InputError("zero valid rows in record stream")
    series = aggregate_counts(batch, _window(args, ws.clock), approximate=args.approximate)
    series.write_csv(ws.out("series.csv"), ws.clock)
    if args.summary:
        payload = summarize(series).as_dict()
        payload["malformed_lines"] = report.n_malformed
        _dump_json(args.summary, payload)
    return 0


def cmd_baseline(args, ws: Workspace) -> int:
    series = ConnectivitySeries.read_csv(ws.path("baseline_series"), ws.clock)
    profile = build_baseline(series, _window(args, ws.clock), args.day_class, ws.clock)
    profile.write_csv(ws.out(FILES["baseline"]))
    return 0


def cmd_warned(args, ws: Workspace) -> int:
    gaz = Gazetteer.read_csv(ws.path("gazetteer"))
    res = resolve_places(ws.alerts, gaz)
    warned = warned_towers(res.points, ws.towers, args.radius_km)
    warned.write_csv(ws.out(FILES["warned"]), ws.clock)
    if res.unresolved:
        log.warning("unresolved places: %s", json.dumps({str(k): v for k, v in sorted(res.unresolved.items())}))
    return 0


def cmd_seg(args, ws: Workspace) -> int:
    zones = read_zones(ws.path("zones"))
    assignment = assign_zone_seg(zones)
    if ws.has("towers"):
        assignment = assign_tower_seg(ws.towers, assignment)
    out = ws.out_dir()
    assignment.write_zone_csv(os.path.join(out, FILES["zone_seg"]))
    assignment.write_tower_csv(os.path.join(out, FILES["tower_seg"]))
    assignment.write_sidecar(os.path.join(out, FILES["seg_cuts"]))
    return 0


def cmd_rex(args, ws: Workspace) -> int:
    out = ws.out_dir()
    ws.rex.write_csv(os.path.join(out, "rex.csv"), ws.clock)
    ws.evac.write_csv(os.path.join(out, "evac_rate.csv"), ws.clock)
    if ws.has("zones") or ws.has("tower_seg"):
        warned = ws.warned if (ws.has("warned") or ws.has("alerts")) else None
        partition = WARNED if warned is not None else "all"
        gs = group_series(ws.rex, ws.seg, warned, partition)
        gs.write_csv(os.path.join(out, "group_rex.csv"), ws.clock)
        if warned is not None:
            differential_rex(gs).write_csv(os.path.join(out, "differential_rex.csv"), ws.clock)
    return 0


def _snapshot_times(args, ws: Workspace) -> list[int]:
    if args.at:
        return [ws.clock.parse(t) for t in args.at]
    times = ws.alert_times()
    if not times:
        raise UsageError("pass --at TIME or provide alerts")
    return [times[0] + m * 60 for m in args.offsets_min]


def _tower_filter(args, ws: Workspace):
    if args.towers_filter == "all":
        return None
    warned = set(ws.warned.first_warned)
    return warned if args.towers_filter == WARNED else set(ws.rex.towers) - warned


def cmd_cdf(args, ws: Workspace) -> int:
    series = ws.evac if args.metric == "evac_rate" else ws.rex
    out = ws.out_dir()
    keep = _tower_filter(args, ws)
    for t in _snapshot_times(args, ws):
        snap = cdf_snapshot(series, t - t % BIN_SECONDS, ws.seg, keep)
        stamp = ws.clock.local(snap.time).strftime("%Y%m%dT%H%M")
        snap.write_csv(os.path.join(out, f"cdf_{args.metric}_{stamp}.csv"))
    return 0


def cmd_thresholds(args, ws: Workspace) -> int:
    ts = threshold_series(ws.evac, ws.seg, args.thresholds, args.mode, _tower_filter(args, ws))
    ts.write_csv(ws.out(f"thresholds_{args.mode}.csv"), ws.clock)
    return 0


def _fit_report(results: dict, stem: str, ws: Workspace) -> None:
    payload = {label: r.to_dict() for label, r in results.items()}
    _dump_json(ws.out(f"{stem}.json"), payload)
    out_json = ws.out(f"{stem}.json")
    table_path = os.path.splitext(out_json)[0] + "_table.txt"
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(format_table(results))


def cmd_its(args, ws: Workspace) -> int:
    intervention, window = _model_timing(ws)
    warned = set(ws.warned.first_warned)
    results = {}
    for seg in _selected_segs(args):
        towers = warned & set(ws.seg.towers_in(seg)) if not args.all_towers else set(ws.seg.towers_in(seg))
        results[seg.label] = fit_its(ws.rex.select(towers), intervention, args.delay_min, args.hac_lag, window)
    _fit_report(results, "its", ws)
    return 0


def cmd_cits(args, ws: Workspace) -> int:
    intervention, window = _model_timing(ws)
    warned = set(ws.warned.first_warned)
    results = {}
    for seg in _selected_segs(args):
        members = set(ws.seg.towers_in(seg))
        results[seg.label] = fit_cits(
            ws.rex.select(members & warned), ws.rex.select(members - warned), intervention, args.delay_min, args.hac_lag, window
        )
    _fit_report(results, "cits", ws)
    return 0


def cmd_delay_sweep(args, ws: Workspace) -> int:
    intervention, window = _model_timing(ws)
    towers = set(ws.warned.first_warned)
    if args.seg:
        towers &= set(ws.seg.towers_in(Seg.parse(args.seg)))
    sweep = delay_sweep(ws.rex.select(towers), intervention, args.delays or DEFAULT_DELAY_GRID, window)
    sweep.write_csv(ws.out("delay_sweep.csv"))
    print(json.dumps({"best_delay_minutes": sweep.best_delay}))
    return 0


def cmd_synth(args, ws: Workspace) -> int:
    from . import synth

    factory = synth.PRESETS[args.preset]
    config = factory() if args.seed is None else factory(seed=args.seed)
    if ws.clock.tz != config.tz:
        config = synth.with_seed(config, config.seed, tz=ws.clock.tz)
    output = synth.generate_series(config)
    records = None
    if args.records:
        expected = (1.0 + config.repeat_extra) * float(output.baseline.counts.sum() + output.event.counts.sum())
        if expected > args.max_records:
            raise UsageError(
                f"preset {args.preset!r} would emit about {expected:.3g} records (limit {args.max_records:.3g}); "
                "use --preset throughput or raise --max-records"
            )
        records, output = synth.generate_records(config, output)
    synth.write_scenario(output, ws.out_dir(), records)
    return 0


def cmd_report(args, ws: Workspace) -> int:
    from . import report

    out = ws.out_dir()
    alerts = ws.alert_times()
    files = {}
    files["connectivity.svg"] = report.render_connectivity(ws.event, ws.profile, alerts, ws.clock)
    gs = group_series(ws.rex, ws.seg, ws.warned, WARNED)
    files["group_rex.svg"] = report.render_group_series(gs, alerts, ws.clock, "Group REX with 95% CI")
    files["differential_rex.svg"] = report.render_group_series(
        differential_rex(gs), alerts, ws.clock, "Differential REX (warned minus non-warned)", "differential REX"
    )
    snaps = [cdf_snapshot(ws.evac, t - t % BIN_SECONDS, ws.seg) for t in _snapshot_times(args, ws)]
    files["cdf.svg"] = report.render_cdfs(snaps, ws.clock)
    ts = threshold_series(ws.evac, ws.seg, args.thresholds, args.mode)
    files["thresholds.svg"] = report.render_thresholds(ts, alerts, ws.clock)
    intervention, window = _model_timing(ws)
    sweep = delay_sweep(ws.rex.select(set(ws.warned.first_warned)), intervention, DEFAULT_DELAY_GRID, window)
    files["delay_sweep.svg"] = report.render_sweep(sweep)
    for name, text in files.items():
        with open(os.path.join(out, name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--in", dest="in_dir", metavar="DIR", help="workspace directory holding standard input files")
    common.add_argument("--out", metavar="PATH", help="output directory (or file for single-output commands)")
    common.add_argument("--tz", help="civil timezone for all timestamps (default: $EVACWATCH_TZ or America/Santiago)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    def files(p, *keys):
        for key in keys:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, metavar="CSV", help=f"{key.replace('_', ' ')} file (default: DIR/{FILES[key]})")

    def window(p):
        p.add_argument("--window-start", metavar="TIME", help="window start, local 'YYYY-MM-DD HH:MM'")
        p.add_argument("--window-end", metavar="TIME", help="window end (exclusive), local 'YYYY-MM-DD HH:MM'")

    def model(p):
        window(p)
        p.add_argument("--intervention", metavar="TIME", help="intervention instant (default: first alert in the window)")
        p.add_argument("--delay-min", "--delay", dest="delay_min", type=int, default=DEFAULT_DELAY_MIN, help="intervention delay in minutes (multiple of 15, default 75)")
        p.add_argument("--hac-lag", type=int, default=None, help="Newey-West lag (default floor(4 (bins/100)^(2/9)))")
        p.add_argument("--seg", type=str.capitalize, choices=[s.label for s in Seg], help="fit a single SEG (Low, Medium or High)")
        p.add_argument("--radius-km", type=float, default=DEFAULT_RADIUS_KM, help="warning radius when the warned set is derived (default 5)")
        p.add_argument("--day-class", choices=DAY_CLASS_RULES, default="time_of_day", help="baseline day matching rule when the profile is derived")
        files(p, "event_series", "baseline", "baseline_series", "warned", "alerts", "gazetteer", "towers", "zones", "tower_seg")

    def metric_inputs(p):
        p.add_argument("--radius-km", type=float, default=DEFAULT_RADIUS_KM, help="warning radius when the warned set is derived (default 5)")
        p.add_argument("--day-class", choices=DAY_CLASS_RULES, default="time_of_day", help="baseline day matching rule when the profile is derived")
        files(p, "event_series", "baseline", "baseline_series", "warned", "alerts", "gazetteer", "towers", "zones", "tower_seg")

    parser = _Parser(prog="evacwatch", description="Evacuation-response analytics from tower connectivity.")
    parser.add_argument("--version", action="version", version=f"evacwatch {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("aggregate", parents=[common], help="count distinct devices per tower and 15-minute bin")
    files(p, "records")
    window(p)
    p.add_argument("--columns", default=",".join(COLUMNS), help="column order of the record file")
    p.add_argument("--delimiter", default=",", help="field delimiter (default ',')")
    p.add_argument("--header", choices=("auto", "yes", "no"), default="auto", help="whether the first line is a header")
    p.add_argument("--approximate", action="store_true", help="HyperLogLog counts instead of exact sets")
    p.add_argument("--summary", metavar="JSON", help="also write summary statistics to this file")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("baseline", parents=[common], help="average baseline days into an expected-count profile")
    files(p, "baseline_series")
    window(p)
    p.add_argument("--day-class", choices=DAY_CLASS_RULES, default="time_of_day", help="pool all days or match by day offset")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("warned", parents=[common], help="towers within the radius of alert places")
    files(p, "alerts", "gazetteer", "towers")
    p.add_argument("--radius-km", type=float, default=DEFAULT_RADIUS_KM, help="warning radius in km (default 5, inclusive)")
    p.set_defaults(func=cmd_warned)

    p = sub.add_parser("seg", parents=[common], help="socio-economic groups for zones and towers")
    files(p, "zones", "towers")
    p.set_defaults(func=cmd_seg)

    p = sub.add_parser("rex", parents=[common], help="tower REX and evacuation rate, group curves, differential")
    metric_inputs(p)
    p.set_defaults(func=cmd_rex)

    p = sub.add_parser("cdf", parents=[common], help="per-SEG ECDF snapshots")
    metric_inputs(p)
    p.add_argument("--at", action="append", metavar="TIME", help="snapshot time (repeatable)")
    p.add_argument("--offsets-min", type=lambda s: [int(v) for v in s.split(",")], default=[30, 60, 90], help="minutes after the first alert when --at is absent (default 30,60,90)")
    p.add_argument("--metric", choices=("evac_rate", "rex"), default="evac_rate", help="tower value to distribute")
    p.add_argument("--towers-filter", choices=("all", WARNED, NON_WARNED), default="all", help="restrict towers")
    p.set_defaults(func=cmd_cdf)

    p = sub.add_parser("thresholds", parents=[common], help="fraction of towers beyond evacuation levels")
    metric_inputs(p)
    p.add_argument("--thresholds", default="50,75,85", help="comma-separated evacuation levels in percent")
    p.add_argument("--mode", choices=("instant", "ever"), default="instant", help="crossing at t, or at any time up to t")
    p.add_argument("--towers-filter", choices=("all", WARNED, NON_WARNED), default="all", help="restrict towers")
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("its", parents=[common], help="uncontrolled interrupted time series per SEG")
    model(p)
    p.add_argument("--all-towers", action="store_true", help="fit on every tower of the SEG, not only warned ones")
    p.set_defaults(func=cmd_its)

    p = sub.add_parser("cits", parents=[common], help="controlled interrupted time series per SEG")
    model(p)
    p.set_defaults(func=cmd_cits)

    p = sub.add_parser("delay-sweep", parents=[common], help="select the intervention delay by BIC")
    model(p)
    p.add_argument("--delays", default=None, help="comma-separated delays in minutes (default 30..120 by 15)")
    p.set_defaults(func=cmd_delay_sweep)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic scenario")
    p.add_argument("--preset", choices=("golden", "null", "throughput"), default="golden", help="scenario preset")
    p.add_argument("--seed", type=int, default=None, help="override the preset seed")
    p.add_argument("--records", action="store_true", help="also write raw records (records.csv)")
    p.add_argument("--max-records", type=float, default=3e7, help="refuse --records above this estimated volume")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", parents=[common], help="render SVG charts for a workspace")
    model(p)
    p.add_argument("--thresholds", default="50,75,85", help="evacuation levels for the threshold chart")
    p.add_argument("--mode", choices=("instant", "ever"), default="instant", help="threshold crossing mode")
    p.add_argument("--at", action="append", metavar="TIME", help="ECDF snapshot time (repeatable)")
    p.add_argument("--offsets-min", type=lambda s: [int(v) for v in s.split(",")], default=[30, 60, 90], help="ECDF snapshot offsets after the first alert")
    p.set_defaults(func=cmd_report)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        _validate(args)
        ws = Workspace(args)
        ws.clock.zone  # fail fast on an unknown timezone
        return args.func(args, ws)
    except EvacwatchError as exc:
        return _fail(type(exc).__name__, str(exc), exc.exit_code)
    except ValueError as exc:
        return _fail("UsageError", str(exc), 1)
    except OSError as exc:
        return _fail("InputError", str(exc), 2)


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}, sort_keys=True) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
