"""Deterministic SVG charts for the analysis outputs.

Output is plain SVG text with fixed-precision coordinates, so identical
inputs give byte-identical files. Alert times are drawn as dashed vertical
lines with ``class="alert-line"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .cits import SweepResult
from .metrics import NON_WARNED, WARNED, CdfSnapshot, GroupSeries, ThresholdSeries
from .records import BaselineProfile, ConnectivitySeries
from .seg import Seg
from .timebins import Clock, Window

SEG_COLORS = {Seg.LOW: "#1b9e77", Seg.MEDIUM: "#d95f02", Seg.HIGH: "#7570b3"}
FLAG_COLORS = {WARNED: "#d62728", NON_WARNED: "#1f77b4", "differential": "#444444", "all": "#444444"}
PANEL_W, PANEL_H = 360, 240
MARGIN = dict(left=56, right=16, top=40, bottom=48)


def _f(x: float) -> str:
    return f"{x:.2f}"


def nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks, k = [], 0
    while start + k * step <= hi + 1e-12 * abs(step):
        ticks.append(round(start + k * step, 10))
        k += 1
    return ticks


def _fmt_tick(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 100 or float(v).is_integer():
        return f"{v:.0f}"
    return f"{v:.2f}".rstrip("0").rstrip(".")


@dataclass
class Panel:
    x: float
    y: float
    xlim: tuple[float, float]
    ylim: tuple[float, float]
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    parts: list[str] = field(default_factory=list)
    w: float = PANEL_W
    h: float = PANEL_H

    def sx(self, v) -> np.ndarray:
        lo, hi = self.xlim
        return self.x + (np.asarray(v, dtype=float) - lo) / (hi - lo or 1.0) * self.w

    def sy(self, v) -> np.ndarray:
        lo, hi = self.ylim
        return self.y + self.h - (np.asarray(v, dtype=float) - lo) / (hi - lo or 1.0) * self.h

    def _runs(self, xs, *cols):
        """Split into runs of finite values so gaps stay gaps."""
        ok = np.all([np.isfinite(c) for c in cols], axis=0)
        idx = np.flatnonzero(ok)
        if idx.size == 0:
            return []
        breaks = np.flatnonzero(np.diff(idx) > 1) + 1
        return np.split(idx, breaks)

    def line(self, xs, ys, color: str, width: float = 1.5, dash: str | None = None, cls: str = "series") -> None:
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        for run in self._runs(xs, ys):
            pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(self.sx(xs[run]), self.sy(ys[run])))
            extra = f' stroke-dasharray="{dash}"' if dash else ""
            self.parts.append(
                f'<polyline class="{cls}" fill="none" stroke="{color}" stroke-width="{width}"{extra} points="{pts}"/>'
            )

    def band(self, xs, lo, hi, color: str, opacity: float = 0.2) -> None:
        xs, lo, hi = (np.asarray(a, float) for a in (xs, lo, hi))
        for run in self._runs(xs, lo, hi):
            top = [f"{_f(a)},{_f(b)}" for a, b in zip(self.sx(xs[run]), self.sy(hi[run]))]
            bottom = [f"{_f(a)},{_f(b)}" for a, b in zip(self.sx(xs[run][::-1]), self.sy(lo[run][::-1]))]
            self.parts.append(
                f'<polygon class="ci-band" fill="{color}" fill-opacity="{opacity}" stroke="none" points="{" ".join(top + bottom)}"/>'
            )

    def step(self, xs, ys, color: str) -> None:
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        if xs.size == 0:
            return
        px, py = [xs[0]], [0.0]
        for a, b in zip(xs, ys):
            px += [a, a]
            py += [py[-1], b]
        px.append(self.xlim[1])
        py.append(py[-1])
        self.line(px, py, color, cls="ecdf")

    def vline(self, x: float, label: str = "", cls: str = "alert-line", color: str = "#888888") -> None:
        if not self.xlim[0] <= x <= self.xlim[1]:
            return
        sx = _f(float(self.sx(x)))
        self.parts.append(
            f'<line class="{cls}" data-time={quoteattr(label)} x1="{sx}" x2="{sx}" y1="{_f(self.y)}" '
            f'y2="{_f(self.y + self.h)}" stroke="{color}" stroke-width="1" stroke-dasharray="4,3"/>'
        )

    def bars(self, xs, heights, width: float, color: str) -> None:
        base = max(self.ylim[0], 0.0) if self.ylim[0] < 0 < self.ylim[1] else self.ylim[0]
        for a, hgt in zip(xs, heights):
            x0, x1 = self.sx(a - width / 2), self.sx(a + width / 2)
            y0, y1 = sorted((float(self.sy(base)), float(self.sy(hgt))))
            self.parts.append(
                f'<rect class="bar" x="{_f(x0)}" y="{_f(y0)}" width="{_f(x1 - x0)}" height="{_f(y1 - y0)}" fill="{color}"/>'
            )

    def render(self, xticks: Sequence[tuple[float, str]] | None = None, yticks: Sequence[float] | None = None) -> str:
        out = ['<g class="panel">']
        out.append(
            f'<rect x="{_f(self.x)}" y="{_f(self.y)}" width="{_f(self.w)}" height="{_f(self.h)}" fill="none" stroke="#333333"/>'
        )
        for v in yticks if yticks is not None else nice_ticks(*self.ylim):
            y = _f(float(self.sy(v)))
            out.append(f'<line x1="{_f(self.x - 4)}" x2="{_f(self.x)}" y1="{y}" y2="{y}" stroke="#333333"/>')
            out.append(
                f'<text x="{_f(self.x - 6)}" y="{y}" font-size="10" text-anchor="end" dominant-baseline="middle">{escape(_fmt_tick(v))}</text>'
            )
        ticks = xticks if xticks is not None else [(v, _fmt_tick(v)) for v in nice_ticks(*self.xlim)]
        for v, label in ticks:
            if not self.xlim[0] <= v <= self.xlim[1]:
                continue
            x = _f(float(self.sx(v)))
            yb = self.y + self.h
            out.append(f'<line x1="{x}" x2="{x}" y1="{_f(yb)}" y2="{_f(yb + 4)}" stroke="#333333"/>')
            out.append(f'<text x="{x}" y="{_f(yb + 15)}" font-size="9" text-anchor="middle">{escape(label)}</text>')
        if self.title:
            out.append(
                f'<text x="{_f(self.x + self.w / 2)}" y="{_f(self.y - 10)}" font-size="12" text-anchor="middle">{escape(self.title)}</text>'
            )
        if self.xlabel:
            out.append(
                f'<text x="{_f(self.x + self.w / 2)}" y="{_f(self.y + self.h + 34)}" font-size="10" text-anchor="middle">{escape(self.xlabel)}</text>'
            )
        if self.ylabel:
            cx, cy = self.x - 42, self.y + self.h / 2
            out.append(
                f'<text x="{_f(cx)}" y="{_f(cy)}" font-size="10" text-anchor="middle" transform="rotate(-90 {_f(cx)} {_f(cy)})">{escape(self.ylabel)}</text>'
            )
        out.extend(self.parts)
        out.append("</g>")
        return "\n".join(out)


def _document(title: str, bodies: list[str], n_panels: int, legend: list[tuple[str, str]]) -> str:
    width = MARGIN["left"] + n_panels * (PANEL_W + MARGIN["left"] + MARGIN["right"])
    height = MARGIN["top"] + PANEL_H + MARGIN["bottom"] + 40
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f"<title>{escape(title)}</title>",
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    out.extend(bodies)
    x = MARGIN["left"]
    y = height - 14
    for label, color in legend:
        out.append(f'<rect x="{x}" y="{y - 8}" width="12" height="8" fill="{color}"/>')
        out.append(f'<text x="{x + 16}" y="{y}" font-size="10">{escape(label)}</text>')
        x += 20 + 7 * len(label)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _panel_origin(i: int) -> tuple[float, float]:
    return MARGIN["left"] + i * (PANEL_W + MARGIN["left"] + MARGIN["right"]), MARGIN["top"]


def _time_axis(window: Window, clock: Clock) -> tuple[np.ndarray, list[tuple[float, str]]]:
    """Hours since window start, with ticks at local midnight and noon."""
    hours = (window.bins - window.start) / 3600.0
    ticks = []
    for b in window.bins.tolist():
        local = clock.local(b)
        if local.minute == 0 and local.hour in (0, 12):
            ticks.append(((b - window.start) / 3600.0, local.strftime("%m-%d %H:%M")))
    return hours, ticks


def _ylim(arrays: Sequence[np.ndarray], pad: float = 0.05) -> tuple[float, float]:
    vals = np.concatenate([np.asarray(a, float).ravel() for a in arrays]) if arrays else np.zeros(1)
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return (-1.0, 1.0)
    lo, hi = float(vals.min()), float(vals.max())
    span = hi - lo or 1.0
    return lo - pad * span, hi + pad * span


def _alerts(panel: Panel, alerts: Sequence[int], window: Window, clock: Clock) -> None:
    for a in sorted(alerts):
        panel.vline((a - window.start) / 3600.0, clock.iso(a))


def render_group_series(
    series: GroupSeries, alerts: Sequence[int], clock: Clock, title: str, ylabel: str = "REX"
) -> str:
    """One panel per SEG; a line with CI band per partition label."""
    hours, ticks = _time_axis(series.window, clock)
    segs = sorted({seg for seg, _ in series.keys()})
    labels = sorted({lab for _, lab in series.keys()})
    ylim = _ylim([np.r_[series[k].ci_lo, series[k].ci_hi] for k in series.keys()])
    bodies = []
    for i, seg in enumerate(segs):
        x0, y0 = _panel_origin(i)
        p = Panel(x0, y0, (float(hours[0]), float(hours[-1]) if hours.size > 1 else 1.0), ylim, seg.label, "local time", ylabel)
        if ylim[0] < 0 < ylim[1]:
            p.line([p.xlim[0], p.xlim[1]], [0, 0], "#bbbbbb", width=0.8, cls="zero")
        for lab in labels:
            c = series.curves.get((seg, lab))
            if c is None:
                continue
            color = FLAG_COLORS.get(lab, "#444444")
            p.band(hours, c.ci_lo, c.ci_hi, color)
            p.line(hours, c.mean, color)
        _alerts(p, alerts, series.window, clock)
        bodies.append(p.render(ticks))
    legend = [(lab, FLAG_COLORS.get(lab, "#444444")) for lab in labels] + [("alert", "#888888")]
    return _document(title, bodies, max(1, len(segs)), legend)


def render_connectivity(
    event: ConnectivitySeries, profile: BaselineProfile, alerts: Sequence[int], clock: Clock
) -> str:
    """Mean devices per tower: event window against the baseline profile on the same clock."""
    from .metrics import GroupCurve

    hours, ticks = _time_axis(event.window, clock)
    common, n_b = profile.expected_for(event, clock)
    ev = GroupCurve.from_values(event.bins, event.select(common).counts.astype(float))
    base = GroupCurve.from_values(event.bins, n_b)
    x0, y0 = _panel_origin(0)
    p = Panel(x0, y0, (float(hours[0]), float(hours[-1])), _ylim([ev.ci_lo, ev.ci_hi, base.ci_lo, base.ci_hi]), "Mean devices per tower", "local time", "devices")
    for curve, color in ((base, "#1f77b4"), (ev, "#ff7f0e")):
        p.band(hours, curve.ci_lo, curve.ci_hi, color)
        p.line(hours, curve.mean, color)
    _alerts(p, alerts, event.window, clock)
    return _document("Connectivity", [p.render(ticks)], 1, [("baseline", "#1f77b4"), ("event", "#ff7f0e"), ("alert", "#888888")])


def render_cdfs(snapshots: Sequence[CdfSnapshot], clock: Clock, xlabel: str = "evacuation rate (%)") -> str:
    """One ECDF panel per snapshot time, one step curve per SEG."""
    bodies = []
    xlim = _ylim([s.grid for s in snapshots], pad=0.02)
    for i, snap in enumerate(snapshots):
        x0, y0 = _panel_origin(i)
        p = Panel(x0, y0, xlim, (0.0, 1.0), clock.local(snap.time).strftime("%m-%d %H:%M"), xlabel, "cumulative fraction")
        for seg, f in sorted(snap.cum_fraction.items()):
            p.step(snap.grid, f, SEG_COLORS[seg])
        bodies.append(p.render(yticks=[0, 0.25, 0.5, 0.75, 1.0]))
    return _document("ECDF snapshots", bodies, max(1, len(snapshots)), [(s.label, c) for s, c in SEG_COLORS.items()])


def render_thresholds(ts: ThresholdSeries, alerts: Sequence[int], clock: Clock) -> str:
    """One panel per threshold, one curve per SEG."""
    hours, ticks = _time_axis(ts.window, clock)
    thresholds = sorted({thr for _, thr in ts.fractions})
    bodies = []
    for i, thr in enumerate(thresholds):
        x0, y0 = _panel_origin(i)
        p = Panel(x0, y0, (float(hours[0]), float(hours[-1])), (0.0, 1.0), f"rate <= -{_fmt_tick(thr)}% ({ts.mode})", "local time", "fraction of towers")
        for (seg, t), f in sorted(ts.fractions.items()):
            if t == thr:
                p.line(hours, f, SEG_COLORS[seg])
        _alerts(p, alerts, ts.window, clock)
        bodies.append(p.render(ticks, [0, 0.25, 0.5, 0.75, 1.0]))
    legend = [(s.label, c) for s, c in SEG_COLORS.items()] + [("alert", "#888888")]
    return _document("Threshold crossings", bodies, max(1, len(thresholds)), legend)


def render_sweep(sweep: SweepResult) -> str:
    """BIC bars and adjusted R^2 line against the delay grid."""
    delays = np.asarray(sweep.delays, float)
    step = float(np.min(np.diff(delays))) if delays.size > 1 else 15.0
    xlim = (float(delays[0] - step), float(delays[-1] + step))
    x0, y0 = _panel_origin(0)
    bic = np.asarray(sweep.bic, float)
    finite = bic[np.isfinite(bic)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 1.0
    pad = 0.1 * (hi - lo or abs(hi) or 1.0)
    p1 = Panel(x0, y0, xlim, (lo - pad, hi + pad), "BIC", "delay (minutes)", "BIC")
    p1.bars(delays, np.where(np.isfinite(bic), bic, lo - pad), 0.6 * step, "#9ecae1")
    p1.vline(float(sweep.best_delay), f"{sweep.best_delay} min", cls="selected-delay", color="#d62728")
    ticks = [(float(d), str(int(d))) for d in delays]
    x1, _ = _panel_origin(1)
    adj = np.asarray(sweep.adj_r2, float)
    p2 = Panel(x1, y0, xlim, _ylim([adj], pad=0.1), "adjusted R2", "delay (minutes)", "adjusted R2")
    p2.line(delays, adj, "#d62728")
    for d, a in zip(delays, adj):
        p2.parts.append(f'<circle cx="{_f(float(p2.sx(d)))}" cy="{_f(float(p2.sy(a)))}" r="3" fill="#d62728"/>')
    return _document("Delay sweep", [p1.render(ticks), p2.render(ticks)], 2, [("BIC", "#9ecae1"), ("adjusted R2", "#d62728")])
