"""Minimal deterministic SVG figures for the analysis outputs.

Hand-rolled on purpose: identical inputs must produce byte-identical files,
which rules out plotting backends that embed timestamps or hashed ids. Only
the three panel types the reports need are supported.
"""

from __future__ import annotations

import math

import numpy as np

_W, _H = 480, 360
_ML, _MR, _MT, _MB = 62, 16, 30, 46


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


class _Canvas:
    def __init__(self, width=_W, height=_H, title=""):
        self.width = width
        self.height = height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="Helvetica, Arial, sans-serif">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
        ]
        if title:
            self.text(width / 2, 18, title, size=13, anchor="middle")

    def line(self, x1, y1, x2, y2, color="black", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{color}" stroke-width="{_fmt(width)}"{d}/>'
        )

    def polyline(self, pts, color="black", width=1.5):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{_fmt(width)}"/>'
        )

    def polygon(self, pts, fill="#c8d8ef", opacity=0.6):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(
            f'<polygon points="{coords}" fill="{fill}" fill-opacity="{_fmt(opacity)}" stroke="none"/>'
        )

    def circle(self, x, y, r=3.0, color="black"):
        self.parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" fill="{color}"/>'
        )

    def rect(self, x, y, w, h, fill="#999999"):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" fill="{fill}"/>'
        )

    def text(self, x, y, s, size=11, anchor="start", color="black"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" fill="{color}" '
            f'text-anchor="{anchor}">{s}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


class _Axes:
    def __init__(self, canvas: _Canvas, xlim, ylim, xlabel="", ylabel="", logx=False):
        self.c = canvas
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.logx = logx
        if logx:
            self.x0, self.x1 = math.log10(self.x0), math.log10(self.x1)
        self.px0, self.px1 = _ML, canvas.width - _MR
        self.py0, self.py1 = canvas.height - _MB, _MT
        self.c.line(self.px0, self.py0, self.px1, self.py0)
        self.c.line(self.px0, self.py0, self.px0, self.py1)
        if xlabel:
            self.c.text((self.px0 + self.px1) / 2, canvas.height - 10, xlabel, anchor="middle")
        if ylabel:
            cx, cy = 16, (self.py0 + self.py1) / 2
            self.c.parts.append(
                f'<text x="{cx}" y="{cy}" font-size="11" text-anchor="middle" '
                f'transform="rotate(-90 {cx} {cy})">{ylabel}</text>'
            )

    def sx(self, x):
        if self.logx:
            x = math.log10(max(x, 1e-300))
        span = self.x1 - self.x0 or 1.0
        return self.px0 + (x - self.x0) / span * (self.px1 - self.px0)

    def sy(self, y):
        span = self.y1 - self.y0 or 1.0
        return self.py0 + (y - self.y0) / span * (self.py1 - self.py0)

    def xticks(self, values, labels=None):
        labels = labels or [_fmt(v) for v in values]
        for v, lab in zip(values, labels):
            px = self.sx(v)
            self.c.line(px, self.py0, px, self.py0 + 4)
            self.c.text(px, self.py0 + 16, lab, size=9, anchor="middle")

    def yticks(self, values, labels=None):
        labels = labels or [_fmt(v) for v in values]
        for v, lab in zip(values, labels):
            py = self.sy(v)
            self.c.line(self.px0 - 4, py, self.px0, py)
            self.c.text(self.px0 - 7, py + 3, lab, size=9, anchor="end")


_STRATUM_COLORS = {"all": "#c0392b", "clean": "#1e8449", "warned": "#2e6da4"}


def deviation_figure(summaries: dict) -> str:
    """Mean deviation with 95% CI per stratum; zero line dashed."""
    c = _Canvas(title="Deviation of posterior model probability from the prior")
    names = list(summaries)
    lo = min(min(s.ci_low for s in summaries.values()), 0.0)
    hi = max(max(s.ci_high for s in summaries.values()), 0.0)
    pad = 0.1 * (hi - lo or 1.0)
    ax = _Axes(c, (-0.5, len(names) - 0.5), (lo - pad, hi + pad), ylabel="mean deviation")
    zero = ax.sy(0.0)
    c.line(ax.px0, zero, ax.px1, zero, color="#888888", dash="5,4")
    for i, name in enumerate(names):
        s = summaries[name]
        color = _STRATUM_COLORS.get(name, "black")
        px = ax.sx(i)
        c.line(px, ax.sy(s.ci_low), px, ax.sy(s.ci_high), color=color, width=2.0)
        c.circle(px, ax.sy(s.mean_deviation), 4.0, color=color)
        c.text(px, ax.py0 + 16, f"{name} (n={s.n})", size=10, anchor="middle")
    ticks = np.linspace(lo - pad, hi + pad, 5)
    ax.yticks(ticks)
    return c.render()


def sensitivity_figure(curves: dict, default_scale: float) -> str:
    """log10 BF01 against prior scale, one curve per stratum."""
    c = _Canvas(title="Prior-scale sensitivity of the calibration Bayes factor")
    xs = [s for curve in curves.values() for s, _ in curve]
    vals = [
        math.log10(max(bf, 1e-300))
        for curve in curves.values()
        for _, bf in curve
        if bf is not None and bf > 0 and math.isfinite(bf)
    ]
    if not vals:
        vals = [0.0]
    lo, hi = min(vals + [0.0]), max(vals + [0.0])
    pad = 0.1 * (hi - lo or 1.0)
    ax = _Axes(
        c, (min(xs), max(xs)), (lo - pad, hi + pad),
        xlabel="Cauchy prior scale", ylabel="log10 BF01 (calibrated vs biased)", logx=True,
    )
    px = ax.sx(default_scale)
    c.line(px, ax.py0, px, ax.py1, color="#aaaaaa", width=1.2)
    zero = ax.sy(0.0)
    c.line(ax.px0, zero, ax.px1, zero, color="#888888", dash="5,4")
    for name, curve in curves.items():
        pts = [
            (ax.sx(s), ax.sy(math.log10(max(bf01, 1e-300))))
            for s, bf01 in curve
            if bf01 is not None and bf01 > 0 and math.isfinite(bf01)
        ]
        if pts:
            c.polyline(pts, color=_STRATUM_COLORS.get(name, "black"))
    ax.xticks([0.05, 0.1, 0.2, 0.5, 1.0, 1.5])
    ax.yticks(np.round(np.linspace(lo - pad, hi + pad, 5), 1))
    legend_y = _MT + 8
    for name in curves:
        c.text(ax.px1 - 90, legend_y, name, size=10, color=_STRATUM_COLORS.get(name, "black"))
        legend_y += 13
    return c.render()


def reliability_figure(curve, title: str) -> str:
    """Isotonic reliability diagram with band, diagonal and forecast histogram."""
    c = _Canvas(title=title)
    ax = _Axes(
        c, (0.0, 1.0), (0.0, 1.0),
        xlabel="estimated posterior probability", ylabel="conditional event frequency",
    )
    if curve.band_lower is not None:
        upper = list(zip(curve.forecasts, curve.band_upper))
        lower = list(zip(curve.forecasts, curve.band_lower))[::-1]
        pts = [(ax.sx(x), ax.sy(y)) for x, y in upper + lower]
        if len(pts) >= 3:
            c.polygon(pts)
    c.line(ax.sx(0), ax.sy(0), ax.sx(1), ax.sy(1), color="#888888", dash="5,4")
    pts = [(ax.sx(x), ax.sy(y)) for x, y in zip(curve.forecasts, curve.fitted)]
    if len(pts) == 1:
        c.circle(pts[0][0], pts[0][1], 3.5, color="#c0392b")
    else:
        c.polyline(pts, color="#c0392b", width=2.0)
    # histogram strip along the bottom
    if curve.hist_counts.sum() > 0:
        hmax = curve.hist_counts.max()
        for count, e0, e1 in zip(curve.hist_counts, curve.hist_edges[:-1], curve.hist_edges[1:]):
            if count == 0:
                continue
            h = 22.0 * count / hmax
            c.rect(ax.sx(e0) + 1, ax.py0 - h, ax.sx(e1) - ax.sx(e0) - 2, h, fill="#b0b0b0")
    ax.xticks([0, 0.25, 0.5, 0.75, 1.0])
    ax.yticks([0, 0.25, 0.5, 0.75, 1.0])
    return c.render()


def evidence_figure(series: dict, threshold: float = 10.0) -> str:
    """Running BF01 against the number of simulations per stratum."""
    c = _Canvas(title="Evidence as a function of the number of simulations")
    xs, vals = [], []
    for curve in series.values():
        for n, bf in curve:
            if bf is not None and bf > 0 and math.isfinite(bf):
                xs.append(n)
                vals.append(math.log10(bf))
    if not xs:
        xs, vals = [1], [0.0]
    lo, hi = min(vals + [0.0]), max(vals + [math.log10(threshold)])
    pad = 0.1 * (hi - lo or 1.0)
    ax = _Axes(
        c, (0, max(xs)), (lo - pad, hi + pad),
        xlabel="number of simulations", ylabel="log10 BF01",
    )
    zero = ax.sy(0.0)
    c.line(ax.px0, zero, ax.px1, zero, color="#888888", dash="5,4")
    thr = ax.sy(math.log10(threshold))
    c.line(ax.px0, thr, ax.px1, thr, color="#bbbbbb", dash="2,3")
    for name, curve in series.items():
        pts = [
            (ax.sx(n), ax.sy(math.log10(bf)))
            for n, bf in curve
            if bf is not None and bf > 0 and math.isfinite(bf)
        ]
        if pts:
            c.polyline(pts, color=_STRATUM_COLORS.get(name, "black"))
    ax.xticks(np.unique(np.linspace(0, max(xs), 5).astype(int)))
    ax.yticks(np.round(np.linspace(lo - pad, hi + pad, 5), 1))
    legend_y = _MT + 8
    for name in series:
        c.text(ax.px1 - 90, legend_y, name, size=10, color=_STRATUM_COLORS.get(name, "black"))
        legend_y += 13
    return c.render()
