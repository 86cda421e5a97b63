"""Minimal SVG line plots: no display or plotting backend required."""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

_COLORS = ("#1f4e99", "#c0392b", "#228b22", "#7d3c98")


def decimate(x: np.ndarray, y: np.ndarray, max_points: int = 4000) -> tuple[np.ndarray, np.ndarray]:
    """Keep the min and max of ``y`` in each bucket so peaks survive thinning."""
    n = y.shape[0]
    if n <= max_points:
        return x, y
    buckets = max_points // 2
    edges = np.linspace(0, n, buckets + 1).astype(int)
    keep = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        seg = y[lo:hi]
        a, b = lo + int(np.argmin(seg)), lo + int(np.argmax(seg))
        keep.extend(sorted({a, b}))
    keep = np.asarray(keep)
    return x[keep], y[keep]


@dataclass
class Panel:
    """One axes box with data-coordinate series."""

    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    logx: bool = False
    logy: bool = False
    lines: list = field(default_factory=list)
    hlines: list = field(default_factory=list)
    markers: list = field(default_factory=list)

    def line(self, x, y, label="", color=None):
        self.lines.append((np.asarray(x, float), np.asarray(y, float), label, color))

    def hline(self, y, label="", color="#c0392b"):
        self.hlines.append((float(y), label, color))

    def marker(self, x, y, color="#228b22"):
        self.markers.append((float(x), float(y), color))

    def _limits(self):
        xs = [l[0] for l in self.lines] + [np.array([m[0] for m in self.markers])]
        ys = [l[1] for l in self.lines] + [np.array([h[0] for h in self.hlines] + [m[1] for m in self.markers])]
        xs = np.concatenate([a for a in xs if a.size])
        ys = np.concatenate([a for a in ys if a.size])
        if self.logx:
            xs = np.log10(xs)
        if self.logy:
            ys = np.log10(ys)
        x0, x1 = float(xs.min()), float(xs.max())
        y0, y1 = float(ys.min()), float(ys.max())
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        pad = 0.05 * (y1 - y0) if y1 > y0 else 0.5
        return x0, x1, y0 - pad, y1 + pad

    def render(self, left: float, top: float, width: float, height: float) -> list[str]:
        x0, x1, y0, y1 = self._limits()

        def tx(v):
            v = np.log10(v) if self.logx else v
            return left + (v - x0) / (x1 - x0) * width

        def ty(v):
            v = np.log10(v) if self.logy else v
            return top + height - (v - y0) / (y1 - y0) * height

        out = [
            f'<rect x="{left:.1f}" y="{top:.1f}" width="{width:.1f}" height="{height:.1f}" '
            'fill="none" stroke="#333" stroke-width="1"/>'
        ]
        if self.title:
            out.append(f'<text x="{left + width / 2:.1f}" y="{top - 8:.1f}" text-anchor="middle" '
                       f'font-size="14">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{left + width / 2:.1f}" y="{top + height + 34:.1f}" '
                       f'text-anchor="middle" font-size="12">{escape(self.xlabel)}</text>')
        if self.ylabel:
            out.append(f'<text x="{left - 48:.1f}" y="{top + height / 2:.1f}" font-size="12" '
                       f'transform="rotate(-90 {left - 48:.1f} {top + height / 2:.1f})" '
                       f'text-anchor="middle">{escape(self.ylabel)}</text>')
        for frac in (0.0, 0.5, 1.0):
            xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
            xt = 10**xv if self.logx else xv
            yt = 10**yv if self.logy else yv
            out.append(f'<text x="{left + frac * width:.1f}" y="{top + height + 16:.1f}" '
                       f'text-anchor="middle" font-size="10">{xt:.4g}</text>')
            out.append(f'<text x="{left - 4:.1f}" y="{top + height - frac * height + 3:.1f}" '
                       f'text-anchor="end" font-size="10">{yt:.4g}</text>')
        for i, (x, y, label, color) in enumerate(self.lines):
            color = color or _COLORS[i % len(_COLORS)]
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(tx(x), ty(y)))
            bounds = f"{left:g} {top:g} {width:g} {height:g} {x0!r} {x1!r} {y0!r} {y1!r}"
            out.append(f'<polyline class="series" data-label="{escape(label)}" data-bounds="{bounds}" fill="none" '
                       f'stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        for y, label, color in self.hlines:
            out.append(f'<line class="threshold" data-label="{escape(label)}" x1="{left:.1f}" '
                       f'x2="{left + width:.1f}" y1="{ty(y):.2f}" y2="{ty(y):.2f}" stroke="{color}" '
                       'stroke-dasharray="6,3"/>')
        for x, y, color in self.markers:
            out.append(f'<circle class="marker" cx="{tx(x):.2f}" cy="{ty(y):.2f}" r="4" '
                       f'fill="none" stroke="{color}" stroke-width="1.5"/>')
        return out


def render(panels: list[Panel], width: int = 900, panel_height: int = 260) -> str:
    margin_l, margin_r, margin_t, gap = 80, 20, 30, 70
    height = margin_t + len(panels) * panel_height + (len(panels) - 1) * gap + 50
    body = []
    for i, p in enumerate(panels):
        top = margin_t + i * (panel_height + gap)
        body.extend(p.render(margin_l, top, width - margin_l - margin_r, panel_height))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">\n'
        f'<rect width="100%" height="100%" fill="white"/>\n' + "\n".join(body) + "\n</svg>\n"
    )


def write(path, panels: list[Panel], **kwargs) -> None:
    with open(path, "w") as fh:
        fh.write(render(panels, **kwargs))
