"""Deterministic SVG figures: cluster map, elbow curve, silhouette plot, signature bars.

Output depends only on the inputs: coordinates are printed with a fixed
number of decimals and elements are emitted in input order.
"""
from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .clustering import NOISE
from .errors import UnknownRegionName

# ColorBrewer Set2
PALETTE = ("#66c2a5", "#fc8d62", "#8da0cb", "#e78ac3", "#a6d854", "#ffd92f")
NOISE_FILL = "url(#noise-hatch)"
UNLABELLED_FILL = "#f0f0f0"
MAP_HEIGHT = 400.0
FONT = 'font-family="sans-serif"'


def color(label: int) -> str:
    if label == NOISE:
        return NOISE_FILL
    return PALETTE[label % len(PALETTE)]


def _n(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


class Document:
    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self.defs: list[str] = []
        self.body: list[str] = []

    def add(self, element: str) -> None:
        self.body.append(element)

    def text(self, x, y, content, size=12, anchor="start", extra=""):
        self.add(
            f'<text x="{_n(x)}" y="{_n(y)}" font-size="{size}" text-anchor="{anchor}" {FONT}{extra}>'
            f"{escape(str(content))}</text>"
        )

    def line(self, x1, y1, x2, y2, stroke="#333333", width=1.0, dash=None):
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.add(
            f'<line x1="{_n(x1)}" y1="{_n(y1)}" x2="{_n(x2)}" y2="{_n(y2)}" '
            f'stroke="{stroke}" stroke-width="{width}"{dash_attr}/>'
        )

    def rect(self, x, y, w, h, fill, stroke="none"):
        self.add(
            f'<rect x="{_n(x)}" y="{_n(y)}" width="{_n(w)}" height="{_n(h)}" fill="{fill}" stroke="{stroke}"/>'
        )

    def render(self) -> str:
        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_n(self.width)}" '
            f'height="{_n(self.height)}" viewBox="0 0 {_n(self.width)} {_n(self.height)}">',
        ]
        if self.defs:
            out.append("<defs>")
            out.extend(self.defs)
            out.append("</defs>")
        out.append(f'<rect x="0" y="0" width="{_n(self.width)}" height="{_n(self.height)}" fill="#ffffff"/>')
        out.extend(self.body)
        out.append("</svg>")
        return "\n".join(out) + "\n"


_HATCH = (
    '<pattern id="noise-hatch" patternUnits="userSpaceOnUse" width="6" height="6" '
    'patternTransform="rotate(45)"><rect width="6" height="6" fill="#bdbdbd"/>'
    '<line x1="0" y1="0" x2="0" y2="6" stroke="#636363" stroke-width="2"/></pattern>'
)


def placeholder(message: str, width: float = 480, height: float = 120) -> str:
    doc = Document(width, height)
    doc.text(width / 2, height / 2, message, size=14, anchor="middle")
    return doc.render()


def render_choropleth(regions: Sequence, labels: Mapping[str, int], title: str | None = None) -> str:
    """Equirectangular cluster map, one ``<path>`` per polygon.

    Regions without a label are drawn in light gray; NOISE is hatched.
    """
    names = {r.name for r in regions}
    for name in labels:
        if name not in names:
            raise UnknownRegionName(f"labelled region {name!r} is not among the boundaries")

    pts = np.concatenate([ring for r in regions for poly in r.polygons for ring in poly])
    west, south = pts.min(axis=0)
    east, north = pts.max(axis=0)
    span_x = max(east - west, 1e-12)
    span_y = max(north - south, 1e-12)
    scale = MAP_HEIGHT / span_y
    map_w = span_x * scale
    margin = 10.0
    legend_w = 150.0
    used = sorted(set(labels.values()), key=lambda v: (v == NOISE, v))
    unlabelled = any(r.name not in labels for r in regions)
    legend_rows = len(used) + (1 if unlabelled else 0)
    width = map_w + 2 * margin + legend_w
    height = max(MAP_HEIGHT + 2 * margin, 40.0 + 20.0 * legend_rows) + (24.0 if title else 0.0)
    top = margin + (24.0 if title else 0.0)

    doc = Document(width, height)
    if NOISE in used:
        doc.defs.append(_HATCH)
    if title:
        doc.text(margin, 18, title, size=14)

    def project(ring):
        xs = margin + (ring[:, 0] - west) * scale
        ys = top + (north - ring[:, 1]) * scale
        return xs, ys

    for region in regions:
        label = labels.get(region.name)
        fill = UNLABELLED_FILL if label is None else color(label)
        for polygon in region.polygons:
            subpaths = []
            for ring in polygon:
                xs, ys = project(ring)
                coords = " L".join(f"{_n(x)},{_n(y)}" for x, y in zip(xs[:-1], ys[:-1]))
                subpaths.append(f"M{coords} Z")
            doc.add(
                f'<path d="{" ".join(subpaths)}" fill="{fill}" fill-rule="evenodd" '
                f'stroke="#404040" stroke-width="0.5"><title>{escape(region.name)}</title></path>'
            )

    lx = margin * 2 + map_w
    ly = top + 10
    doc.text(lx, ly, "Cluster", size=12)
    for i, label in enumerate(used):
        y = ly + 10 + 20 * i
        doc.rect(lx, y, 14, 14, color(label), stroke="#404040")
        doc.text(lx + 20, y + 11, "noise" if label == NOISE else f"cluster {label}", size=11)
    if unlabelled:
        y = ly + 10 + 20 * len(used)
        doc.rect(lx, y, 14, 14, UNLABELLED_FILL, stroke="#404040")
        doc.text(lx + 20, y + 11, "no data", size=11)
    return doc.render()


def _axes(doc, x0, y0, w, h, xlabel, ylabel):
    doc.line(x0, y0 + h, x0 + w, y0 + h)
    doc.line(x0, y0, x0, y0 + h)
    doc.text(x0 + w / 2, y0 + h + 36, xlabel, anchor="middle")
    doc.add(
        f'<text x="{_n(x0 - 48)}" y="{_n(y0 + h / 2)}" font-size="12" text-anchor="middle" {FONT} '
        f'transform="rotate(-90 {_n(x0 - 48)} {_n(y0 + h / 2)})">{escape(ylabel)}</text>'
    )


def _range(values):
    lo, hi = float(min(values)), float(max(values))
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def render_elbow(ks: Sequence[int], scores: Sequence[float], elbow_k: int | None, metric: str = "distortion") -> str:
    """Score-versus-k line chart with a dashed marker at the elbow."""
    doc = Document(560, 360)
    x0, y0, w, h = 70.0, 30.0, 460.0, 270.0
    _axes(doc, x0, y0, w, h, "k", f"{metric} score")
    lo, hi = _range(scores)
    kmin, kmax = ks[0], ks[-1]
    kspan = max(kmax - kmin, 1)

    def px(k):
        return x0 + (k - kmin) / kspan * w

    def py(v):
        return y0 + h - (v - lo) / (hi - lo) * h

    for k in ks:
        doc.line(px(k), y0 + h, px(k), y0 + h + 4)
        doc.text(px(k), y0 + h + 16, k, size=10, anchor="middle")
    for v in np.linspace(lo, hi, 5):
        doc.line(x0 - 4, py(v), x0, py(v))
        doc.text(x0 - 6, py(v) + 3, f"{v:.3g}", size=10, anchor="end")
    points = " ".join(f"{_n(px(k))},{_n(py(v))}" for k, v in zip(ks, scores))
    doc.add(f'<polyline points="{points}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
    for k, v in zip(ks, scores):
        doc.add(f'<circle cx="{_n(px(k))}" cy="{_n(py(v))}" r="3" fill="#1f77b4"/>')
    if elbow_k is not None:
        doc.line(px(elbow_k), y0, px(elbow_k), y0 + h, stroke="#d62728", width=1.5, dash="6,4")
        doc.text(px(elbow_k) + 4, y0 + 12, f"elbow k={elbow_k}", size=11, extra=' fill="#d62728"')
    doc.text(x0, 18, f"{metric.capitalize()} score by k", size=14)
    return doc.render()


def render_silhouette(per_cluster: Sequence[np.ndarray], mean: float) -> str:
    """Horizontal silhouette bars grouped by cluster, sorted within each cluster."""
    total = sum(len(c) for c in per_cluster)
    gap = 6.0
    bar = max(2.0, min(12.0, 360.0 / max(total, 1)))
    h = total * bar + gap * (len(per_cluster) + 1)
    doc = Document(560, h + 90)
    x0, y0, w = 70.0, 30.0, 460.0
    _axes(doc, x0, y0, w, h, "silhouette value", "cluster")
    lo, hi = -1.0, 1.0

    def px(v):
        return x0 + (v - lo) / (hi - lo) * w

    for v in (-1.0, -0.5, 0.0, 0.5, 1.0):
        doc.line(px(v), y0 + h, px(v), y0 + h + 4)
        doc.text(px(v), y0 + h + 16, f"{v:.1f}", size=10, anchor="middle")
    y = y0 + gap
    for c, values in enumerate(per_cluster):
        start = y
        for v in values[::-1]:
            left = min(px(0.0), px(v))
            doc.rect(left, y, abs(px(v) - px(0.0)), bar * 0.9, PALETTE[c % len(PALETTE)])
            y += bar
        doc.text(x0 - 6, (start + y) / 2 + 4, c, size=10, anchor="end")
        y += gap
    doc.line(px(mean), y0, px(mean), y0 + h, stroke="#d62728", width=1.5, dash="6,4")
    doc.text(px(mean) + 4, y0 - 6, f"mean {mean:.3f}", size=11, extra=' fill="#d62728"')
    return doc.render()


def render_signatures(columns: Sequence[str], signatures: np.ndarray) -> str:
    """Grouped bars: one group per cluster, one bar per pollutant (standardized units)."""
    k, p = signatures.shape
    doc = Document(140 + 90 * max(k, 1) + 140, 360)
    x0, y0, h = 70.0, 30.0, 270.0
    w = 90.0 * max(k, 1)
    _axes(doc, x0, y0, w, h, "cluster", "mean z-score")
    lo, hi = _range(list(signatures.ravel()) + [0.0])

    def py(v):
        return y0 + h - (v - lo) / (hi - lo) * h

    zero = py(0.0)
    doc.line(x0, zero, x0 + w, zero, stroke="#999999")
    for v in np.linspace(lo, hi, 5):
        doc.line(x0 - 4, py(v), x0, py(v))
        doc.text(x0 - 6, py(v) + 3, f"{v:.2f}", size=10, anchor="end")
    bw = 70.0 / max(p, 1)
    pollutant_colors = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02")
    for c in range(k):
        gx = x0 + 90 * c + 10
        for j in range(p):
            v = signatures[c, j]
            top = min(py(v), zero)
            doc.rect(gx + j * bw, top, bw * 0.9, abs(py(v) - zero), pollutant_colors[j % 6])
        doc.text(gx + 35, y0 + h + 16, c, size=10, anchor="middle")
    lx = x0 + w + 20
    for j, name in enumerate(columns):
        doc.rect(lx, y0 + 20 * j, 12, 12, pollutant_colors[j % 6])
        doc.text(lx + 18, y0 + 20 * j + 10, name, size=11)
    doc.text(x0, 18, "Pollution signature per cluster", size=14)
    return doc.render()
