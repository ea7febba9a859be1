"""Minimal SVG emitters for loss curves and histograms.

Hand-rolled on purpose: SVG is the only plot format we ship, it needs no
plotting dependency, and tests can compare output structurally with an XML
parser instead of byte-by-byte.
"""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = 56
PALETTE = ("#c0392b", "#2980b9", "#27ae60", "#8e44ad")


def _header() -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]


def _axes(title: str, x_label: str, y_label: str, x_max: float, y_max: float) -> list[str]:
    x0, y0 = MARGIN, HEIGHT - MARGIN
    x1, y1 = WIDTH - MARGIN, MARGIN
    parts = [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{x_label}</text>',
        f'<text x="16" y="{HEIGHT // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {HEIGHT // 2})">{y_label}</text>',
        f'<text x="{x0}" y="{y0 + 16}" font-size="10">0</text>',
        f'<text x="{x1}" y="{y0 + 16}" text-anchor="end" font-size="10">{x_max:g}</text>',
        f'<text x="{x0 - 4}" y="{y1}" text-anchor="end" font-size="10">{y_max:g}</text>',
    ]
    return parts


def _to_px(x, y, x_max, y_max):
    x_max = x_max if x_max > 0 else 1.0
    y_max = y_max if y_max > 0 else 1.0
    px = MARGIN + (WIDTH - 2 * MARGIN) * (x / x_max)
    py = (HEIGHT - MARGIN) - (HEIGHT - 2 * MARGIN) * (y / y_max)
    return px, py


def _legend(names) -> list[str]:
    parts = []
    for i, name in enumerate(names):
        y = MARGIN + 18 * i
        color = PALETTE[i % len(PALETTE)]
        parts.append(
            f'<rect x="{WIDTH - MARGIN - 110}" y="{y - 9}" width="12" height="12" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{WIDTH - MARGIN - 92}" y="{y + 2}" font-size="12">{name}</text>'
        )
    return parts


def line_chart(path, series: dict, title: str, x_label: str, y_label: str) -> None:
    """One polyline per named series, indices on the x axis."""
    x_max = max(max(len(v) - 1, 1) for v in series.values())
    y_max = max(max(v) for v in series.values() if len(v)) or 1.0
    parts = _header() + _axes(title, x_label, y_label, float(x_max), float(y_max))
    for i, (name, values) in enumerate(series.items()):
        pts = " ".join(
            "{:.2f},{:.2f}".format(*_to_px(j, v, x_max, y_max)) for j, v in enumerate(values)
        )
        color = PALETTE[i % len(PALETTE)]
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5" '
            f'data-series="{name}"/>'
        )
    parts += _legend(series.keys())
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def histogram_chart(path, edges, counts: dict, title: str, x_label: str, y_label: str) -> None:
    """Step-outline histogram, one polyline per named series on shared bins."""
    edges = np.asarray(edges, dtype=np.float64)
    x_max = float(edges[-1]) or 1.0
    y_max = max(int(c.max()) for c in counts.values()) or 1
    parts = _header() + _axes(title, x_label, y_label, x_max, float(y_max))
    for i, (name, series) in enumerate(counts.items()):
        coords = [(edges[0], 0.0)]
        for b, c in enumerate(series):
            coords.append((edges[b], float(c)))
            coords.append((edges[b + 1], float(c)))
        coords.append((edges[-1], 0.0))
        pts = " ".join(
            "{:.2f},{:.2f}".format(*_to_px(x, y, x_max, y_max)) for x, y in coords
        )
        color = PALETTE[i % len(PALETTE)]
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5" '
            f'data-series="{name}"/>'
        )
    parts += _legend(counts.keys())
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
