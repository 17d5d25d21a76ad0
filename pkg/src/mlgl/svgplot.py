"""Hand-assembled SVG heatmaps.

String templating only, no plotting library: the analyze command
promises byte-identical output for identical inputs, so every glyph
here is a pure function of the data.
"""
from __future__ import annotations

import math

import numpy as np

CELL = 16
FONT = "font-family=\"monospace\" font-size=\"10\""

_BLUE = (33, 102, 172)
_WHITE = (247, 247, 247)
_RED = (178, 24, 43)
_GRAY = "#bebebe"


def _color(v: float) -> str:
    if math.isnan(v):
        return _GRAY
    v = max(-1.0, min(1.0, v))
    target = _RED if v >= 0 else _BLUE
    t = abs(v)
    r, g, b = (round(w + (c - w) * t) for w, c in zip(_WHITE, target))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(labels: list[str], values: np.ndarray, title: str) -> str:
    n = len(labels)
    label_px = 7 * max(len(s) for s in labels) + 10
    left = label_px
    top = label_px + 24
    width = left + n * CELL + 20
    height = top + n * CELL + 40
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
           f'<text x="{left}" y="16" {FONT} font-size="12">{title}</text>']
    for j, name in enumerate(labels):
        x = left + j * CELL + CELL // 2 + 3
        out.append(f'<text x="{x}" y="{top - 4}" {FONT} '
                   f'transform="rotate(-60 {x} {top - 4})">{name}</text>')
    for i, name in enumerate(labels):
        y = top + i * CELL + CELL - 4
        out.append(f'<text x="{left - 6}" y="{y}" {FONT} text-anchor="end">{name}</text>')
        for j in range(n):
            v = float(values[i, j])
            shown = "nan" if math.isnan(v) else f"{v:.3f}"
            out.append(f'<rect x="{left + j * CELL}" y="{top + i * CELL}" '
                       f'width="{CELL}" height="{CELL}" fill="{_color(v)}" '
                       f'stroke="#ffffff" stroke-width="1">'
                       f'<title>{labels[i]} / {labels[j]}: {shown}</title></rect>')
    # legend strip
    ly = top + n * CELL + 12
    for k in range(11):
        v = -1.0 + 0.2 * k
        out.append(f'<rect x="{left + k * 22}" y="{ly}" width="22" height="10" '
                   f'fill="{_color(v)}"/>')
    out.append(f'<text x="{left}" y="{ly + 22}" {FONT}>-1</text>')
    out.append(f'<text x="{left + 5 * 22}" y="{ly + 22}" {FONT}>0</text>')
    out.append(f'<text x="{left + 10 * 22}" y="{ly + 22}" {FONT}>+1</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
