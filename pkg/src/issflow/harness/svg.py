"""Minimal SVG polyline charts.

Charts are always rendered by reading back an emitted CSV file, never from
in-memory arrays, so every figure is reproducible from the artifacts alone.
No plotting dependency: the emitter writes axes, tick labels, a legend, and
one polyline per requested column.
"""

from __future__ import annotations

import csv

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")

WIDTH, HEIGHT = 720, 480
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 80, 24, 48, 56


def read_columns(csv_path: str) -> dict:
    """Header-keyed columns of a CSV file.

    Fully numeric columns come back as float arrays; any column with a
    non-numeric cell stays a list of strings.
    """
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = {name: [] for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                cols[name].append(cell)
    out = {}
    for name, cells in cols.items():
        try:
            out[name] = np.array([float(c) for c in cells])
        except ValueError:
            out[name] = cells
    return out


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _ticks(lo: float, hi: float, count: int = 5):
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def polyline_chart(
    csv_path: str,
    x_column: str,
    y_columns,
    out_path: str,
    title: str = "",
) -> str:
    """Render the named CSV columns as polylines against x_column."""
    cols = read_columns(csv_path)
    if x_column not in cols:
        raise KeyError(f"column '{x_column}' not present in {csv_path}")
    for name in y_columns:
        if name not in cols:
            raise KeyError(f"column '{name}' not present in {csv_path}")
    for name in (x_column, *y_columns):
        if not isinstance(cols[name], np.ndarray):
            raise ValueError(f"column '{name}' in {csv_path} is not numeric")
    xs = cols[x_column]
    if len(xs) == 0:
        raise ValueError(f"{csv_path} has no data rows")

    x_lo, x_hi = min(xs), max(xs)
    ys_all = [v for name in y_columns for v in cols[name]]
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0

    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(x: float) -> float:
        return MARGIN_LEFT + plot_w * (x - x_lo) / (x_hi - x_lo)

    def py(y: float) -> float:
        return MARGIN_TOP + plot_h * (1.0 - (y - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" '
            f'font-family="monospace" font-size="14">{title}</text>'
        )

    # axes
    x0, y0 = px(x_lo), py(y_lo)
    x1, y1 = px(x_hi), py(y_hi)
    parts.append(f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{x1:.1f}" y2="{y0:.1f}" stroke="black"/>')
    parts.append(f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{x0:.1f}" y2="{y1:.1f}" stroke="black"/>')
    for tx in _ticks(x_lo, x_hi):
        parts.append(
            f'<text x="{px(tx):.1f}" y="{y0 + 18:.1f}" text-anchor="middle" '
            f'font-family="monospace" font-size="11">{_fmt(tx)}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        parts.append(
            f'<text x="{x0 - 6:.1f}" y="{py(ty) + 4:.1f}" text-anchor="end" '
            f'font-family="monospace" font-size="11">{_fmt(ty)}</text>'
        )
    parts.append(
        f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-family="monospace" font-size="12">{x_column}</text>'
    )

    for j, name in enumerate(y_columns):
        color = PALETTE[j % len(PALETTE)]
        points = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, cols[name]))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        parts.append(
            f'<text x="{WIDTH - MARGIN_RIGHT - 150}" y="{MARGIN_TOP + 16 * j:.1f}" '
            f'font-family="monospace" font-size="12" fill="{color}">{name}</text>'
        )

    parts.append("</svg>\n")
    with open(out_path, "w") as fh:
        fh.write("\n".join(parts))
    return out_path
