"""SVG grid maps: one rectangle per cell on an equirectangular layout."""
from __future__ import annotations

import csv
from typing import TextIO
from xml.sax.saxutils import escape

import numpy as np

from .errors import InputError, MissingField

CATEGORICAL = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
    "#8c6d31", "#843c39", "#7b4173", "#3182bd", "#e6550d", "#31a354",
)

# viridis control points
SEQUENTIAL = (
    (0.267, 0.005, 0.329), (0.283, 0.141, 0.458), (0.254, 0.265, 0.530),
    (0.207, 0.372, 0.553), (0.164, 0.471, 0.558), (0.128, 0.567, 0.551),
    (0.135, 0.659, 0.518), (0.267, 0.749, 0.441), (0.478, 0.821, 0.318),
    (0.741, 0.873, 0.150), (0.993, 0.906, 0.144),
)

CATEGORICAL_FIELDS = {"region_id", "true_region"}


def categorical_color(i: int) -> str:
    if i < len(CATEGORICAL):
        return CATEGORICAL[i]
    # golden-angle hues beyond the fixed palette
    h = (i * 137.508) % 360
    return _hsl_hex(h, 0.55, 0.5)


def _hsl_hex(h, s, l) -> str:
    c = (1 - abs(2 * l - 1)) * s
    x = c * (1 - abs((h / 60) % 2 - 1))
    m = l - c / 2
    r, g, b = [(c, x, 0), (x, c, 0), (0, c, x), (0, x, c), (x, 0, c), (c, 0, x)][int(h // 60) % 6]
    return "#%02x%02x%02x" % tuple(round((v + m) * 255) for v in (r, g, b))


def sequential_color(t: float) -> str:
    t = min(max(t, 0.0), 1.0) * (len(SEQUENTIAL) - 1)
    i = min(int(t), len(SEQUENTIAL) - 2)
    f = t - i
    rgb = [a + (b - a) * f for a, b in zip(SEQUENTIAL[i], SEQUENTIAL[i + 1])]
    return "#%02x%02x%02x" % tuple(round(v * 255) for v in rgb)


def read_field(fh: TextIO, field: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """``(lat, lon, raw values)`` for ``field``; repeated cells keep the
    last row (e.g. one year of a multi-year predictions file)."""
    reader = csv.DictReader(fh)
    header = reader.fieldnames or []
    for name in ("lat", "lon", field):
        if name not in header:
            raise MissingField(f"column {name!r} not found; header is {','.join(header)}")
    cells: dict[tuple[float, float], str] = {}
    for row in reader:
        try:
            key = (float(row["lat"]), float(row["lon"]))
        except (TypeError, ValueError):
            raise InputError(f"line {reader.line_num}: bad lat/lon") from None
        cells[key] = row[field]
    if not cells:
        raise InputError("no data rows")
    keys = sorted(cells)
    return (np.array([k[0] for k in keys]), np.array([k[1] for k in keys]),
            [cells[k] for k in keys])


def render_svg(lat, lon, values, field: str, resolution: float | None = None,
               cell_px: int = 24, title: str | None = None) -> str:
    """Render a grid map as an SVG 1.1 document.

    Categorical fields (region ids) get one palette colour per distinct
    value and a legend entry each; anything else is treated as continuous
    with a min/max colour bar.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if resolution is None:
        steps = np.concatenate([np.diff(np.unique(lat)), np.diff(np.unique(lon))])
        resolution = float(steps.min()) if steps.size else 2.5
    categorical = field in CATEGORICAL_FIELDS
    if categorical:
        try:
            cats = [int(float(v)) for v in values]
        except ValueError:
            raise InputError(f"field {field!r} must hold integer ids") from None
        levels = sorted(set(cats))
        fills = [categorical_color(levels.index(c)) for c in cats]
    else:
        try:
            nums = np.array([float(v) for v in values])
        except ValueError:
            raise InputError(f"field {field!r} must be numeric") from None
        if not np.all(np.isfinite(nums)):
            raise InputError(f"field {field!r} has non-finite values")
        lo, hi = float(nums.min()), float(nums.max())
        span = hi - lo
        fills = [sequential_color((v - lo) / span if span > 0 else 0.0) for v in nums]

    cols = np.rint((lon - lon.min()) / resolution).astype(int)
    rows = np.rint((lat.max() - lat) / resolution).astype(int)
    map_w = (cols.max() + 1) * cell_px
    map_h = (rows.max() + 1) * cell_px
    margin = 10
    legend_x = margin + map_w + 20
    legend_w = 170
    n_legend = len(levels) if categorical else 2
    title_h = 24
    width = legend_x + legend_w
    height = max(map_h, n_legend * 20 + 40) + 2 * margin + title_h
    title = title or field

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<title>{escape(title)}</title>',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{margin}" y="{margin + 14}" font-family="sans-serif" font-size="14">'
        f'{escape(title)}</text>',
        f'<g id="cells" transform="translate({margin},{margin + title_h})">',
    ]
    for la, lo_, r, c, fill, v in zip(lat, lon, rows, cols, fills, values):
        out.append(
            f'<rect class="cell" x="{c * cell_px}" y="{r * cell_px}" width="{cell_px}" '
            f'height="{cell_px}" fill="{fill}" stroke="#ffffff" stroke-width="0.5">'
            f'<title>{la:g}N {lo_:g}E: {escape(str(v))}</title></rect>'
        )
    out.append("</g>")
    out.append(f'<g id="legend" transform="translate({legend_x},{margin + title_h})">')
    if categorical:
        for i, level in enumerate(levels):
            y = i * 20
            out.append(
                f'<rect class="legend-entry" x="0" y="{y}" width="14" height="14" '
                f'fill="{categorical_color(i)}"/>'
                f'<text x="20" y="{y + 12}" font-family="sans-serif" font-size="12">'
                f'{escape(field)} {level}</text>'
            )
    else:
        out.append('<defs><linearGradient id="ramp" x1="0" y1="0" x2="1" y2="0">')
        for i in range(len(SEQUENTIAL)):
            t = i / (len(SEQUENTIAL) - 1)
            out.append(f'<stop offset="{t:g}" stop-color="{sequential_color(t)}"/>')
        out.append("</linearGradient></defs>")
        out.append('<rect x="0" y="0" width="150" height="14" fill="url(#ramp)"/>')
        out.append(f'<text class="legend-min" x="0" y="30" font-family="sans-serif" '
                   f'font-size="12">min {lo:.6g}</text>')
        out.append(f'<text class="legend-max" x="0" y="46" font-family="sans-serif" '
                   f'font-size="12">max {hi:.6g}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_csv(fh: TextIO, field: str, **kwargs) -> str:
    lat, lon, values = read_field(fh, field)
    return render_svg(lat, lon, values, field, **kwargs)

