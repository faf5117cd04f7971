"""Dependency-free heatmap emission: hand-written SVG plus a CSV twin.

Both artifacts are rendered from the same matrix; each SVG cell carries
the full-precision value in a data-value attribute so the two files can
be checked for equality.  Matrix rows follow the grid convention used
everywhere (row index = y index); the SVG draws y increasing upward.
"""

from __future__ import annotations

import csv
import math

import numpy as np

CELL_PX = 56
MARGIN_LEFT = 72
MARGIN_BOTTOM = 40
MARGIN_TOP = 34
MARGIN_RIGHT = 16


def _shade(value: float, lo: float, hi: float, darker_high: bool) -> tuple[str, int]:
    """(fill color, gray level) for a value; darker = more when darker_high."""
    if math.isnan(value):
        return "#f0f0f0", 240
    t = 0.5 if hi <= lo else (value - lo) / (hi - lo)
    if not darker_high:
        t = 1.0 - t
    level = int(round(235 - 185 * t))
    return f"#{level:02x}{level:02x}{level:02x}", level


def render_heatmap_svg(
    matrix: np.ndarray,
    x_values,
    y_values,
    title: str = "",
    x_label: str = "x",
    y_label: str = "y",
    darker_high: bool = True,
    train_border: tuple[range, range] | None = None,
    label_fmt: str = "{:.4g}",
) -> str:
    """SVG heatmap with per-cell numeric labels.

    `train_border`, when given, is an (x_index_range, y_index_range) pair;
    a red border is drawn around that cell block (the training region).
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    rows, cols = matrix.shape
    if rows != len(y_values) or cols != len(x_values):
        raise ValueError("matrix shape does not match axis values")

    finite = matrix[np.isfinite(matrix)]
    lo = float(np.min(finite)) if finite.size else 0.0
    hi = float(np.max(finite)) if finite.size else 1.0

    width = MARGIN_LEFT + cols * CELL_PX + MARGIN_RIGHT
    height = MARGIN_TOP + rows * CELL_PX + MARGIN_BOTTOM
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]

    def cell_origin(xi: int, yi: int) -> tuple[float, float]:
        # y grows upward: row 0 is drawn at the bottom
        return (
            MARGIN_LEFT + xi * CELL_PX,
            MARGIN_TOP + (rows - 1 - yi) * CELL_PX,
        )

    for yi in range(rows):
        for xi in range(cols):
            value = matrix[yi, xi]
            px, py = cell_origin(xi, yi)
            fill, level = _shade(value, lo, hi, darker_high)
            parts.append(
                f'<rect x="{px}" y="{py}" width="{CELL_PX}" height="{CELL_PX}" '
                f'fill="{fill}" stroke="#888" stroke-width="0.5" '
                f'data-value="{"" if math.isnan(value) else repr(float(value))}"/>'
            )
            if not math.isnan(value):
                parts.append(
                    f'<text x="{px + CELL_PX / 2:.1f}" y="{py + CELL_PX / 2 + 4:.1f}" '
                    f'text-anchor="middle" font-size="11" '
                    f'fill="{"#ffffff" if level < 128 else "#000000"}">'
                    f"{label_fmt.format(value)}</text>"
                )

    if train_border is not None:
        x_range, y_range = train_border
        x0, _ = cell_origin(x_range.start, y_range.start)
        bx = x0
        by = MARGIN_TOP + (rows - y_range.stop) * CELL_PX
        bw = (x_range.stop - x_range.start) * CELL_PX
        bh = (y_range.stop - y_range.start) * CELL_PX
        parts.append(
            f'<rect x="{bx}" y="{by}" width="{bw}" height="{bh}" '
            f'fill="none" stroke="#cc0000" stroke-width="2.5"/>'
        )

    for xi, xv in enumerate(x_values):
        px = MARGIN_LEFT + xi * CELL_PX + CELL_PX / 2
        parts.append(
            f'<text x="{px:.1f}" y="{height - MARGIN_BOTTOM + 16}" text-anchor="middle" '
            f'font-size="11">{xv:g}</text>'
        )
    for yi, yv in enumerate(y_values):
        py = MARGIN_TOP + (rows - 1 - yi) * CELL_PX + CELL_PX / 2 + 4
        parts.append(
            f'<text x="{MARGIN_LEFT - 8}" y="{py:.1f}" text-anchor="end" font-size="11">{yv:g}</text>'
        )
    parts.append(
        f'<text x="{MARGIN_LEFT + cols * CELL_PX / 2:.1f}" y="{height - 6}" '
        f'text-anchor="middle" font-size="12">{x_label}</text>'
    )
    parts.append(
        f'<text x="14" y="{MARGIN_TOP + rows * CELL_PX / 2:.1f}" text-anchor="middle" '
        f'font-size="12" transform="rotate(-90 14 {MARGIN_TOP + rows * CELL_PX / 2:.1f})">'
        f"{y_label}</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts)


def write_matrix_csv(path, matrix: np.ndarray, x_values, y_values) -> None:
    """CSV twin of the heatmap: header row of x values, one row per y."""
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["y\\x"] + [repr(float(x)) for x in x_values])
        for yi, yv in enumerate(y_values):
            w.writerow(
                [repr(float(yv))]
                + ["" if math.isnan(matrix[yi, xi]) else repr(float(matrix[yi, xi]))
                   for xi in range(len(x_values))]
            )


def read_matrix_csv(path) -> tuple[np.ndarray, list[float], list[float]]:
    """Inverse of write_matrix_csv."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        x_values = [float(v) for v in header[1:]]
        y_values = []
        rows = []
        for rec in reader:
            y_values.append(float(rec[0]))
            rows.append([float(v) if v else math.nan for v in rec[1:]])
    return np.array(rows), x_values, y_values


def svg_cell_values(svg_text: str) -> list[float]:
    """Extract the data-value payloads of an SVG heatmap, in cell order."""
    values = []
    for chunk in svg_text.split('data-value="')[1:]:
        raw = chunk.split('"', 1)[0]
        if raw:
            values.append(float(raw))
        else:
            values.append(math.nan)
    return values
