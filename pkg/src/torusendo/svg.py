"""Tiny SVG writer: points and line segments in a fixed viewport, nothing else."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

SIZE = 512
PAD = 16


def _transform(bounds):
    x0, x1, y0, y1 = bounds
    sx = (SIZE - 2 * PAD) / max(x1 - x0, 1e-300)
    sy = (SIZE - 2 * PAD) / max(y1 - y0, 1e-300)

    def tr(x, y):
        return PAD + (x - x0) * sx, SIZE - PAD - (y - y0) * sy  # y axis up

    return tr


def _frame(bounds, title, body):
    tr = _transform(bounds)
    (ax, ay), (bx, by) = tr(bounds[0], bounds[2]), tr(bounds[1], bounds[3])
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
            f'viewBox="0 0 {SIZE} {SIZE}">\n'
            f"<title>{escape(title)}</title>\n"
            f'<polyline points="{ax:.2f},{ay:.2f} {bx:.2f},{ay:.2f} {bx:.2f},{by:.2f} '
            f'{ax:.2f},{by:.2f} {ax:.2f},{ay:.2f}" fill="none" stroke="#888" stroke-width="1"/>\n'
            + body + "</svg>\n")


def points_svg(path, pts, bounds=(0.0, 1.0, 0.0, 1.0), title: str = "", radius: float = 1.2,
               max_points: int = 20000) -> None:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if len(pts) > max_points:  # deterministic thinning
        pts = pts[:: int(np.ceil(len(pts) / max_points))]
    tr = _transform(bounds)
    body = "".join(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{radius}" fill="#1f4e8c"/>\n'
                   for cx, cy in (tr(x, y) for x, y in pts))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_frame(bounds, title, body))


def segments_svg(path, segments, bounds=(0.0, 1.0, 0.0, 1.0), title: str = "") -> None:
    """``segments`` rows are ``x0, y0, x1, y1``."""
    tr = _transform(bounds)
    body = []
    for x0, y0, x1, y1 in np.asarray(segments, dtype=float).reshape(-1, 4):
        (a, b), (c, d) = tr(x0, y0), tr(x1, y1)
        body.append(f'<polyline points="{a:.2f},{b:.2f} {c:.2f},{d:.2f}" stroke="#8c1f1f" '
                    f'stroke-width="1.2" fill="none"/>\n')
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_frame(bounds, title, "".join(body)))
