"""Byte-stable SVG snapshots of a curve frame."""
from __future__ import annotations

import numpy as np

WIDTH, HEIGHT, MARGIN = 800, 600, 20


def _runs(mask: np.ndarray) -> list[np.ndarray]:
    """Contiguous (cyclic) runs of True nodes."""
    n = mask.size
    if not mask.any():
        return []
    if mask.all():
        return [np.arange(n)]
    start = int(np.flatnonzero(~mask)[0])
    order = (start + np.arange(n)) % n
    runs, cur = [], []
    for i in order:
        if mask[i]:
            cur.append(i)
        elif cur:
            runs.append(np.array(cur))
            cur = []
    if cur:
        runs.append(np.array(cur))
    return runs


def render_svg(points: np.ndarray, mask: np.ndarray | None = None, title: str = "") -> str:
    """800x600 drawing: closed polyline, y = 0 axis, cut-mask arcs in red and
    the overlap between each arc and the axis shaded."""
    pts = np.asarray(points, float)
    mask = np.zeros(len(pts), dtype=bool) if mask is None else np.asarray(mask, bool)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    scale = min((WIDTH - 2 * MARGIN) / span[0], (HEIGHT - 2 * MARGIN) / span[1])
    off = np.array([(WIDTH - scale * span[0]) / 2, (HEIGHT - scale * span[1]) / 2])

    def tr(p):
        q = np.atleast_2d(p)
        return np.column_stack([off[0] + scale * (q[:, 0] - lo[0]), HEIGHT - off[1] - scale * (q[:, 1] - lo[1])])

    def fmt(q):
        return " ".join(f"{x:.3f},{y:.3f}" for x, y in q)

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        lines.append(f'<title>{title}</title>')
    axis = tr(np.array([[lo[0], 0.0], [hi[0], 0.0]]))
    lines.append(f'<line x1="{axis[0, 0]:.3f}" y1="{axis[0, 1]:.3f}" x2="{axis[1, 0]:.3f}" y2="{axis[1, 1]:.3f}" '
                 'stroke="#999999" stroke-width="0.5" stroke-dasharray="4 3"/>')
    lines.append(f'<polygon class="curve" points="{fmt(tr(pts))}" fill="#dbe9f6" stroke="#1f4e79" stroke-width="1"/>')
    for run in _runs(mask):
        seg = pts[run]
        shade = np.vstack([seg, [[seg[-1, 0], 0.0], [seg[0, 0], 0.0]]])
        lines.append(f'<polygon class="overlap" points="{fmt(tr(shade))}" fill="#f4a582" fill-opacity="0.6" stroke="none"/>')
        lines.append(f'<polyline class="mask" points="{fmt(tr(seg))}" fill="none" stroke="#d6604d" stroke-width="2"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
