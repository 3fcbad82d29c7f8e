"""Deterministic SVG rendering of clouds, residuals and loop coverings.

All output is plain hand-assembled SVG with fixed viewports and fixed
decimal formatting, so identical inputs give byte-identical documents
(golden-file friendly, no plotting library in the dependency chain).
"""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 800.0, 600.0
PAD = 50.0


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _svg_open(width=WIDTH, height=HEIGHT) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(width)}" height="{int(height)}" '
        f'viewBox="0 0 {int(width)} {int(height)}">',
        f'<rect x="0" y="0" width="{int(width)}" height="{int(height)}" fill="white"/>',
    ]


class _Frame:
    """Affine data-to-pixel transform with padded bounds."""

    def __init__(self, xs, ys):
        x0, x1 = float(np.min(xs)), float(np.max(xs))
        y0, y1 = float(np.min(ys)), float(np.max(ys))
        dx = (x1 - x0) or 1.0
        dy = (y1 - y0) or 1.0
        self.x0, self.y0 = x0 - 0.05 * dx, y0 - 0.05 * dy
        self.sx = (WIDTH - 2 * PAD) / (1.1 * dx)
        self.sy = (HEIGHT - 2 * PAD) / (1.1 * dy)

    def __call__(self, x, y):
        px = PAD + (x - self.x0) * self.sx
        py = HEIGHT - PAD - (y - self.y0) * self.sy
        return px, py


def plot_spectrum(cloud, hchart=None) -> str:
    """Cloud of eigenvalues, optionally with fitted lattice lines.

    Grid lines are level sets of the fitted integer coordinates, one per
    integer value in the label range of each component.
    """
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    mu = cloud.points
    frame = _Frame(mu.real, mu.imag)
    parts = _svg_open()

    if hchart is not None:
        eps = hchart.epsilon
        h = hchart.h
        lo = hchart.labels.min(axis=0)
        hi = hchart.labels.max(axis=0)
        for axis in (0, 1):
            other = 1 - axis
            for k in range(int(lo[axis]), int(hi[axis]) + 1):
                ts = np.linspace(lo[other], hi[other], 24)
                kk = np.empty((len(ts), 2))
                kk[:, axis] = k
                kk[:, other] = ts
                us = hchart.f_inverse(h * kk)
                pts = [frame(u[0], eps * u[1]) for u in us]
                d = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in pts)
                parts.append(f'<polyline points="{d}" fill="none" stroke="#bbccee" stroke-width="0.6"/>')

    for z in mu:
        px, py = frame(z.real, z.imag)
        parts.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="2.0" fill="#203060"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot_residuals(hchart, bins: int = 20) -> str:
    """Histogram of per-point residuals in units of h."""
    res = np.asarray(hchart.residuals, dtype=float)
    top = max(float(res.max()), 1e-12)
    counts, edges = np.histogram(res, bins=bins, range=(0.0, top))
    parts = _svg_open()
    cmax = max(int(counts.max()), 1)
    bw = (WIDTH - 2 * PAD) / bins
    for i, c in enumerate(counts):
        bh = (HEIGHT - 2 * PAD) * c / cmax
        x = PAD + i * bw
        y = HEIGHT - PAD - bh
        parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(bw * 0.9)}" height="{_fmt(bh)}" fill="#406090"/>'
        )
    parts.append(
        f'<text x="{_fmt(PAD)}" y="{_fmt(PAD - 15)}" font-size="14">'
        f"residuals / h, max = {float(res.max()):.3e}</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot_loop(vertices, centers=None, singular_points=None) -> str:
    """Loop polygon in the value plane with chart centers and marked
    singular values."""
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    all_x = [vertices[:, 0]]
    all_y = [vertices[:, 1]]
    if centers is not None:
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        all_x.append(centers[:, 0])
        all_y.append(centers[:, 1])
    if singular_points is not None and len(singular_points):
        sp = np.atleast_2d(np.asarray(singular_points, dtype=float))
        all_x.append(sp[:, 0])
        all_y.append(sp[:, 1])
    frame = _Frame(np.concatenate(all_x), np.concatenate(all_y))
    parts = _svg_open()
    ring = np.vstack([vertices, vertices[:1]])
    d = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in (frame(v[0], v[1]) for v in ring))
    parts.append(f'<polyline points="{d}" fill="none" stroke="#808080" stroke-width="1.0"/>')
    if centers is not None:
        for c in centers:
            px, py = frame(c[0], c[1])
            parts.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="2.5" fill="#2060a0"/>')
    if singular_points is not None and len(singular_points):
        for s in np.atleast_2d(np.asarray(singular_points, dtype=float)):
            px, py = frame(s[0], s[1])
            parts.append(
                f'<rect x="{_fmt(px - 4)}" y="{_fmt(py - 4)}" width="8.000" height="8.000" fill="#c03030"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
