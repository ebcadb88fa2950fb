"""Pure-NumPy rasterization kernels.

Fallback for the compiled extension; both backends implement the same
pixel-center coverage rule with the same double-precision expressions so
their outputs are identical. A pixel belongs to a shape iff its center
(integer coordinates) satisfies the shape inequality, boundary included.
"""
from __future__ import annotations

import math

import numpy as np

BACKEND = "numpy"


def fill_ellipse(labels, cx, cy, phi, a, b, value):
    """Paint ellipse interior into ``labels`` (uint8, in place)."""
    h, w = labels.shape
    r = max(a, b)
    x0 = max(0, int(math.ceil(cx - r)))
    x1 = min(w - 1, int(math.floor(cx + r)))
    y0 = max(0, int(math.ceil(cy - r)))
    y1 = min(h - 1, int(math.floor(cy + r)))
    if x0 > x1 or y0 > y1:
        return
    c, s = math.cos(phi), math.sin(phi)
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    dx = xs - cx
    dy = ys - cy
    u = dx * c + dy * s
    v = -dx * s + dy * c
    inside = u * u / (a * a) + v * v / (b * b) <= 1.0
    labels[y0 : y1 + 1, x0 : x1 + 1][inside] = value


def fill_convex_poly(labels, xs, ys, value):
    """Paint a convex polygon into ``labels`` (uint8, in place).

    Winding is normalized internally; a pixel center on an edge counts as
    inside.
    """
    n = len(xs)
    if n < 3:
        return
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    area2 = 0.0
    for i in range(n):
        j = (i + 1) % n
        area2 += xs[i] * ys[j] - xs[j] * ys[i]
    if area2 < 0.0:
        xs = xs[::-1].copy()
        ys = ys[::-1].copy()

    h, w = labels.shape
    x0 = max(0, int(math.ceil(xs.min())))
    x1 = min(w - 1, int(math.floor(xs.max())))
    y0 = max(0, int(math.ceil(ys.min())))
    y1 = min(h - 1, int(math.floor(ys.max())))
    if x0 > x1 or y0 > y1:
        return
    py, px = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    inside = np.ones(px.shape, dtype=bool)
    for i in range(n):
        j = (i + 1) % n
        ex = xs[j] - xs[i]
        ey = ys[j] - ys[i]
        cross = ex * (py - ys[i]) - ey * (px - xs[i])
        inside &= cross >= 0.0
    labels[y0 : y1 + 1, x0 : x1 + 1][inside] = value
