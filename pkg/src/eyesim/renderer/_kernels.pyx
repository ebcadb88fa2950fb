# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled rasterization kernels.

Must stay arithmetically identical to ``_kernels_py`` (same coverage rule,
same double-precision expressions); the build disables FP contraction so
both backends produce bitwise-equal rasters.
"""
from libc.math cimport ceil, floor, cos, sin

import numpy as np

BACKEND = "cython"


def fill_ellipse(unsigned char[:, ::1] labels, double cx, double cy,
                 double phi, double a, double b, int value):
    cdef Py_ssize_t h = labels.shape[0]
    cdef Py_ssize_t w = labels.shape[1]
    cdef double r = a if a > b else b
    cdef Py_ssize_t x0 = <Py_ssize_t>ceil(cx - r)
    cdef Py_ssize_t x1 = <Py_ssize_t>floor(cx + r)
    cdef Py_ssize_t y0 = <Py_ssize_t>ceil(cy - r)
    cdef Py_ssize_t y1 = <Py_ssize_t>floor(cy + r)
    if x0 < 0: x0 = 0
    if y0 < 0: y0 = 0
    if x1 > w - 1: x1 = w - 1
    if y1 > h - 1: y1 = h - 1
    if x0 > x1 or y0 > y1:
        return
    cdef double c = cos(phi)
    cdef double s = sin(phi)
    cdef double aa = a * a
    cdef double bb = b * b
    cdef Py_ssize_t x, y
    cdef double dx, dy, u, v
    cdef unsigned char val = <unsigned char>value
    for y in range(y0, y1 + 1):
        dy = y - cy
        for x in range(x0, x1 + 1):
            dx = x - cx
            u = dx * c + dy * s
            v = -dx * s + dy * c
            if u * u / aa + v * v / bb <= 1.0:
                labels[y, x] = val


def fill_convex_poly(unsigned char[:, ::1] labels, xs_in, ys_in, int value):
    cdef Py_ssize_t n = len(xs_in)
    if n < 3:
        return
    xs_arr = np.ascontiguousarray(xs_in, dtype=np.float64)
    ys_arr = np.ascontiguousarray(ys_in, dtype=np.float64)
    cdef double area2 = 0.0
    cdef Py_ssize_t i, j
    cdef double[::1] xs = xs_arr
    cdef double[::1] ys = ys_arr
    for i in range(n):
        j = (i + 1) % n
        area2 += xs[i] * ys[j] - xs[j] * ys[i]
    if area2 < 0.0:
        xs_arr = xs_arr[::-1].copy()
        ys_arr = ys_arr[::-1].copy()
        xs = xs_arr
        ys = ys_arr

    cdef Py_ssize_t h = labels.shape[0]
    cdef Py_ssize_t w = labels.shape[1]
    cdef double xmin = xs[0], xmax = xs[0], ymin = ys[0], ymax = ys[0]
    for i in range(1, n):
        if xs[i] < xmin: xmin = xs[i]
        if xs[i] > xmax: xmax = xs[i]
        if ys[i] < ymin: ymin = ys[i]
        if ys[i] > ymax: ymax = ys[i]
    cdef Py_ssize_t x0 = <Py_ssize_t>ceil(xmin)
    cdef Py_ssize_t x1 = <Py_ssize_t>floor(xmax)
    cdef Py_ssize_t y0 = <Py_ssize_t>ceil(ymin)
    cdef Py_ssize_t y1 = <Py_ssize_t>floor(ymax)
    if x0 < 0: x0 = 0
    if y0 < 0: y0 = 0
    if x1 > w - 1: x1 = w - 1
    if y1 > h - 1: y1 = h - 1
    if x0 > x1 or y0 > y1:
        return
    cdef Py_ssize_t x, y
    cdef double ex, ey, cross
    cdef bint inside
    cdef unsigned char val = <unsigned char>value
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            inside = True
            for i in range(n):
                j = (i + 1) % n
                ex = xs[j] - xs[i]
                ey = ys[j] - ys[i]
                cross = ex * (y - ys[i]) - ey * (x - xs[i])
                if cross < 0.0:
                    inside = False
                    break
            if inside:
                labels[y, x] = val
