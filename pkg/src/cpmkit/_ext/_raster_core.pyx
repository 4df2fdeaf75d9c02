# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pixel kernels.

Each function has a numpy twin in :mod:`cpmkit._ext._raster_py` with
bit-identical output.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def box_blur(const cnp.uint8_t[:, ::1] src, int radius):
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t x, y, k, xx, yy
    cdef long long s
    cdef long long n = (2 * radius + 1) * (2 * radius + 1)
    cdef cnp.int64_t[:, ::1] rows = np.empty((h, w), dtype=np.int64)
    out = np.empty((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] dst = out

    for y in range(h):
        for x in range(w):
            s = 0
            for k in range(-radius, radius + 1):
                xx = x + k
                if xx < 0:
                    xx = 0
                elif xx >= w:
                    xx = w - 1
                s += src[y, xx]
            rows[y, x] = s

    for y in range(h):
        for x in range(w):
            s = 0
            for k in range(-radius, radius + 1):
                yy = y + k
                if yy < 0:
                    yy = 0
                elif yy >= h:
                    yy = h - 1
                s += rows[yy, x]
            dst[y, x] = <cnp.uint8_t>((2 * s + n) // (2 * n))
    return out


def laplacian_sums(const cnp.uint8_t[:, ::1] src):
    """Return (sum, sum of squares, count) of the 4-neighbour Laplacian over interior pixels."""
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t x, y
    cdef long long lap
    cdef long long s = 0
    cdef long long q = 0
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            lap = (4 * <long long>src[y, x] - src[y, x - 1] - src[y, x + 1]
                   - src[y - 1, x] - src[y + 1, x])
            s += lap
            q += lap * lap
    return s, q, (h - 2) * (w - 2)


def warp_nearest(const cnp.uint8_t[:, ::1] src, Py_ssize_t out_h, Py_ssize_t out_w,
                 double a, double b, double c, double d, double e, double f):
    """Sample ``src`` at the inverse-mapped centre of every output pixel.

    The inverse map is ``x = a*u + b*v + c``, ``y = d*u + e*v + f`` in
    normalized coordinates.
    """
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t i, j
    cdef long long col, row
    cdef double u, v, x, y
    out = np.zeros((out_h, out_w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] dst = out
    for j in range(out_h):
        v = (j + 0.5) / out_h
        for i in range(out_w):
            u = (i + 0.5) / out_w
            x = a * u + b * v + c
            y = d * u + e * v + f
            col = <long long>floor(x * w)
            row = <long long>floor(y * h)
            if 0 <= col < w and 0 <= row < h:
                dst[j, i] = src[row, col]
    return out
