# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Arithmetic order mirrors ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def hough_vote(const double[::1] xs, const double[::1] ys,
               const double[::1] ux, const double[::1] uy,
               int r_min, int r_max, int height, int width):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((height, width), dtype=np.float64)
    cdef double[:, ::1] acc = out
    cdef Py_ssize_t i, n = xs.shape[0]
    cdef int r, ix, iy
    cdef double rr, cx, cy
    for i in range(n):
        for r in range(r_min, r_max + 1):
            rr = <double>r
            cx = xs[i] + rr * ux[i]
            cy = ys[i] + rr * uy[i]
            ix = <int>floor(cx + 0.5)
            iy = <int>floor(cy + 0.5)
            if 0 <= ix < width and 0 <= iy < height:
                acc[iy, ix] += 1.0
    return out


def affine_bilinear(const double[:, ::1] src, int out_h, int out_w,
                    const double[:, ::1] m, bint clamp, double fill):
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] res = np.empty((out_h, out_w), dtype=np.float64)
    cdef double[:, ::1] out = res
    cdef Py_ssize_t i, j, x0, y0, x1, y1
    cdef double sx, sy, fx, fy, a, b, c, d
    cdef double xmax = <double>(w - 1), ymax = <double>(h - 1)
    cdef double m00 = m[0, 0], m01 = m[0, 1], m02 = m[0, 2]
    cdef double m10 = m[1, 0], m11 = m[1, 1], m12 = m[1, 2]
    for i in range(out_h):
        for j in range(out_w):
            sx = m00 * <double>j + m01 * <double>i + m02
            sy = m10 * <double>j + m11 * <double>i + m12
            if clamp:
                if sx < 0.0:
                    sx = 0.0
                elif sx > xmax:
                    sx = xmax
                if sy < 0.0:
                    sy = 0.0
                elif sy > ymax:
                    sy = ymax
            elif sx < 0.0 or sx > xmax or sy < 0.0 or sy > ymax:
                out[i, j] = fill
                continue
            x0 = <Py_ssize_t>floor(sx)
            y0 = <Py_ssize_t>floor(sy)
            if x0 > w - 2:
                x0 = w - 2 if w > 1 else 0
            if y0 > h - 2:
                y0 = h - 2 if h > 1 else 0
            x1 = x0 + 1 if w > 1 else 0
            y1 = y0 + 1 if h > 1 else 0
            fx = sx - <double>x0
            fy = sy - <double>y0
            a = src[y0, x0]
            b = src[y0, x1]
            c = src[y1, x0]
            d = src[y1, x1]
            out[i, j] = (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d)
    return res
