# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled frame kernels. Same stage order and per-pixel arithmetic as the
numpy fallback; only the summation order of global means differs."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

cdef double CONTRAST_SCALE = 0.5
cdef double SHARPNESS_SCALE = 0.25


cdef inline double _clip(double v) nogil:
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


cdef inline Py_ssize_t _cl(Py_ssize_t i, Py_ssize_t n) nogil:
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


cdef double _mean_luminance(double[:, :, ::1] p) nogil:
    cdef Py_ssize_t h = p.shape[0], w = p.shape[1], y, x
    cdef double acc = 0.0
    for y in range(h):
        for x in range(w):
            acc += (p[y, x, 0] + p[y, x, 1] + p[y, x, 2]) / 3.0
    return acc / (h * w)


def capture(latent, int brightness, int contrast, int color, int sharpness):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] arr = np.array(latent, dtype=np.float64, order="C", copy=True)
    cdef double[:, :, ::1] p = arr
    cdef Py_ssize_t h = p.shape[0], w = p.shape[1], y, x, k, dy, dx
    cdef double f, mu, g, acc
    cdef double[:, :, ::1] src

    f = brightness / 50.0
    if f != 1.0:
        for y in range(h):
            for x in range(w):
                for k in range(3):
                    p[y, x, k] = _clip(f * p[y, x, k])
    f = contrast / 50.0
    if f != 1.0:
        mu = _mean_luminance(p)
        for y in range(h):
            for x in range(w):
                for k in range(3):
                    p[y, x, k] = _clip(mu + f * (p[y, x, k] - mu))
    f = color / 50.0
    if f != 1.0:
        for y in range(h):
            for x in range(w):
                g = (p[y, x, 0] + p[y, x, 1] + p[y, x, 2]) / 3.0
                for k in range(3):
                    p[y, x, k] = _clip(g + f * (p[y, x, k] - g))
    f = sharpness / 50.0
    if f != 1.0:
        src = arr.copy()
        for y in range(h):
            for x in range(w):
                for k in range(3):
                    acc = 0.0
                    for dy in range(-1, 2):
                        for dx in range(-1, 2):
                            acc += src[_cl(y + dy, h), _cl(x + dx, w), k]
                    acc = acc / 9.0
                    p[y, x, k] = _clip(acc + f * (src[y, x, k] - acc))
    return arr


def measure(frame):
    cdef const double[:, :, ::1] p = np.ascontiguousarray(frame, dtype=np.float64)
    cdef Py_ssize_t h = p.shape[0], w = p.shape[1], y, x, k, n = h * w
    cdef double[:, ::1] lum = np.empty((h, w), dtype=np.float64)
    cdef double acc = 0.0, mean, var = 0.0, sat = 0.0, lap = 0.0, d, hi, lo, l
    for y in range(h):
        for x in range(w):
            l = (p[y, x, 0] + p[y, x, 1] + p[y, x, 2]) / 3.0
            lum[y, x] = l
            acc += l
            hi = p[y, x, 0]
            lo = p[y, x, 0]
            for k in range(1, 3):
                if p[y, x, k] > hi:
                    hi = p[y, x, k]
                if p[y, x, k] < lo:
                    lo = p[y, x, k]
            sat += hi - lo
    mean = acc / n
    for y in range(h):
        for x in range(w):
            d = lum[y, x] - mean
            var += d * d
            lap += fabs(lum[_cl(y - 1, h), x] + lum[_cl(y + 1, h), x]
                        + lum[y, _cl(x - 1, w)] + lum[y, _cl(x + 1, w)] - 4.0 * lum[y, x])
    return (
        mean,
        min(sqrt(var / n) / CONTRAST_SCALE, 1.0),
        sat / n,
        min((lap / n) / SHARPNESS_SCALE, 1.0),
    )
