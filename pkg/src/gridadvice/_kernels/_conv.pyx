# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel implementations: direct same-padded 2-D correlation
(forward and backward) and Chebyshev-disc neighbor counting.

Contracts match ``_numpy.py`` exactly; the test suite asserts equivalence.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, double[::1] b):
    cdef Py_ssize_t n = x.shape[0], ci = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    out_arr = np.empty((n, co, h, wd), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t s, o, i, j, c, u, v, ii, jj
    cdef double acc
    for s in range(n):
        for o in range(co):
            for i in range(h):
                for j in range(wd):
                    acc = b[o]
                    for c in range(ci):
                        for u in range(kh):
                            ii = i + u - ph
                            if ii < 0 or ii >= h:
                                continue
                            for v in range(kw):
                                jj = j + v - pw
                                if 0 <= jj < wd:
                                    acc += x[s, c, ii, jj] * w[o, c, u, v]
                    out[s, o, i, j] = acc
    return out_arr


def conv2d_backward(double[:, :, :, ::1] x, double[:, :, :, ::1] w,
                    double[:, :, :, ::1] dy):
    cdef Py_ssize_t n = x.shape[0], ci = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    dx_arr = np.zeros((n, ci, h, wd), dtype=np.float64)
    dw_arr = np.zeros((co, ci, kh, kw), dtype=np.float64)
    db_arr = np.zeros(co, dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t s, o, i, j, c, u, v, ii, jj
    cdef double g
    for s in range(n):
        for o in range(co):
            for i in range(h):
                for j in range(wd):
                    g = dy[s, o, i, j]
                    db[o] += g
                    for c in range(ci):
                        for u in range(kh):
                            ii = i + u - ph
                            if ii < 0 or ii >= h:
                                continue
                            for v in range(kw):
                                jj = j + v - pw
                                if 0 <= jj < wd:
                                    dw[o, c, u, v] += g * x[s, c, ii, jj]
                                    dx[s, c, ii, jj] += g * w[o, c, u, v]
    return dx_arr, dw_arr, db_arr


def count_disc_neighbors(cnp.uint8_t[:, ::1] mask, Py_ssize_t radius):
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    out_arr = np.zeros((h, w), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, u, v, lo_u, hi_u, lo_v, hi_v
    cdef long long acc
    for i in range(h):
        lo_u = i - radius if i - radius > 0 else 0
        hi_u = i + radius + 1 if i + radius + 1 < h else h
        for j in range(w):
            lo_v = j - radius if j - radius > 0 else 0
            hi_v = j + radius + 1 if j + radius + 1 < w else w
            acc = 0
            for u in range(lo_u, hi_u):
                for v in range(lo_v, hi_v):
                    acc += mask[u, v]
            out[i, j] = acc - mask[i, j]
    return out_arr
