# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops; semantics mirror :mod:`mixlab._fallback`."""
import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

NAME = "cython"
cdef double DIAGONAL_TOL = 1e-12
cdef double TINY = 1e-300


cdef inline Py_ssize_t _inverse_cdf(const double[:, ::1] cdf, Py_ssize_t row, double u) noexcept nogil:
    cdef Py_ssize_t j, A = cdf.shape[1]
    for j in range(A):
        if u < cdf[row, j]:
            return j
    return A - 1


cdef inline Py_ssize_t _pick(const double[:, ::1] p, const double[:, ::1] q, Py_ssize_t rp, Py_ssize_t rq,
                             int mode, double u) noexcept nogil:
    # mode 0: weights min(p, q); mode 1: p - min(p, q); mode 2: q - min(p, q)
    cdef Py_ssize_t j, A = p.shape[1], last = A - 1, found = -1
    cdef double w, m, total = 0.0, s = 0.0, target
    cdef bint seen = False
    for j in range(A):
        m = p[rp, j] if p[rp, j] < q[rq, j] else q[rq, j]
        if mode == 0:
            w = m
        elif mode == 1:
            w = p[rp, j] - m
        else:
            w = q[rq, j] - m
        total += w
    target = u * total
    for j in range(A):
        m = p[rp, j] if p[rp, j] < q[rq, j] else q[rq, j]
        if mode == 0:
            w = m
        elif mode == 1:
            w = p[rp, j] - m
        else:
            w = q[rq, j] - m
        s += w
        if w > 0:
            last = j
            seen = True
        if found < 0 and target < s:
            found = j
    if found >= 0:
        return found
    return last if seen else A - 1


def sample_paths(const double[:, ::1] cdf, Py_ssize_t ctx0, const double[:, ::1] unif):
    cdef Py_ssize_t R = unif.shape[0], n = unif.shape[1]
    cdef Py_ssize_t nctx = cdf.shape[0], A = cdf.shape[1]
    out_arr = np.empty((R, n), dtype=np.int8)
    cdef cnp.int8_t[:, ::1] out = out_arr
    cdef Py_ssize_t r, t, c, a
    with nogil:
        for r in range(R):
            c = ctx0
            for t in range(n):
                a = _inverse_cdf(cdf, c, unif[r, t])
                out[r, t] = <cnp.int8_t> a
                c = (c * A + a) % nctx
    return out_arr


def sample_coupled(const double[:, ::1] prob, const double[:, ::1] cdf, Py_ssize_t cu0, Py_ssize_t cv0,
                   cnp.int64_t agree0, cnp.int64_t cap, const double[:, :, ::1] unif):
    cdef Py_ssize_t R = unif.shape[0], n = unif.shape[1]
    cdef Py_ssize_t nctx = prob.shape[0], A = prob.shape[1]
    u_arr = np.empty((R, n), dtype=np.int8)
    v_arr = np.empty((R, n), dtype=np.int8)
    k_arr = np.empty((R, n), dtype=np.int64)
    cdef cnp.int8_t[:, ::1] uo = u_arr
    cdef cnp.int8_t[:, ::1] vo = v_arr
    cdef cnp.int64_t[:, ::1] ko = k_arr
    cdef Py_ssize_t r, t, j, cu, cv, a, b
    cdef cnp.int64_t T
    cdef double delta, m
    with nogil:
        for r in range(R):
            cu = cu0
            cv = cv0
            T = agree0 if agree0 < cap else cap
            for t in range(n):
                if cu == cv:
                    a = _inverse_cdf(cdf, cu, unif[r, t, 1])
                    b = a
                else:
                    delta = 0.0
                    for j in range(A):
                        m = prob[cu, j] if prob[cu, j] < prob[cv, j] else prob[cv, j]
                        delta += m
                    if delta >= 1.0 - DIAGONAL_TOL:
                        a = _inverse_cdf(cdf, cu, unif[r, t, 1])
                        b = a
                    elif unif[r, t, 0] < delta:
                        a = _pick(prob, prob, cu, cv, 0, unif[r, t, 1])
                        b = a
                    else:
                        a = _pick(prob, prob, cu, cv, 1, unif[r, t, 1])
                        b = _pick(prob, prob, cu, cv, 2, unif[r, t, 2])
                uo[r, t] = <cnp.int8_t> a
                vo[r, t] = <cnp.int8_t> b
                if a == b:
                    T = T + 1 if T < cap else cap
                else:
                    T = 0
                ko[r, t] = T
                cu = (cu * A + a) % nctx
                cv = (cv * A + b) % nctx
    return u_arr, v_arr, k_arr


def house_of_cards(const double[::1] gamma, Py_ssize_t n_max):
    out_arr = np.empty(n_max + 1)
    d_arr = np.zeros(n_max + 1)
    cdef double[::1] out = out_arr
    cdef double[::1] d = d_arr
    cdef Py_ssize_t t, j
    cdef double s, c, v, tmp
    with nogil:
        d[0] = 1.0
        out[0] = 1.0
        for t in range(1, n_max + 1):
            s = 0.0
            c = 0.0
            for j in range(t):
                v = d[j] * gamma[j]
                tmp = s + v
                if fabs(s) >= fabs(v):
                    c += (s - tmp) + v
                else:
                    c += (v - tmp) + s
                s = tmp
            for j in range(t - 1, -1, -1):
                v = d[j] * (1.0 - gamma[j])
                d[j + 1] = v if v >= TINY else 0.0
            d[0] = s + c
            out[t] = s + c
    return out_arr
