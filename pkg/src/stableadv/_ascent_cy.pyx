# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled gradient-ascent kernel; mirrors ``_ascent_py.ascend_batch``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log1p, tanh

cnp.import_array()

KERNEL_NAME = "cython"


cdef inline double _loss(int code, double z, double y) nogil:
    cdef double sp
    if code == 0:
        return (y - z) * (y - z)
    if code == 1:
        return fabs(y - z)
    sp = log1p(exp(-fabs(z)))
    if z > 0.0:
        sp += z
    return sp - y * z


cdef inline double _dloss_dz(int code, double z, double y) nogil:
    cdef double r
    if code == 0:
        return -2.0 * (y - z)
    if code == 1:
        r = y - z
        if r > 0.0:
            return -1.0
        if r < 0.0:
            return 1.0
        return 0.0
    return 0.5 * (1.0 + tanh(0.5 * z)) - y


def ascend_batch(cnp.ndarray[cnp.float64_t, ndim=2] X,
                 cnp.ndarray[cnp.float64_t, ndim=1] y,
                 cnp.ndarray[cnp.float64_t, ndim=1] theta,
                 double intercept,
                 cnp.ndarray[cnp.float64_t, ndim=1] w,
                 int loss_code, double lam, double eps_x, int steps,
                 double scale_cap):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t m = X.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] XA = X.copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=2] presum = np.zeros((n, m), dtype=np.float64)
    if steps == 0:
        return XA, presum, 0

    cdef cnp.ndarray[cnp.float64_t, ndim=1] w2 = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] damp = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cand = np.empty(m, dtype=np.float64)
    cdef Py_ssize_t i, j, t
    cdef double z, obj, dl, cz, pen, cand_obj, d
    cdef int status = 0

    for j in range(m):
        w2[j] = w[j] * w[j]
        damp[j] = 1.0 / (1.0 + 2.0 * eps_x * lam * w2[j])

    for i in range(n):
        z = intercept
        for j in range(m):
            z += XA[i, j] * theta[j]
        obj = _loss(loss_code, z, y[i])
        for t in range(steps):
            for j in range(m):
                presum[i, j] += XA[i, j] - X[i, j]
            dl = _dloss_dz(loss_code, z, y[i])
            cz = intercept
            pen = 0.0
            for j in range(m):
                cand[j] = X[i, j] + (XA[i, j] + eps_x * dl * theta[j] - X[i, j]) * damp[j]
                d = cand[j] - X[i, j]
                cz += cand[j] * theta[j]
                pen += w2[j] * d * d
            cand_obj = _loss(loss_code, cz, y[i]) - lam * pen
            if cand_obj != cand_obj or cand_obj == float("inf") or cand_obj == float("-inf"):
                return XA, presum, 1
            if cand_obj >= obj:
                for j in range(m):
                    XA[i, j] = cand[j]
                obj = cand_obj
                z = cz
            for j in range(m):
                if fabs(XA[i, j] - X[i, j]) > scale_cap:
                    return XA, presum, 2
    return XA, presum, 0
