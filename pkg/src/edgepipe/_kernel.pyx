# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loop: sequential SGD updates with per-update loss tracing.

Mirrors `edgepipe._kernel_py.sgd_trace`; see that module for the contract.
"""

import numpy as np

cimport numpy as cnp

BACKEND = "cython"


def sgd_trace(double[::1] w,
              double[:, ::1] X,
              double[::1] y,
              cnp.int64_t[::1] idx,
              double alpha,
              double reg2,
              double[:, ::1] A,
              double[::1] h,
              double c0,
              double lam_n,
              double[::1] losses):
    cdef Py_ssize_t n_upd = idx.shape[0]
    cdef Py_ssize_t d = w.shape[0]
    cdef Py_ssize_t j, k, m
    cdef cnp.int64_t i
    cdef double r, two_alpha_r, acc, quad, lin, sq
    cdef double decay = 1.0 - alpha * reg2
    cdef double two_alpha = 2.0 * alpha

    with nogil:
        for j in range(n_upd):
            i = idx[j]
            r = 0.0
            for k in range(d):
                r += w[k] * X[i, k]
            r -= y[i]
            two_alpha_r = two_alpha * r
            for k in range(d):
                w[k] = w[k] * decay - two_alpha_r * X[i, k]
            quad = 0.0
            lin = 0.0
            sq = 0.0
            for k in range(d):
                acc = 0.0
                for m in range(d):
                    acc += A[k, m] * w[m]
                quad += w[k] * acc
                lin += h[k] * w[k]
                sq += w[k] * w[k]
            losses[j] = quad - 2.0 * lin + c0 + lam_n * sq
