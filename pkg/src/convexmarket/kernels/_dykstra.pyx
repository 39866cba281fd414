# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Dykstra sweep over a box and a family of sparse slabs."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def dykstra_box_slabs(
    const double[::1] y,
    const double[::1] lo,
    const double[::1] hi,
    const long[::1] indptr,
    const long[::1] indices,
    const double[::1] data,
    const double[::1] slo,
    const double[::1] shi,
    long max_sweeps,
    double tol,
):
    cdef Py_ssize_t K = y.shape[0]
    cdef Py_ssize_t m = slo.shape[0]
    cdef Py_ssize_t i, j, p
    cdef long sweep = 0
    cdef double s, theta, nrm, z, xi, move
    cdef bint converged = False

    x_arr = np.array(y, dtype=np.float64)
    box_arr = np.zeros(K, dtype=np.float64)
    inc_arr = np.zeros(m, dtype=np.float64)
    norms_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double[::1] box = box_arr
    cdef double[::1] inc = inc_arr
    cdef double[::1] norms = norms_arr

    for j in range(m):
        nrm = 0.0
        for p in range(indptr[j], indptr[j + 1]):
            nrm += data[p] * data[p]
        norms[j] = nrm

    while sweep < max_sweeps:
        sweep += 1
        # largest single-projection step this sweep; x can return to the same
        # point while the correction terms are still changing
        move = 0.0
        for i in range(K):
            z = x[i] + box[i]
            xi = z
            if xi < lo[i]:
                xi = lo[i]
            elif xi > hi[i]:
                xi = hi[i]
            box[i] = z - xi
            if fabs(xi - x[i]) > move:
                move = fabs(xi - x[i])
            x[i] = xi
        for j in range(m):
            if norms[j] == 0.0:
                continue
            s = 0.0
            for p in range(indptr[j], indptr[j + 1]):
                s += data[p] * x[indices[p]]
            s += inc[j] * norms[j]
            if s > shi[j]:
                theta = (s - shi[j]) / norms[j]
            elif s < slo[j]:
                theta = (s - slo[j]) / norms[j]
            else:
                theta = 0.0
            if theta != inc[j]:
                for p in range(indptr[j], indptr[j + 1]):
                    x[indices[p]] += (inc[j] - theta) * data[p]
                    if fabs((inc[j] - theta) * data[p]) > move:
                        move = fabs((inc[j] - theta) * data[p])
            inc[j] = theta
        if move < tol:
            converged = True
            break

    return x_arr, sweep, converged
