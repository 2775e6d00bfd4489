# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the grid-ReLU contraction and its gradients.

Loops are fused so neither the (N, J, G) basis tensor nor its activation
mask is ever materialized. The grid is assumed sorted ascending, so each
input activates a contiguous prefix of basis functions.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _active_count(double x, const double[::1] grid) noexcept nogil:
    # number of grid points strictly below x (basis value > 0)
    cdef Py_ssize_t m = 0
    cdef Py_ssize_t g = grid.shape[0]
    while m < g and x > grid[m]:
        m += 1
    return m


def kan_forward(const double[:, ::1] h, const double[:, :, ::1] coeffs,
                const double[::1] grid):
    cdef Py_ssize_t n_rows = h.shape[0]
    cdef Py_ssize_t n_out = coeffs.shape[0]
    cdef Py_ssize_t n_in = coeffs.shape[1]
    cdef Py_ssize_t n_grid = coeffs.shape[2]
    if h.shape[1] != n_in or grid.shape[0] != n_grid:
        raise ValueError("kan_forward: inconsistent kernel shapes")

    out_arr = np.zeros((n_rows, n_out), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    kmax_arr = np.empty((n_rows, n_in), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] kmax = kmax_arr

    cdef Py_ssize_t n, i, j, k, m
    cdef double x, acc

    with nogil:
        for n in range(n_rows):
            for j in range(n_in):
                kmax[n, j] = _active_count(h[n, j], grid)
        for n in range(n_rows):
            for i in range(n_out):
                acc = 0.0
                for j in range(n_in):
                    x = h[n, j]
                    m = kmax[n, j]
                    for k in range(m):
                        acc += coeffs[i, j, k] * (x - grid[k])
                out[n, i] = acc
    return out_arr


def kan_backward(const double[:, ::1] h, const double[:, :, ::1] coeffs,
                 const double[::1] grid, const double[:, ::1] grad_out):
    cdef Py_ssize_t n_rows = h.shape[0]
    cdef Py_ssize_t n_out = coeffs.shape[0]
    cdef Py_ssize_t n_in = coeffs.shape[1]
    cdef Py_ssize_t n_grid = coeffs.shape[2]
    if h.shape[1] != n_in or grid.shape[0] != n_grid:
        raise ValueError("kan_backward: inconsistent kernel shapes")
    if grad_out.shape[0] != n_rows or grad_out.shape[1] != n_out:
        raise ValueError("kan_backward: grad_out shape mismatch")

    grad_h_arr = np.zeros((n_rows, n_in), dtype=np.float64)
    grad_c_arr = np.zeros((n_out, n_in, n_grid), dtype=np.float64)
    cdef double[:, ::1] grad_h = grad_h_arr
    cdef double[:, :, ::1] grad_c = grad_c_arr

    cdef Py_ssize_t n, i, j, k, m
    cdef double x, go, csum, acc_h

    with nogil:
        for n in range(n_rows):
            for j in range(n_in):
                x = h[n, j]
                m = _active_count(x, grid)
                acc_h = 0.0
                for i in range(n_out):
                    go = grad_out[n, i]
                    csum = 0.0
                    for k in range(m):
                        grad_c[i, j, k] += go * (x - grid[k])
                        csum += coeffs[i, j, k]
                    acc_h += go * csum
                grad_h[n, j] = acc_h
    return grad_h_arr, grad_c_arr
