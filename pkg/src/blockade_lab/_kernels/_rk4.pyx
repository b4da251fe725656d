# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Fixed-step RK4 on a sparse (CSR) linear generator, dy/dt = A y."""

import numpy as np

ctypedef double complex cplx


cdef inline void _spmv(const double* data, const int* indices, const int* indptr,
                       const double* x, double* out, Py_ssize_t n) noexcept nogil:
    # complex values as interleaved (re, im) doubles; plain real arithmetic
    cdef Py_ssize_t i, k, j
    cdef double re, im, dr, di, xr, xi
    for i in range(n):
        re = 0.0
        im = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            j = 2 * indices[k]
            dr = data[2 * k]
            di = data[2 * k + 1]
            xr = x[j]
            xi = x[j + 1]
            re += dr * xr - di * xi
            im += dr * xi + di * xr
        out[2 * i] = re
        out[2 * i + 1] = im


cdef inline void _axpy(const double* y, double a, const double* k, double* out, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(m):
        out[i] = y[i] + a * k[i]


def rk4_csr(const cplx[::1] data, const int[::1] indices, const int[::1] indptr,
            y0, double h, long n_steps):
    """Advance ``y0`` by ``n_steps`` RK4 steps of size ``h``; returns a new array."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t m = 2 * n
    y_arr = np.array(y0, dtype=np.complex128, copy=True)
    work = np.empty((5, m), dtype=np.float64)
    cdef double[::1] y = y_arr.view(np.float64)
    cdef double[:, ::1] w = work
    cdef double* py = &y[0]
    cdef double* k1 = &w[0, 0]
    cdef double* k2 = &w[1, 0]
    cdef double* k3 = &w[2, 0]
    cdef double* k4 = &w[3, 0]
    cdef double* tmp = &w[4, 0]
    cdef const double* dp = <const double*> &data[0]
    cdef const int* ip = &indices[0]
    cdef const int* pp = &indptr[0]
    cdef double half = 0.5 * h, sixth = h / 6.0
    cdef long step
    cdef Py_ssize_t i
    with nogil:
        for step in range(n_steps):
            _spmv(dp, ip, pp, py, k1, n)
            _axpy(py, half, k1, tmp, m)
            _spmv(dp, ip, pp, tmp, k2, n)
            _axpy(py, half, k2, tmp, m)
            _spmv(dp, ip, pp, tmp, k3, n)
            _axpy(py, h, k3, tmp, m)
            _spmv(dp, ip, pp, tmp, k4, n)
            for i in range(m):
                py[i] += sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return y_arr
