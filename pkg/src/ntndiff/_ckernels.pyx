# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``."""
import numpy as np
from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm

NAME = "compiled"


cdef void _matmul(const double* a, const double* b, double* c, int m, int k, int n,
                  bint b_transposed) noexcept nogil:
    # row-major c(m, n) = a(m, k) @ op(b); BLAS is column-major, so compute c.T = op(b).T @ a.T
    cdef double one = 1.0, zero = 0.0
    cdef char ta = b'T' if b_transposed else b'N'
    cdef char tb = b'N'
    cdef int ldb = k if b_transposed else n
    dgemm(&ta, &tb, &n, &m, &k, &one, <double*>b, &ldb, <double*>a, &k, &zero, c, &n)


def dct_apply(const double[:, :, ::1] grid, const double[:, ::1] left,
              const double[:, ::1] right):
    cdef int nc = grid.shape[0], h = grid.shape[1], w = grid.shape[2]
    cdef int c
    tmp_arr = np.empty((h, w), dtype=np.float64)
    out_arr = np.empty((nc, h, w), dtype=np.float64)
    cdef double[:, ::1] tmp = tmp_arr
    cdef double[:, :, ::1] out = out_arr
    if h == 0 or w == 0:
        return out_arr
    with nogil:
        for c in range(nc):
            _matmul(&left[0, 0], &grid[c, 0, 0], &tmp[0, 0], h, h, w, False)
            _matmul(&tmp[0, 0], &right[0, 0], &out[c, 0, 0], h, w, w, True)
    return out_arr


def band_substitute(const double[:, :, ::1] donor, const double[:, :, ::1] recipient,
                    const unsigned char[:, ::1] bits, const double[:, ::1] basis_h,
                    const double[:, ::1] basis_w):
    cdef Py_ssize_t nc = donor.shape[0], h = donor.shape[1], w = donor.shape[2]
    spec_d = dct_apply(donor, basis_h, basis_w)
    spec_r = dct_apply(recipient, basis_h, basis_w)
    cdef double[:, :, ::1] sd = spec_d
    cdef double[:, :, ::1] sr = spec_r
    cdef Py_ssize_t c, i, j
    for c in range(nc):
        for i in range(h):
            for j in range(w):
                if bits[i, j]:
                    sr[c, i, j] = sd[c, i, j]
    return dct_apply(spec_r, np.ascontiguousarray(np.asarray(basis_h).T),
                     np.ascontiguousarray(np.asarray(basis_w).T))


def gmm_posterior(const double[::1] z, const double[:, ::1] means,
                  const double[::1] log_w, double sqrt_ab, double var_t, double coef):
    cdef Py_ssize_t K = means.shape[0], n = means.shape[1]
    cdef Py_ssize_t k, i
    cdef double d, d2, top, total
    resp_arr = np.empty(K, dtype=np.float64)
    mean_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] resp = resp_arr
    cdef double[::1] mean = mean_arr
    for k in range(K):
        d2 = 0.0
        for i in range(n):
            d = z[i] - sqrt_ab * means[k, i]
            d2 += d * d
        resp[k] = log_w[k] - d2 / (2.0 * var_t)
    top = resp[0]
    for k in range(1, K):
        if resp[k] > top:
            top = resp[k]
    total = 0.0
    for k in range(K):
        resp[k] = exp(resp[k] - top)
        total += resp[k]
    for k in range(K):
        resp[k] /= total
    cdef double shrink = 1.0 - coef * sqrt_ab
    for i in range(n):
        d = 0.0
        for k in range(K):
            d += resp[k] * means[k, i]
        mean[i] = coef * z[i] + shrink * d
    return mean_arr, resp_arr


def lbp_codes(const double[:, ::1] img):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t i, j
    cdef double c
    cdef long code
    out_arr = np.empty((h - 2, w - 2), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    for i in range(1, h - 1):
        for j in range(1, w - 1):
            c = img[i, j]
            code = 0
            if img[i - 1, j - 1] >= c: code |= 1
            if img[i - 1, j] >= c: code |= 2
            if img[i - 1, j + 1] >= c: code |= 4
            if img[i, j + 1] >= c: code |= 8
            if img[i + 1, j + 1] >= c: code |= 16
            if img[i + 1, j] >= c: code |= 32
            if img[i + 1, j - 1] >= c: code |= 64
            if img[i, j - 1] >= c: code |= 128
            out[i - 1, j - 1] = code
    return out_arr
