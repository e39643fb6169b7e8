# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Batched solves and products over many small dense blocks.

Block ``b`` occupies ``x[vec_off[b]:vec_off[b+1]]`` and its row-major factor
starts at ``mat[mat_off[b]]``.  All routines work in place on ``x``/``y``.
"""

cimport cython


def lu_solve_blocks(const double[::1] lu, const int[::1] piv,
                    const long long[::1] mat_off, const long long[::1] vec_off,
                    double[::1] x):
    """Solve ``A_b x_b = b_b`` for every block from ``scipy.linalg.lu_factor`` output."""
    cdef Py_ssize_t nb = vec_off.shape[0] - 1
    cdef Py_ssize_t b, i, j, n, p
    cdef long long m0, v0
    cdef double t
    for b in range(nb):
        v0 = vec_off[b]
        m0 = mat_off[b]
        n = vec_off[b + 1] - v0
        # row interchanges, in LAPACK order
        for i in range(n):
            p = piv[v0 + i]
            if p != i:
                t = x[v0 + i]
                x[v0 + i] = x[v0 + p]
                x[v0 + p] = t
        # unit lower triangle
        for i in range(1, n):
            t = x[v0 + i]
            for j in range(i):
                t -= lu[m0 + i * n + j] * x[v0 + j]
            x[v0 + i] = t
        # upper triangle
        for i in range(n - 1, -1, -1):
            t = x[v0 + i]
            for j in range(i + 1, n):
                t -= lu[m0 + i * n + j] * x[v0 + j]
            x[v0 + i] = t / lu[m0 + i * n + i]


def cho_solve_blocks(const double[::1] low,
                     const long long[::1] mat_off, const long long[::1] vec_off,
                     double[::1] x):
    """Solve ``L_b L_b^T x_b = b_b`` for every block given lower Cholesky factors."""
    cdef Py_ssize_t nb = vec_off.shape[0] - 1
    cdef Py_ssize_t b, i, j, n
    cdef long long m0, v0
    cdef double t
    for b in range(nb):
        v0 = vec_off[b]
        m0 = mat_off[b]
        n = vec_off[b + 1] - v0
        for i in range(n):
            t = x[v0 + i]
            for j in range(i):
                t -= low[m0 + i * n + j] * x[v0 + j]
            x[v0 + i] = t / low[m0 + i * n + i]
        for i in range(n - 1, -1, -1):
            t = x[v0 + i]
            for j in range(i + 1, n):
                t -= low[m0 + j * n + i] * x[v0 + j]
            x[v0 + i] = t / low[m0 + i * n + i]


def block_matvec(const double[::1] a,
                 const long long[::1] mat_off, const long long[::1] vec_off,
                 const double[::1] x, double[::1] y):
    """``y_b = A_b x_b`` for every block."""
    cdef Py_ssize_t nb = vec_off.shape[0] - 1
    cdef Py_ssize_t b, i, j, n
    cdef long long m0, v0
    cdef double t
    for b in range(nb):
        v0 = vec_off[b]
        m0 = mat_off[b]
        n = vec_off[b + 1] - v0
        for i in range(n):
            t = 0.0
            for j in range(n):
                t += a[m0 + i * n + j] * x[v0 + j]
            y[v0 + i] = t
