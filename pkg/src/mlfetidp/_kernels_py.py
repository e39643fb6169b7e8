"""Pure-Python fallback for :mod:`mlfetidp._kernels` with the same signatures."""

import numpy as np
import scipy.linalg as sla


def lu_solve_blocks(lu, piv, mat_off, vec_off, x):
    for b in range(len(vec_off) - 1):
        v0, v1 = vec_off[b], vec_off[b + 1]
        n = v1 - v0
        if n == 0:
            continue
        m0 = mat_off[b]
        a = np.asarray(lu[m0:m0 + n * n]).reshape(n, n)
        x[v0:v1] = sla.lu_solve((a, np.asarray(piv[v0:v1])), x[v0:v1], check_finite=False)


def cho_solve_blocks(low, mat_off, vec_off, x):
    for b in range(len(vec_off) - 1):
        v0, v1 = vec_off[b], vec_off[b + 1]
        n = v1 - v0
        if n == 0:
            continue
        m0 = mat_off[b]
        c = np.asarray(low[m0:m0 + n * n]).reshape(n, n)
        x[v0:v1] = sla.cho_solve((c, True), x[v0:v1], check_finite=False)


def block_matvec(a, mat_off, vec_off, x, y):
    for b in range(len(vec_off) - 1):
        v0, v1 = vec_off[b], vec_off[b + 1]
        n = v1 - v0
        m0 = mat_off[b]
        y[v0:v1] = np.asarray(a[m0:m0 + n * n]).reshape(n, n) @ x[v0:v1]
