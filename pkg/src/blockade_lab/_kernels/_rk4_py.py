"""Pure numpy/scipy fallback for the RK4 kernel."""

import numpy as np
import scipy.sparse as sp


def rk4_csr(data, indices, indptr, y0, h, n_steps):
    n = len(indptr) - 1
    a = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    y = np.array(y0, dtype=complex, copy=True)
    half = 0.5 * h
    for _ in range(int(n_steps)):
        k1 = a @ y
        k2 = a @ (y + half * k1)
        k3 = a @ (y + half * k2)
        k4 = a @ (y + h * k3)
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y
