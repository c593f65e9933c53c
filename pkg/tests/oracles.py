"""Independent oracles shared by the verification tests.

These deliberately avoid the library code paths they check: the
eigensolver is a plain cyclic-Jacobi sweep, and the activation oracle is
the closed-form stationary law of the saturating counter's birth-death
chain under independent input bits.
"""

import numpy as np


def jacobi_largest_eigenvalue(a, sweeps=100, tol=1e-14):
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += a[p, q] ** 2
                if abs(a[p, q]) < tol:
                    continue
                theta = 0.5 * np.arctan2(2 * a[p, q], a[q, q] - a[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
        if off < tol:
            break
    return float(np.max(np.diag(a)))


def oracle_operator_norm(w):
    w = np.asarray(w, dtype=np.float64)
    gram = w.T @ w if w.shape[1] <= w.shape[0] else w @ w.T
    return float(np.sqrt(max(jacobi_largest_eigenvalue(gram), 0.0)))


def stanh_stationary(x, state_count):
    """Expected output value for iid input bits of bipolar value x."""
    p = (x + 1.0) / 2.0
    if p == 0.0:
        return -1.0
    if p == 1.0:
        return 1.0
    rho = p / (1.0 - p)
    top = rho ** (state_count // 2)
    return (top - 1.0) / (top + 1.0)
