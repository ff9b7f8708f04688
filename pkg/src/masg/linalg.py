"""Closed-form and cyclic-Jacobi eigenvalue routines for tiny symmetric matrices.

The certificate checks only ever need 2x2 and 3x3 symmetric eigenvalues,
so they carry their own routines instead of deferring to an external
solver. Accuracy is cross-checked against LAPACK in the test suite.
"""

from __future__ import annotations

import math

import numpy as np


def eigvalsh2(m: np.ndarray) -> np.ndarray:
    """Eigenvalues of a symmetric 2x2 matrix, ascending."""
    a, b, c = float(m[0, 0]), float(m[0, 1]), float(m[1, 1])
    half_tr = 0.5 * (a + c)
    # hypot keeps the discriminant accurate when a-c and b differ in scale
    r = math.hypot(0.5 * (a - c), b)
    return np.array([half_tr - r, half_tr + r])


def jacobi_eigvalsh(m: np.ndarray, sweeps: int = 32) -> np.ndarray:
    """Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.

    Converges quadratically; `sweeps` is a safety cap, in practice a 3x3
    matrix needs 4-6 sweeps to reach machine precision.
    """
    a = np.array(m, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    a = 0.5 * (a + a.T)
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off = max(off, abs(a[p, q]))
        scale = max(abs(a).max(), 1.0)
        if off <= 1e-18 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a = 0.5 * (a + a.T)
    return np.sort(np.diag(a))


def trace_norm_sym(m: np.ndarray) -> float:
    """Sum of absolute eigenvalues of a symmetric matrix."""
    n = m.shape[0]
    if n == 1:
        return abs(float(m[0, 0]))
    if n == 2:
        ev = eigvalsh2(m)
    else:
        ev = jacobi_eigvalsh(m)
    return float(np.sum(np.abs(ev)))


def det3(m: np.ndarray) -> float:
    """Determinant of a 3x3 matrix by cofactor expansion."""
    return float(
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )
