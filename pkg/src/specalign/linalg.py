"""Dense symmetric eigendecomposition (cyclic Jacobi) and small solver utilities.

Everything here operates on plain float64 numpy arrays. The Jacobi kernel is
JIT-compiled with numba when available; the pure-Python fallback is identical
arithmetic, just slower.
"""

import numpy as np

from .errors import DimensionError, NumericalError, SingularMatrixError

OFF_DIAG_TOL = 1e-12  # convergence: off(M) < OFF_DIAG_TOL * ||M||_F
MAX_SWEEPS = 100
PIVOT_TOL = 1e-12


def _jacobi_sweeps(a, v, tol, max_sweeps):
    """Cyclic Jacobi rotations in place; returns (sweeps_used, final_off)."""
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
        off = np.sqrt(off)
        if off <= tol:
            return sweep, off
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    off = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                off += a[i, j] * a[i, j]
    off = np.sqrt(off)
    if off <= tol:
        return max_sweeps, off
    return -1, off


try:  # numba is declared as a dependency, but degrade gracefully if it fails to load
    from numba import njit

    _jacobi_kernel = njit(cache=True)(_jacobi_sweeps)
except Exception:  # pragma: no cover
    _jacobi_kernel = _jacobi_sweeps


class EigDecomposition:
    """Eigenvalues sorted descending with orthonormal eigenvector columns."""

    __slots__ = ("values", "vectors")

    def __init__(self, values, vectors):
        self.values = values
        self.vectors = vectors


def sym_eig(m, max_sweeps=MAX_SWEEPS):
    """Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.

    The input is symmetrized as (M + M^T)/2 before iteration. Eigenvalues come
    back sorted descending, ties broken by the pre-sort order.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    a = 0.5 * (m + m.T)
    n = a.shape[0]
    fro = np.linalg.norm(a)
    tol = OFF_DIAG_TOL * fro
    v = np.eye(n)
    sweeps, off = _jacobi_kernel(a, v, tol, max_sweeps)
    if sweeps < 0:
        raise NumericalError(
            f"Jacobi iteration did not converge in {max_sweeps} sweeps "
            f"(off-diagonal residual {off:.3e})",
            residual=off,
        )
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return EigDecomposition(values[order], v[:, order])


def eig_values_backward(decomp, upstream):
    """Adjoint of the eigenvalue map: sum_i upstream_i * u_i u_i^T."""
    upstream = np.asarray(upstream, dtype=np.float64)
    n = decomp.values.shape[0]
    if upstream.shape != (n,):
        raise DimensionError(
            f"upstream has shape {upstream.shape}, expected ({n},)"
        )
    v = decomp.vectors
    return (v * upstream) @ v.T


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def add(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"cannot add {a.shape} and {b.shape}")
    return a + b


def scale(a, c):
    return np.asarray(a, dtype=np.float64) * float(c)


def transpose(a):
    return np.asarray(a, dtype=np.float64).T.copy()


def solve(m, b):
    """Solve M X = B by Gaussian elimination with partial pivoting.

    Raises SingularMatrixError when the best available pivot falls below
    PIVOT_TOL in magnitude.
    """
    m = np.array(m, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square system, got {m.shape}")
    if b.ndim == 1:
        b = b[:, None]
        squeeze = True
    else:
        squeeze = False
    n = m.shape[0]
    if b.shape[0] != n:
        raise DimensionError(f"rhs has {b.shape[0]} rows, system has {n}")
    for col in range(n):
        piv = col + int(np.argmax(np.abs(m[col:, col])))
        if abs(m[piv, col]) <= PIVOT_TOL:
            raise SingularMatrixError(
                f"pivot {m[piv, col]:.3e} below threshold at column {col}",
                residual=abs(m[piv, col]),
            )
        if piv != col:
            m[[col, piv]] = m[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        factors = m[col + 1:, col] / m[col, col]
        m[col + 1:, col:] -= factors[:, None] * m[col, col:]
        b[col + 1:] -= factors[:, None] * b[col]
    x = np.empty_like(b)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - m[row, row + 1:] @ x[row + 1:]) / m[row, row]
    return x[:, 0] if squeeze else x
