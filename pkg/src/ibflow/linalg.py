"""Dense matrix primitives: centering, covariance and symmetric eigenvalues.

A "sample matrix" throughout the package is a 2-D float array with one
observation per row and one feature per column.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError, IBFlowError, InsufficientSamplesError

MAX_SWEEPS = 100
OFFDIAG_RTOL = 1e-12


def as_sample_matrix(x, name: str = "X") -> np.ndarray:
    """Coerce `x` into a finite (n_rows, n_cols) float64 array.

    1-D input is read as a single feature column.
    """
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise IBFlowError(f"{name}: expected a 2-D sample matrix, got ndim={a.ndim}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise IBFlowError(f"{name}: empty sample matrix of shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise IBFlowError(f"{name}: sample matrix contains non-finite entries")
    return a


def center(x) -> np.ndarray:
    x = as_sample_matrix(x)
    return x - x.mean(axis=0, keepdims=True)


def covariance(x) -> np.ndarray:
    """Population covariance (divides by N) of the columns of `x`."""
    x = as_sample_matrix(x)
    n = x.shape[0]
    if n < 2:
        raise InsufficientSamplesError(f"insufficient samples: covariance needs >= 2 rows, got {n}")
    xc = center(x)
    cov = xc.T @ xc / n
    # exact symmetry; the product is symmetric only up to summation order
    return 0.5 * (cov + cov.T)


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint (p, q) pairings covering every index pair once per sweep."""
    m = n if n % 2 == 0 else n + 1
    idx = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for k in range(m // 2):
            a, b = idx[k], idx[m - 1 - k]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=int), np.array(qs, dtype=int)))
        idx = [idx[0]] + [idx[-1]] + idx[1:-1]
    return rounds


def sym_eigvals(s, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.

    Each sweep visits every off-diagonal pair once. Pairs are grouped into
    disjoint rounds so a whole round is applied with vectorized row and column
    updates; rotations on disjoint index pairs commute, so this is the same
    cyclic Jacobi method in a different visiting order.
    """
    a = np.array(s, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise IBFlowError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise IBFlowError("matrix contains non-finite entries")
    scale = np.abs(a).max() if a.size else 0.0
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-10 * max(scale, 1e-300)):
        raise IBFlowError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if n == 1:
        return a[0].copy()

    # Frobenius norm bounds the trace of a PSD matrix from below, so this
    # stopping rule is at least as strict as one relative to the trace.
    tol = OFFDIAG_RTOL * np.linalg.norm(a)
    rounds = _round_robin(n)
    off = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if np.abs(a[off]).max() <= tol:
            return np.sort(np.diag(a))[::-1].copy()
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > 0.0
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            sn = t * c
            cols_p, cols_q = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * cols_p - sn * cols_q
            a[:, q] = sn * cols_p + c * cols_q
            rows_p, rows_q = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rows_p - sn[:, None] * rows_q
            a[q, :] = sn[:, None] * rows_p + c[:, None] * rows_q
            a[p, q] = 0.0
            a[q, p] = 0.0
    if np.abs(a[off]).max() <= tol:
        return np.sort(np.diag(a))[::-1].copy()
    raise ConvergenceError(f"eigensolver did not converge after {max_sweeps} sweeps")


def pca_spectrum(x) -> np.ndarray:
    """Descending eigenvalues of the population covariance of `x`.

    Covariances are PSD, so negative round-off eigenvalues are clamped to 0.
    """
    return np.maximum(sym_eigvals(covariance(x)), 0.0)
