"""Dense Gaussian elimination with partial pivoting for the small OCP systems."""

from __future__ import annotations

import logging

import numpy as np

from .errors import SingularSystemError

log = logging.getLogger(__name__)

COND_WARN = 1e8


def condition_estimate(a: np.ndarray) -> float:
    """1-norm condition number (inf for an exactly singular matrix)."""
    try:
        return float(np.linalg.cond(a, 1))
    except np.linalg.LinAlgError:
        return float("inf")


def gauss_solve(a, b, tol: float = 1e-13) -> np.ndarray:
    """Solve ``a @ x = b`` by elimination with row pivoting on the largest entry.

    A pivot smaller than ``tol`` times the largest entry of ``a`` is treated
    as singular.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"shape mismatch: a{a.shape}, b{b.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale == 0.0:
        raise SingularSystemError("zero matrix", float("inf"))
    a0 = a.copy()

    for k in range(n - 1):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= tol * scale:
            raise SingularSystemError("matrix is singular", condition_estimate(a0))
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        for i in range(k + 1, n):
            if a[i, k] != 0.0:
                lam = a[i, k] / a[k, k]
                a[i, k + 1:] -= lam * a[k, k + 1:]
                a[i, k] = 0.0
                b[i] -= lam * b[k]
    if abs(a[n - 1, n - 1]) <= tol * scale:
        raise SingularSystemError("matrix is singular", condition_estimate(a0))

    x = np.empty(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]

    cond = condition_estimate(a0)
    if cond > COND_WARN:
        log.warning("ill-conditioned %dx%d system, condition estimate %.3e", n, n, cond)
    return x
