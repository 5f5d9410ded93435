"""Nonnegative least squares via the Lawson-Hanson active-set method.

Solves min_b ||C b - y||_2 subject to b >= 0. At the solution the KKT
conditions hold: b >= 0, gradient w = C^T (y - C b) <= tol on the zero set,
and w == 0 on the positive set (complementary slackness).
"""

from __future__ import annotations

import numpy as np


def nnls_solve(C: np.ndarray, y: np.ndarray, max_iter: int | None = None,
               tol: float | None = None) -> np.ndarray:
    C = np.asarray(C, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if C.ndim != 2 or y.ndim != 1 or C.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: C {C.shape}, y {y.shape}")
    m, n = C.shape
    if max_iter is None:
        max_iter = 3 * n + 30
    if tol is None:
        tol = 10 * np.finfo(np.float64).eps * np.abs(C).sum(axis=0).max() * max(m, n)

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = C.T @ (y - C @ x)

    for _ in range(max_iter):
        masked = np.where(passive, -np.inf, w)
        j = int(masked.argmax())
        if masked[j] <= tol:
            break
        passive[j] = True
        for _ in range(n + 1):
            idx = np.flatnonzero(passive)
            if len(idx) == 0:
                break
            z = np.zeros(n)
            sol, *_ = np.linalg.lstsq(C[:, idx], y, rcond=None)
            z[idx] = sol
            if (z[idx] > tol).all():
                x = z
                break
            # backtrack along x -> z to the first bound that goes nonpositive
            bad = idx[z[idx] <= tol]
            denom = x[bad] - z[bad]
            safe = denom > 0
            alpha = float(np.min(x[bad][safe] / denom[safe])) if safe.any() else 0.0
            x = x + alpha * (z - x)
            passive &= x > tol
            x[~passive] = 0.0
        w = C.T @ (y - C @ x)
    return x
