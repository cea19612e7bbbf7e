"""Tridiagonal solves for the implicit time steps.

The step matrices are constant across time levels, so they are packed once
into LAPACK banded storage and factor-solved per step.  Strict diagonal
dominance is asserted where the scheme guarantees it.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import AssemblyError

__all__ = ["TridiagonalSystem", "thomas_solve"]


class TridiagonalSystem:
    """Reusable tridiagonal matrix; ``solve`` factors a fresh copy each call
    (O(n) LAPACK work, no state carried between steps)."""

    def __init__(self, lower: np.ndarray, diag: np.ndarray, upper: np.ndarray,
                 require_dominance: bool = True):
        n = len(diag)
        if len(lower) != n - 1 or len(upper) != n - 1:
            raise AssemblyError("band length mismatch")
        if require_dominance:
            off = np.zeros(n)
            off[:-1] += np.abs(upper)
            off[1:] += np.abs(lower)
            if not np.all(np.abs(diag) > off):
                raise AssemblyError("step matrix lost strict diagonal dominance")
        if not np.all(np.abs(diag) > 0.0):
            raise AssemblyError("zero pivot in step matrix")
        self._ab = np.zeros((3, n))
        self._ab[0, 1:] = upper
        self._ab[1, :] = diag
        self._ab[2, :-1] = lower

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return solve_banded((1, 1), self._ab.copy(), rhs,
                            overwrite_ab=True, check_finite=False)


def thomas_solve(lower, diag, upper, rhs) -> np.ndarray:
    """Plain sequential elimination; kept as an independent cross-check for
    the LAPACK path in the tests."""
    n = len(diag)
    c = np.zeros(n)
    d = np.zeros(n)
    c[0] = upper[0] / diag[0] if n > 1 else 0.0
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i - 1] * c[i - 1]
        if denom == 0.0:
            raise AssemblyError("zero pivot in Thomas sweep")
        if i < n - 1:
            c[i] = upper[i] / denom
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom
    x = np.zeros(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x
