"""Gauss rules used to discretise the Laplace integral of the power kernel.

Two families are provided:

* ``gauss_legendre(n, a, b)`` -- the classical rule with unit weight on a
  finite interval, used on the dyadic panels.
* ``gauss_jacobi_power(n, gamma, a)`` -- the rule with weight ``s**gamma``
  on ``[0, a]``, used on the end panel next to the origin.  The returned
  weights absorb the weight function, so ``sum(w_k f(s_k))`` approximates
  ``integral_0^a s**gamma f(s) ds``.

Both are generated from the symmetric tridiagonal (Jacobi) matrix of the
three-term recurrence for the shifted Jacobi weight ``(1+x)**gamma`` on
``[-1, 1]``; eigenvalues give the nodes and the squared first eigenvector
components give the weights (Golub-Welsch).  Recurrence coefficients are
closed-form, so no moment matrices appear.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import isfinite

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import InputError, NumericalError

__all__ = ["QuadratureRule", "gauss_legendre", "gauss_jacobi_power"]


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of a Gauss rule on ``interval``.

    ``weight_exponent`` is the exponent of the power weight the rule was
    generated for (0 for Gauss-Legendre).  Weights always absorb the weight
    function.
    """

    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple[float, float]
    weight_exponent: float

    def __post_init__(self):
        a, b = self.interval
        if not (np.all(np.diff(self.nodes) > 0.0)
                and self.nodes[0] > a and self.nodes[-1] < b):
            raise NumericalError("quadrature nodes not strictly inside interval")
        if not np.all(self.weights > 0.0):
            raise NumericalError("non-positive quadrature weight")

    @property
    def n(self) -> int:
        return len(self.nodes)


@lru_cache(maxsize=512)
def _reference_rule(n: int, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Rule for weight ``s**gamma`` on the reference interval [0, 1]."""
    apb = gamma  # Jacobi parameters (0, gamma): a+b = gamma
    diag = np.empty(n)
    diag[0] = gamma / (apb + 2.0)
    k = np.arange(1, n, dtype=float)
    diag[1:] = gamma * gamma / ((2.0 * k + apb) * (2.0 * k + apb + 2.0))
    num = 4.0 * k * k * (k + gamma) ** 2
    den = (2.0 * k + apb) ** 2 * ((2.0 * k + apb) ** 2 - 1.0)
    off = np.sqrt(num / den)
    mu0 = 2.0 ** (gamma + 1.0) / (gamma + 1.0)
    if n == 1:
        xi = diag.copy()
        w = np.array([mu0])
    else:
        try:
            xi, vec = eigh_tridiagonal(diag, off)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise NumericalError(f"eigen decomposition failed for n={n}") from exc
        w = mu0 * vec[0, :] ** 2
    nodes = (1.0 + xi) / 2.0
    weights = w * 2.0 ** (-(gamma + 1.0))
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _check_order(n: int):
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InputError(f"rule order must be a positive integer, got {n!r}")


def gauss_legendre(n: int, a: float, b: float) -> QuadratureRule:
    """n-point Gauss-Legendre rule on [a, b].

    Exact for polynomials of degree <= 2n-1.
    """
    _check_order(n)
    if not (isfinite(a) and isfinite(b)) or not a < b:
        raise InputError(f"need a finite interval with a < b, got ({a}, {b})")
    nodes, weights = _reference_rule(n, 0.0)
    return QuadratureRule(
        nodes=a + (b - a) * nodes,
        weights=(b - a) * weights,
        interval=(float(a), float(b)),
        weight_exponent=0.0,
    )


def gauss_jacobi_power(n: int, gamma: float, a: float) -> QuadratureRule:
    """n-point Gauss rule for weight ``s**gamma`` (gamma >= 0) on [0, a].

    Exact for ``integral_0^a s**gamma q(s) ds`` with ``deg q <= 2n-1``; the
    weight function is folded into the weights.
    """
    _check_order(n)
    if not isfinite(gamma) or gamma < 0.0:
        raise InputError(f"weight exponent must be >= 0, got {gamma}")
    if not isfinite(a) or a <= 0.0:
        raise InputError(f"upper endpoint must be positive, got {a}")
    nodes, weights = _reference_rule(n, float(gamma))
    return QuadratureRule(
        nodes=a * nodes,
        weights=a ** (gamma + 1.0) * weights,
        interval=(0.0, float(a)),
        weight_exponent=float(gamma),
    )
