"""Direct (L1) and fast (exponential-sum) evaluation of the Caputo
derivative of order ``alpha in (0, 1)`` on a uniform time grid.

The fast evaluator splits the convolution at ``t - dt``: the local piece is
the usual L1 difference, the history piece is integrated by parts and its
kernel ``t**(-1-alpha)`` replaced by a certified exponential sum, giving a
per-exponential scalar recurrence.  ``FastCaputoState`` owns one sample
stream; ``FastHistoryBank``/``DirectHistoryBank`` run the same recurrences
vectorised across many spatial nodes for the PDE solvers.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, gamma

import numpy as np

from .errors import InputError, StateError
from .soe import SumOfExponentials

__all__ = [
    "L1Weights",
    "StepWeights",
    "step_weights",
    "caputo_l1_direct",
    "FastCaputoState",
    "fast_history_update",
    "fast_caputo_eval",
    "l1_truncation_bound",
    "fast_truncation_bound",
    "ab_coefficients",
    "fast_caputo_assembled",
    "FastHistoryBank",
    "DirectHistoryBank",
]


class L1Weights:
    """Lazily extended table of ``a_k = (k+1)**(1-alpha) - k**(1-alpha)``."""

    def __init__(self, alpha: float):
        if not 0.0 < alpha < 1.0:
            raise InputError(f"alpha must lie in (0,1), got {alpha}")
        self.alpha = alpha
        self._table = np.array([1.0])

    def coefficients(self, count: int) -> np.ndarray:
        """First ``count`` coefficients ``a_0 .. a_{count-1}``."""
        if count > len(self._table):
            n = max(count, 2 * len(self._table))
            k = np.arange(n, dtype=float)
            self._table = (k + 1.0) ** (1.0 - self.alpha) - k ** (1.0 - self.alpha)
        view = self._table[:count]
        view.setflags(write=False)
        return view


def caputo_l1_direct(samples, dt: float, alpha: float) -> float:
    """L1 value of the Caputo derivative at ``t_n = n dt`` from the full
    sample history ``u^0 .. u^n``.  Cost O(n); exact for linear ``u``."""
    u = np.asarray(samples, dtype=float)
    n = len(u) - 1
    if n < 1:
        raise InputError("need at least two samples (u^0 and u^1)")
    if dt <= 0.0:
        raise InputError("dt must be positive")
    a = L1Weights(alpha).coefficients(n + 1)
    acc = a[0] * u[n]
    if n > 1:
        # coefficient of u^k is a_{n-k-1} - a_{n-k}, k = 1..n-1
        acc -= np.dot(a[: n - 1][::-1] - a[1:n][::-1], u[1:n])
    acc -= a[n - 1] * u[0]
    return dt ** (-alpha) / gamma(2.0 - alpha) * acc


@dataclass(frozen=True)
class StepWeights:
    """Panel weights multiplying ``u^{n-1}`` and ``u^{n-2}`` in the history
    recurrence: exact integrals of the decaying exponential against the
    linear interpolant on one step."""

    lambda1: float
    lambda2: float


_X_SWITCH = 1e-2


def _factorials(upto: int) -> list[int]:
    out = [1]
    for i in range(1, upto + 1):
        out.append(out[-1] * i)
    return out


# Taylor coefficients of (exp(-x)-1+x)/x^2 and (1-(1+x)exp(-x))/x^2; eight
# terms leave a remainder below x^8/9! < 1e-22 at the switch point.
_FACT = _factorials(10)
_G1 = np.array([(-1.0) ** m / _FACT[m + 2] for m in range(8)])
_G2 = np.array([(-1.0) ** m * (m + 1) / _FACT[m + 2] for m in range(8)])


def _bracket_series(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g1 = np.full_like(x, _G1[-1])
    g2 = np.full_like(x, _G2[-1])
    for c1, c2 in zip(_G1[-2::-1], _G2[-2::-1]):
        g1 = g1 * x + c1
        g2 = g2 * x + c2
    return g1, g2


def _step_weight_arrays(s: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(s, dtype=float)
    x = s * dt
    small = x < _X_SWITCH
    g1s, g2s = _bracket_series(x)
    decay = np.exp(-x)
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = s * s * dt
        lam1_closed = decay * (decay - 1.0 + x) / denom
        lam2_closed = decay * (1.0 - decay - x * decay) / denom
    lam1 = np.where(small, dt * decay * g1s, lam1_closed)
    lam2 = np.where(small, dt * decay * g2s, lam2_closed)
    return lam1, lam2


def step_weights(s: float, dt: float) -> StepWeights:
    """History-panel weights for one exponent; the small ``s dt`` branch is
    evaluated by series to dodge the cancellation in the closed forms."""
    if dt <= 0.0:
        raise InputError("dt must be positive")
    if s < 0.0:
        raise InputError("exponent must be nonnegative")
    lam1, lam2 = _step_weight_arrays(np.array([s]), dt)
    return StepWeights(lambda1=float(lam1[0]), lambda2=float(lam2[0]))


class FastCaputoState:
    """History accumulators for one sample stream.

    Protocol: construct with ``u^0``; at step ``n = state.step + 1`` call
    ``fast_caputo_eval(state, u_n)`` as often as needed (it does not
    mutate), then ``fast_history_update(state, u_n)`` exactly once to commit
    the sample and advance.  Memory is O(n_exp), independent of the number
    of steps taken.
    """

    def __init__(self, alpha: float, dt: float, soe: SumOfExponentials, u0: float):
        if not 0.0 < alpha < 1.0:
            raise InputError(f"alpha must lie in (0,1), got {alpha}")
        if dt <= 0.0:
            raise InputError("dt must be positive")
        self.alpha = alpha
        self.dt = dt
        self.soe = soe
        self.u0 = float(u0)
        self.u_prev = float(u0)
        self.u_prev2 = float("nan")
        self.step = 0
        self.history = np.zeros(soe.n_exp)
        self._decay = np.exp(-soe.exponents * dt)
        self._lam1, self._lam2 = _step_weight_arrays(soe.exponents, dt)
        self._sigma = dt ** (-alpha) / gamma(2.0 - alpha)
        self._inv_gamma1 = 1.0 / gamma(1.0 - alpha)

    @property
    def n_exp(self) -> int:
        return self.soe.n_exp

    def commit(self, u_new: float) -> None:
        if self.step < 0:
            raise StateError("state not initialised with u^0")
        self.history *= self._decay
        self.history += self._lam1 * u_new + self._lam2 * self.u_prev
        self.u_prev2 = self.u_prev
        self.u_prev = float(u_new)
        self.step += 1

    def evaluate(self, u_n: float) -> float:
        n = self.step + 1
        if n == 1:
            return (u_n - self.u0) * self._sigma
        t_n = n * self.dt
        local = (u_n - self.u_prev) * self._sigma
        hist = (self.u_prev * self.dt ** (-self.alpha)
                - self.u0 * t_n ** (-self.alpha)
                - self.alpha * float(np.dot(self.soe.weights, self.history)))
        return local + hist * self._inv_gamma1


def fast_history_update(state: FastCaputoState, u_new: float) -> None:
    """Commit sample ``u^{n-1}`` (folds the panel ``[t_{n-2}, t_{n-1}]``
    into every accumulator and advances the step counter)."""
    state.commit(u_new)


def fast_caputo_eval(state: FastCaputoState, u_n: float) -> float:
    """Fast-scheme Caputo value at ``t_n`` given the trial sample ``u_n``;
    the state must have committed samples through ``u^{n-1}``."""
    return state.evaluate(u_n)


def l1_truncation_bound(alpha: float, dt: float, max_u2: float) -> float:
    """Truncation bound of the L1 scheme for ``u in C^2``:
    ``dt**(2-alpha)/Gamma(2-alpha) * c(alpha) * max|u''|``."""
    c = (1.0 - alpha) / 12.0 + 2.0 ** (2.0 - alpha) / (2.0 - alpha) \
        - (1.0 + 2.0 ** (-alpha))
    return dt ** (2.0 - alpha) / gamma(2.0 - alpha) * c * max_u2


def fast_truncation_bound(alpha: float, dt: float, eps: float, t_prev: float,
                          max_u2: float, max_u: float) -> float:
    """L1 bound plus the kernel-compression term
    ``alpha eps t_{n-1} max|u| / Gamma(1-alpha)``."""
    return (l1_truncation_bound(alpha, dt, max_u2)
            + alpha * eps * t_prev * max_u / gamma(1.0 - alpha))


def ab_coefficients(soe: SumOfExponentials, dt: float, n_max: int):
    """Analysis coefficients ``a_n, b_n`` (n = 0..n_max) of the assembled
    fast scheme: ``a_n = alpha dt**alpha sum_j w_j exp(-n s_j dt) lam1_j``
    and likewise ``b_n`` with ``lam2``."""
    alpha = soe.beta - 1.0
    lam1, lam2 = _step_weight_arrays(soe.exponents, dt)
    decay_pow = np.exp(-np.multiply.outer(np.arange(n_max + 1, dtype=float) * dt,
                                          soe.exponents))
    scale = alpha * dt ** alpha
    a = scale * decay_pow @ (soe.weights * lam1)
    b = scale * decay_pow @ (soe.weights * lam2)
    return a, b


def fast_caputo_assembled(samples, dt: float, soe: SumOfExponentials) -> np.ndarray:
    """Fast-scheme values at ``t_1 .. t_n`` computed from the assembled
    coefficient form (the a/b series) instead of the recurrence.  Used by
    the quadratic-form analysis checks; O(n^2)."""
    u = np.asarray(samples, dtype=float)
    n = len(u) - 1
    if n < 1:
        raise InputError("need at least two samples")
    alpha = soe.beta - 1.0
    a, b = ab_coefficients(soe, dt, n_max=max(n - 1, 0))
    g1 = gamma(1.0 - alpha)
    pref = dt ** (-alpha) / g1
    out = np.empty(n)
    out[0] = (u[1] - u[0]) * dt ** (-alpha) / gamma(2.0 - alpha)
    for k in range(2, n + 1):
        acc = u[k] / (1.0 - alpha) - (alpha / (1.0 - alpha) + a[0]) * u[k - 1]
        if k > 2:
            ls = np.arange(1, k - 1)
            acc -= np.dot(a[k - ls - 1] + b[k - ls - 2], u[1:k - 1])
        acc -= (b[k - 2] + float(k) ** (-alpha)) * u[0]
        out[k - 1] = pref * acc
    return out


class FastHistoryBank:
    """Fast-scheme history accumulators for a vector of spatial nodes; the
    same recurrence as :class:`FastCaputoState`, run column-wise."""

    def __init__(self, alpha: float, dt: float, soe: SumOfExponentials,
                 u0: np.ndarray):
        self.alpha = alpha
        self.dt = dt
        self.soe = soe
        self.u0 = np.array(u0, dtype=float)
        self.u_prev = self.u0.copy()
        self.step = 0
        self.hist = np.zeros((len(self.u0), soe.n_exp))
        self._decay = np.exp(-soe.exponents * dt)
        self._lam1, self._lam2 = _step_weight_arrays(soe.exponents, dt)
        self._sigma = dt ** (-alpha) / gamma(2.0 - alpha)
        self._inv_gamma1 = 1.0 / gamma(1.0 - alpha)
        self._wvec = soe.weights

    @property
    def sigma(self) -> float:
        """Coefficient of ``u^n`` in the evaluated operator."""
        return self._sigma

    @property
    def scalar_count(self) -> int:
        return self.hist.size

    def rhs_vector(self, n: int) -> np.ndarray:
        """Known part ``R`` with ``FC D u^n = sigma u^n + R`` at ``t_n``."""
        if n != self.step + 1:
            raise StateError(f"bank at step {self.step} asked for level {n}")
        if n == 1:
            return -self._sigma * self.u0
        t_n = n * self.dt
        hist_dot = self.hist @ self._wvec
        return (-self._sigma * self.u_prev
                + (self.u_prev * self.dt ** (-self.alpha)
                   - self.u0 * t_n ** (-self.alpha)
                   - self.alpha * hist_dot) * self._inv_gamma1)

    def commit(self, u_new: np.ndarray) -> None:
        self.hist *= self._decay
        self.hist += np.multiply.outer(u_new, self._lam1)
        self.hist += np.multiply.outer(self.u_prev, self._lam2)
        self.u_prev = np.array(u_new, dtype=float)
        self.step += 1


class DirectHistoryBank:
    """L1 history for a vector of nodes; stores all backward differences,
    so memory grows with the step count (that is the point of comparison)."""

    def __init__(self, alpha: float, dt: float, n_time: int, u0: np.ndarray):
        self.alpha = alpha
        self.dt = dt
        self.u0 = np.array(u0, dtype=float)
        self.u_prev = self.u0.copy()
        self.step = 0
        self.n_time = n_time
        self.diffs = np.zeros((n_time, len(self.u0)))
        weights = L1Weights(alpha).coefficients(n_time + 1)
        self._a_rev = weights[::-1].copy()  # a_{n_time} .. a_0, contiguous
        self._sigma = dt ** (-alpha) / gamma(2.0 - alpha)

    @property
    def sigma(self) -> float:
        return self._sigma

    @property
    def scalar_count(self) -> int:
        return self.diffs.size

    def rhs_vector(self, n: int) -> np.ndarray:
        if n != self.step + 1:
            raise StateError(f"bank at step {self.step} asked for level {n}")
        out = -self._sigma * self.u_prev
        if n >= 2:
            # sum_{k=1}^{n-1} a_k (u^{n-k} - u^{n-k-1}) via contiguous slices
            nt = self.n_time
            out = out + self._sigma * (
                self._a_rev[nt + 1 - n:nt] @ self.diffs[:n - 1])
        return out

    def commit(self, u_new: np.ndarray) -> None:
        if self.step >= self.n_time:
            raise StateError("direct bank committed past its horizon")
        self.diffs[self.step] = u_new - self.u_prev
        self.u_prev = np.array(u_new, dtype=float)
        self.step += 1
