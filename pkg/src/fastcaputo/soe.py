"""Certified sum-of-exponentials compression of the power kernel t**(-beta).

For ``beta in (1, 2)`` the kernel has the Laplace representation

    t**(-beta) = (1/Gamma(beta)) * integral_0^inf exp(-t s) s**(beta-1) ds.

The integral is truncated at a cutoff ``p`` chosen so the tail stays below
the error budget for all ``t >= delta``, and the finite range is split into
an end panel ``[0, 2**m_low]`` (Gauss rule with weight ``s**(beta-1)``) plus
dyadic panels ``[2**j, 2**(j+1)]`` (Gauss-Legendre, weights multiplied by
``s**(beta-1)``).  Every node becomes an exponent, every scaled weight a
coefficient, and the result is certified by dense sampling on
``[delta, horizon]`` before it is returned.

``reduce_soe`` then coarsens a certified approximation: panel orders are
shrunk while certification still holds, and adjacent terms are greedily
merged (or dropped) as long as the sampled error stays within the target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from math import ceil, exp, fsum, gamma, log, log2, sqrt

import numpy as np

from .errors import ConstructionError, InputError
from .quadrature import gauss_jacobi_power, gauss_legendre

__all__ = [
    "SumOfExponentials",
    "SoeBuildPlan",
    "select_cutoff",
    "plan_build",
    "build_soe",
    "eval_soe",
    "certify_soe",
    "reduce_soe",
    "cached_soe",
    "soe_to_json",
    "soe_from_json",
]

_EVAL_CHUNK = 16384


@dataclass
class SoeBuildPlan:
    """Panel layout and orders for one construction attempt."""

    cutoff_p: float
    m_low: int
    n_high: int
    n_end: int
    n_small: int
    n_large: int

    @property
    def term_budget(self) -> int:
        return (self.n_end + self.n_small * max(0, -self.m_low)
                + self.n_large * (self.n_high + 1))


@dataclass
class SumOfExponentials:
    """Approximation ``t**(-beta) ~ sum_i weights[i] * exp(-exponents[i] t)``
    on ``[delta, horizon]`` with absolute tolerance ``tolerance``.

    ``certified_error`` holds the largest sampled deviation observed by the
    most recent :func:`certify_soe` call.
    """

    beta: float
    delta: float
    horizon: float
    tolerance: float
    exponents: np.ndarray
    weights: np.ndarray
    certified_error: float = np.inf
    build_plan: SoeBuildPlan | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 1.0 < self.beta < 2.0:
            raise InputError(f"kernel exponent must lie in (1,2), got {self.beta}")
        if not 0.0 < self.delta <= self.horizon:
            raise InputError("need 0 < delta <= horizon")
        if self.tolerance <= 0.0:
            raise InputError("tolerance must be positive")
        self.exponents = np.asarray(self.exponents, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.exponents.size == 0:
            raise InputError("need at least one exponential term")
        if np.any(self.exponents < 0.0) or np.any(np.diff(self.exponents) <= 0.0):
            raise InputError("exponents must be nonnegative and strictly increasing")
        if np.any(self.weights <= 0.0):
            raise InputError("weights must be positive")

    @property
    def n_exp(self) -> int:
        return len(self.exponents)


def select_cutoff(delta: float, eps: float) -> float:
    """Smallest ``p >= 1/delta`` with ``5 exp(-delta p) p**2 <= eps``.

    That expression bounds the truncated Laplace tail for every
    ``t >= delta`` once ``delta p > 1``, so the returned cutoff keeps the
    tail below ``eps``.
    """
    if not 0.0 < delta <= 1.0:
        raise InputError(f"delta must lie in (0, 1], got {delta}")
    if not 0.0 < eps < 1.0 / np.e:
        raise InputError(f"eps must lie in (0, 1/e), got {eps}")

    def bound(p: float) -> float:
        return 5.0 * exp(-delta * p) * p * p

    # The bound increases up to p = 2/delta and decreases beyond; with
    # eps < 1/e it exceeds eps on [1/delta, 2/delta], so the crossing is
    # unique and lies to the right of the maximum.
    lo = 2.0 / delta
    hi = lo
    while bound(hi) > eps:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if bound(mid) > eps:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * hi:
            break
    return hi


def plan_build(beta: float, delta: float, horizon: float, eps: float) -> SoeBuildPlan:
    """Panel layout for :func:`build_soe`.

    Half the budget is reserved for the truncation tail, half for the
    quadrature panels; orders start from the asymptotic guidance with
    modest constants and are grown later if certification asks for it.
    """
    if not 1.0 < beta < 2.0:
        raise InputError(f"kernel exponent must lie in (1,2), got {beta}")
    if not 0.0 < delta <= 1.0 <= horizon:
        raise InputError("need 0 < delta <= 1 <= horizon")
    if eps <= 0.0:
        raise InputError("eps must be positive")
    p = select_cutoff(delta, eps / 2.0)
    m_low = -ceil(log2(horizon)) - 1
    n_high = ceil(log2(p))
    n_end = max(2, ceil(0.6 * log(1.0 / eps)) + 2)
    n_large = max(2, ceil(0.6 * (log(1.0 / eps) + log(1.0 / delta))) + 2)
    return SoeBuildPlan(cutoff_p=p, m_low=m_low, n_high=n_high,
                        n_end=n_end, n_small=n_end, n_large=n_large)


def _assemble(beta: float, plan: SoeBuildPlan) -> tuple[np.ndarray, np.ndarray, list]:
    """Exponents/weights for a plan, plus (kind, slice) bookkeeping per panel
    group so a failed certification can be attributed."""
    inv_gamma = 1.0 / gamma(beta)
    exps, wts, groups = [], [], []
    pos = 0

    a_end = 2.0 ** plan.m_low
    rule = gauss_jacobi_power(plan.n_end, beta - 1.0, a_end)
    exps.append(rule.nodes)
    wts.append(rule.weights * inv_gamma)
    groups.append(("end", slice(pos, pos + rule.n), (0.0, a_end)))
    pos += rule.n

    for j in range(plan.m_low, 0):
        rule = gauss_legendre(plan.n_small, 2.0 ** j, 2.0 ** (j + 1))
        exps.append(rule.nodes)
        wts.append(rule.weights * rule.nodes ** (beta - 1.0) * inv_gamma)
        groups.append(("small", slice(pos, pos + rule.n), (2.0 ** j, 2.0 ** (j + 1))))
        pos += rule.n

    for j in range(0, plan.n_high + 1):
        lo, hi = 2.0 ** j, min(2.0 ** (j + 1), plan.cutoff_p)
        if lo >= plan.cutoff_p:
            break
        rule = gauss_legendre(plan.n_large, lo, hi)
        exps.append(rule.nodes)
        wts.append(rule.weights * rule.nodes ** (beta - 1.0) * inv_gamma)
        groups.append(("large", slice(pos, pos + rule.n), (lo, hi)))
        pos += rule.n

    return np.concatenate(exps), np.concatenate(wts), groups


def _sample_grid(delta: float, horizon: float, n_samples: int) -> np.ndarray:
    if horizon == delta:
        return np.array([delta])
    return np.geomspace(delta, horizon, n_samples)


def _eval_grid(exponents: np.ndarray, weights: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Vectorised ``sum_i w_i exp(-s_i t)`` over a whole sample grid."""
    out = np.empty_like(ts)
    for start in range(0, len(ts), _EVAL_CHUNK):
        block = ts[start:start + _EVAL_CHUNK]
        mat = np.multiply.outer(exponents, block)
        np.negative(mat, out=mat)
        np.exp(mat, out=mat)
        out[start:start + _EVAL_CHUNK] = weights @ mat
    return out


def _max_error(exponents, weights, beta, ts) -> float:
    return float(np.abs(_eval_grid(exponents, weights, ts) - ts ** (-beta)).max())


def eval_soe(soe: SumOfExponentials, t: float) -> float:
    """Evaluate the exponential sum at one time.

    Terms are accumulated in ascending-exponent order with compensated
    summation; evaluation outside ``[delta, horizon]`` is legal but carries
    no certified error bound.
    """
    if t <= 0.0:
        raise InputError("evaluation time must be positive")
    return fsum(w * exp(-s * t) for s, w in zip(soe.exponents, soe.weights))


def certify_soe(soe: SumOfExponentials, n_samples: int = 100_000) -> float:
    """Largest deviation from ``t**(-beta)`` over log-uniform samples of
    ``[delta, horizon]`` (endpoints included).  The value is stored into
    ``soe.certified_error`` and returned."""
    if n_samples < 10_000:
        raise InputError("certification needs at least 10^4 samples")
    ts = _sample_grid(soe.delta, soe.horizon, n_samples)
    err = _max_error(soe.exponents, soe.weights, soe.beta, ts)
    soe.certified_error = err
    return err


def _worst_group(beta, groups, exponents, weights, t_worst) -> str:
    """Panel group contributing the largest quadrature error at the worst
    sample, estimated against doubled-order rules on the same panels."""
    worst_kind, worst_err = "large", -1.0
    by_kind: dict[str, float] = {}
    for kind, sl, (lo, hi) in groups:
        n = sl.stop - sl.start
        if kind == "end":
            ref = gauss_jacobi_power(2 * n, beta - 1.0, hi)
            ref_w = ref.weights / gamma(beta)
        else:
            ref = gauss_legendre(2 * n, lo, hi)
            ref_w = ref.weights * ref.nodes ** (beta - 1.0) / gamma(beta)
        here = fsum(w * exp(-s * t_worst)
                    for s, w in zip(exponents[sl], weights[sl]))
        there = fsum(w * exp(-s * t_worst) for s, w in zip(ref.nodes, ref_w))
        by_kind[kind] = by_kind.get(kind, 0.0) + abs(here - there)
    for kind, err in by_kind.items():
        if err > worst_err:
            worst_kind, worst_err = kind, err
    return worst_kind


def build_soe(beta: float, delta: float, horizon: float, eps: float,
              n_samples: int = 100_000, max_rounds: int = 8) -> SumOfExponentials:
    """Construct and certify an approximation of ``t**(-beta)`` on
    ``[delta, horizon]`` with absolute error at most ``eps``.

    If a certification round fails, the order of the panel group that
    dominates the error at the worst sample is increased by 25% and the
    construction is retried; after ``max_rounds`` failures a
    :class:`ConstructionError` carrying the achieved error is raised.
    """
    plan = plan_build(beta, delta, horizon, eps)
    ts = _sample_grid(delta, horizon, n_samples)
    achieved = np.inf
    for _ in range(max_rounds + 1):
        exponents, weights, groups = _assemble(beta, plan)
        err = _max_error(exponents, weights, beta, ts)
        if err <= eps:
            return SumOfExponentials(beta=beta, delta=delta, horizon=horizon,
                                     tolerance=eps, exponents=exponents,
                                     weights=weights, certified_error=err,
                                     build_plan=plan)
        achieved = min(achieved, err)
        values = _eval_grid(exponents, weights, ts)
        t_worst = float(ts[np.argmax(np.abs(values - ts ** (-beta)))])
        kind = _worst_group(beta, groups, exponents, weights, t_worst)
        if kind == "end":
            plan.n_end = max(plan.n_end + 1, ceil(1.25 * plan.n_end))
        elif kind == "small":
            plan.n_small = max(plan.n_small + 1, ceil(1.25 * plan.n_small))
        else:
            plan.n_large = max(plan.n_large + 1, ceil(1.25 * plan.n_large))
    raise ConstructionError(
        f"certification stuck at {achieved:.3e} > eps={eps:.3e} "
        f"after {max_rounds} retries", achieved_error=achieved)


def _merge_pair(s1, w1, s2, w2, t_star):
    """Single term matching the pair's value and slope at ``t_star``."""
    if s1 == s2:
        return s1, w1 + w2
    l1 = log(w1) - s1 * t_star
    l2 = log(w2) - s2 * t_star
    r = exp(l2 - l1)
    sm = (s1 + r * s2) / (1.0 + r)
    wm = w1 * exp((sm - s1) * t_star) * (1.0 + r)
    return sm, wm


def _greedy_coarsen(exponents, weights, beta, delta, horizon, eps_target,
                    accept_frac, n_grid):
    """Best-first merge/drop loop on a shared sample grid."""
    ts = _sample_grid(delta, horizon, n_grid)
    kern = ts ** (-beta)
    s = exponents.copy()
    w = weights.copy()
    term = np.exp(-np.multiply.outer(s, ts))
    residual = w @ term - kern
    alive = np.ones(len(s), dtype=bool)
    limit = accept_frac * eps_target
    while True:
        idx = np.flatnonzero(alive)
        best = None
        for k in range(len(idx) - 1):
            i, j = idx[k], idx[k + 1]
            s_gm = sqrt(s[i] * s[j]) if s[i] > 0.0 else 0.0
            t_star = min(max(delta, 1.0 / s_gm if s_gm > 0.0 else horizon), horizon)
            sm, wm = _merge_pair(s[i], w[i], s[j], w[j], t_star)
            delta_sum = wm * np.exp(-sm * ts) - w[i] * term[i] - w[j] * term[j]
            err = np.abs(residual + delta_sum).max()
            if best is None or err < best[0]:
                best = (err, i, j, sm, wm, delta_sum)
        for i in idx:
            delta_sum = -w[i] * term[i]
            err = np.abs(residual + delta_sum).max()
            if best is None or err < best[0]:
                best = (err, i, None, 0.0, 0.0, delta_sum)
        if best is None or best[0] > limit:
            break
        err, i, j, sm, wm, delta_sum = best
        residual = residual + delta_sum
        if j is None:
            alive[i] = False
        else:
            alive[j] = False
            s[i], w[i] = sm, wm
            term[i] = np.exp(-sm * ts)
    return s[alive], w[alive]


def _shrink_orders(beta, delta, horizon, eps_target, start_plan, frac, n_check):
    """Lower panel orders one at a time while certification stays below
    ``frac * eps_target``."""
    plan = SoeBuildPlan(**vars(start_plan))
    ts = _sample_grid(delta, horizon, n_check)
    exponents, weights, _ = _assemble(beta, plan)
    if _max_error(exponents, weights, beta, ts) > frac * eps_target:
        return exponents, weights
    improved = True
    while improved:
        improved = False
        for attr in ("n_end", "n_small", "n_large"):
            if getattr(plan, attr) <= 1:
                continue
            setattr(plan, attr, getattr(plan, attr) - 1)
            cand_e, cand_w, _ = _assemble(beta, plan)
            if _max_error(cand_e, cand_w, beta, ts) <= frac * eps_target:
                exponents, weights = cand_e, cand_w
                improved = True
            else:
                setattr(plan, attr, getattr(plan, attr) + 1)
    return exponents, weights


def reduce_soe(soe: SumOfExponentials, eps_target: float | None = None,
               n_grid: int = 20_000, final_samples: int = 100_000) -> SumOfExponentials:
    """Best-effort reduction of the term count, keeping the certified error
    within ``eps_target`` (default: the input tolerance).

    The input is never worsened: if no smaller certified representation is
    found, the input object is returned unchanged.
    """
    if eps_target is None:
        eps_target = soe.tolerance
    if eps_target < soe.tolerance:
        raise InputError("eps_target must not be tighter than the built tolerance")

    candidates = [(soe.exponents, soe.weights)]
    try:
        plan = soe.build_plan or plan_build(soe.beta, soe.delta, soe.horizon,
                                            soe.tolerance)
    except InputError:
        plan = None  # hand-built object outside the theorem's range
    if plan is not None:
        shrunk = _shrink_orders(soe.beta, soe.delta, soe.horizon, eps_target,
                                plan, frac=0.30, n_check=n_grid)
        if len(shrunk[0]) < len(soe.exponents):
            candidates.append(shrunk)
    start = min(candidates, key=lambda c: len(c[0]))

    ts_final = _sample_grid(soe.delta, soe.horizon, final_samples)
    for accept_frac in (0.96, 0.90, 0.75):
        s, w = _greedy_coarsen(start[0], start[1], soe.beta, soe.delta,
                               soe.horizon, eps_target, accept_frac, n_grid)
        if len(s) >= soe.n_exp:
            break
        err = _max_error(s, w, soe.beta, ts_final)
        if err <= eps_target:
            return SumOfExponentials(beta=soe.beta, delta=soe.delta,
                                     horizon=soe.horizon, tolerance=eps_target,
                                     exponents=s, weights=w,
                                     certified_error=err, build_plan=soe.build_plan)
    return soe


@lru_cache(maxsize=64)
def cached_soe(beta: float, delta: float, horizon: float, eps: float,
               reduce_terms: bool = False) -> SumOfExponentials:
    """Memoised build (plus optional reduction) for the solvers, which hit
    the same (kernel, step, horizon, tolerance) combinations repeatedly."""
    soe = build_soe(beta, delta, horizon, eps)
    if reduce_terms:
        soe = reduce_soe(soe)
    return soe


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def soe_to_json(soe: SumOfExponentials) -> str:
    """Serialise with 17 significant digits per float."""
    terms = ",\n    ".join(
        f'{{"s": {_fmt(s)}, "w": {_fmt(w)}}}'
        for s, w in zip(soe.exponents, soe.weights))
    return (
        "{\n"
        f'  "beta": {_fmt(soe.beta)},\n'
        f'  "delta": {_fmt(soe.delta)},\n'
        f'  "horizon": {_fmt(soe.horizon)},\n'
        f'  "tolerance": {_fmt(soe.tolerance)},\n'
        f'  "certified_error": {_fmt(soe.certified_error)},\n'
        f'  "terms": [\n    {terms}\n  ]\n'
        "}\n"
    )


def soe_from_json(text: str) -> SumOfExponentials:
    doc = json.loads(text)
    terms = doc["terms"]
    return SumOfExponentials(
        beta=doc["beta"], delta=doc["delta"], horizon=doc["horizon"],
        tolerance=doc["tolerance"],
        exponents=np.array([t["s"] for t in terms], dtype=float),
        weights=np.array([t["w"] for t in terms], dtype=float),
        certified_error=doc.get("certified_error", np.inf),
    )
