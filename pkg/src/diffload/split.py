"""Exact solver for the per-user split-point problem.

Given a grant count m, a granted user's quality-of-experience as a function
of the split point n is

    O(n) = alpha * F(n) - (L_local - L_edge(m, G)) * n + const,

which is strictly concave on [n_min, n_total] because F > 0.5 there. The
derivative of the accuracy term is g(n) = alpha * a_f * F(n) * (1 - F(n)),
strictly decreasing on the domain, so the stationarity condition
g(n) = L_local - L_edge has at most one root and bisection suffices. The
integer optimum is floor or ceil of the continuous root by concavity.
"""

from __future__ import annotations

from dataclasses import dataclass

from .qoe import DecisionEntry, fitted_pai, step_latency_edge, step_latency_local, user_qoe
from .scenario import EdgeConfig, PaiParams, UserRequest

LOCAL_DOMINATES = "local-dominates"
PAI_SATURATED = "pai-saturated"
LATENCY_SATURATED = "latency-saturated"
INTERIOR_ROOT = "interior-root"

ROOT_TOL = 1e-6  # bisection interval width, in steps


@dataclass(frozen=True)
class SplitResult:
    split: int
    continuous_root: float | None
    case: str
    inner_value: float  # the user's QoE at `split` given the grant count


def marginal_pai_rate(n: float, alpha: float, pai: PaiParams) -> float:
    """Marginal accuracy gain per extra local step: alpha * a_f * F(n)(1 - F(n))."""
    f = fitted_pai(n, pai)
    return alpha * pai.a_f * f * (1.0 - f)


def _bisect_root(alpha: float, delta: float, pai: PaiParams) -> float:
    # g is strictly decreasing on [n_min, n_total]; g(n_min) > delta > g(n_total)
    # is guaranteed by the caller, so the root is interior and bracketed.
    lo, hi = float(pai.n_min), float(pai.n_total)
    while hi - lo > ROOT_TOL:
        mid = 0.5 * (lo + hi)
        if marginal_pai_rate(mid, alpha, pai) > delta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def optimal_split(user: UserRequest, granted_count: int, edge: EdgeConfig,
                  pai: PaiParams) -> SplitResult:
    """Optimal split point for one granted user given the round's grant count."""
    if granted_count < 1:
        raise ValueError(f"granted_count must be >= 1, got {granted_count}")
    local = step_latency_local(user.device)
    at_edge = step_latency_edge(edge.device, granted_count, edge.gpus)
    delta = local - at_edge

    def value_at(n: int) -> float:
        return user_qoe(user, DecisionEntry(granted=True, split=n), granted_count, edge, pai)

    if delta <= 0:
        # Offloading a step is not faster than running it locally: keep all
        # steps on the device.
        n = pai.n_total
        return SplitResult(split=n, continuous_root=None, case=LOCAL_DOMINATES,
                           inner_value=value_at(n))
    if marginal_pai_rate(pai.n_total, user.alpha, pai) >= delta:
        n = pai.n_total
        return SplitResult(split=n, continuous_root=None, case=PAI_SATURATED,
                           inner_value=value_at(n))
    if marginal_pai_rate(pai.n_min, user.alpha, pai) <= delta:
        n = pai.n_min
        return SplitResult(split=n, continuous_root=None, case=LATENCY_SATURATED,
                           inner_value=value_at(n))

    root = _bisect_root(user.alpha, delta, pai)
    lo = max(pai.n_min, min(pai.n_total, int(root)))
    hi = max(pai.n_min, min(pai.n_total, lo + 1))
    v_lo, v_hi = value_at(lo), value_at(hi)
    if v_hi > v_lo:
        n, v = hi, v_hi
    else:
        n, v = lo, v_lo
    return SplitResult(split=n, continuous_root=root, case=INTERIOR_ROOT, inner_value=v)
