"""Fixed-split quadratic form of the grant/deny assignment problem.

With every granted user's split pinned to a common value, the objective
becomes a binary quadratic assignment over x[i, j], j in {deny, grant}:

    sum_ij D[i, j] x[i, j]  -  sum_{i'j'ij} A[i', j', i, j] x[i', j'] x[i, j]

where the quadratic couplings A collect the transmission and edge-compute
terms that scale with the grant count, and are nonzero only on grant-grant
pairs. Because x is binary (x^2 = x), the linear term can be folded onto
the diagonal of A, leaving a pure quadratic form; :func:`absorb_linear`
performs that fold and :func:`eval_quadratic` evaluates either form.

Used by the branch-and-bound baseline and as an independent cross-check of
the direct objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .qoe import ContractError, fitted_pai, step_latency_local
from .scenario import Scenario

DENY = 0
GRANT = 1


@dataclass
class QuadraticForm:
    linear: np.ndarray     # (I, 2): D[i, j]
    quadratic: np.ndarray  # (I, 2, I, 2): A[i', j', i, j] (or the folded form)
    fixed_split: int
    absorbed: bool = False


def build_quadratic(scenario: Scenario, fixed_split: int) -> QuadraticForm:
    """Coefficients of the assignment form with all granted splits at `fixed_split`."""
    pai = scenario.pai
    edge = scenario.edge
    if not pai.n_min <= fixed_split <= pai.n_total:
        raise ContractError(
            f"fixed_split {fixed_split} outside [{pai.n_min}, {pai.n_total}]")
    n_users = scenario.user_count
    n = pai.n_total
    f_deny = fitted_pai(n, pai)
    f_grant = fitted_pai(fixed_split, pai)

    linear = np.zeros((n_users, 2))
    quad = np.zeros((n_users, 2, n_users, 2))
    cap = edge.spectral_efficiency * edge.bandwidth_hz
    edge_cross = (n - fixed_split) * edge.device.step_slope / edge.gpus

    for i, user in enumerate(scenario.users):
        rtt = (edge.slots_per_interval - user.request_slot) * edge.slot_duration
        local_step = step_latency_local(user.device)
        # Accuracy term
        c_deny = user.alpha * f_deny
        c_grant = user.alpha * f_grant
        # Grant-count-independent latency pieces
        d_local_deny = n * local_step
        d_local_grant = fixed_split * local_step
        d_edge_grant = (n - fixed_split) * edge.device.step_intercept
        linear[i, DENY] = c_deny - (d_local_deny + 0.0 + rtt)
        linear[i, GRANT] = c_grant - (d_local_grant + d_edge_grant + rtt)
        # Grant-grant couplings: user i's transfer and per-batch edge compute
        # accrue once per granted user i' (including i' = i).
        transfer = (user.prompt_bits + user.intermediate_bits) / cap
        for j in range(n_users):
            quad[j, GRANT, i, GRANT] = transfer + edge_cross

    return QuadraticForm(linear=linear, quadratic=quad, fixed_split=fixed_split)


def absorb_linear(qf: QuadraticForm) -> QuadraticForm:
    """Fold the linear term onto the quadratic diagonal; valid for binary x."""
    if qf.absorbed:
        raise ContractError("quadratic form already absorbed")
    n_users = qf.linear.shape[0]
    folded = -qf.quadratic.copy()
    for i in range(n_users):
        for j in range(2):
            folded[i, j, i, j] = qf.linear[i, j] - qf.quadratic[i, j, i, j]
    return QuadraticForm(linear=np.zeros_like(qf.linear), quadratic=folded,
                         fixed_split=qf.fixed_split, absorbed=True)


def eval_quadratic(qf: QuadraticForm, grants) -> float:
    """Evaluate the form on a grant/deny vector (one handling per user)."""
    n_users = qf.linear.shape[0]
    if len(grants) != n_users:
        raise ContractError(f"expected {n_users} grant flags, got {len(grants)}")
    x = np.zeros((n_users, 2))
    for i, g in enumerate(grants):
        x[i, GRANT if g else DENY] = 1.0
    flat = x.reshape(-1)
    quad_term = flat @ qf.quadratic.reshape(2 * n_users, 2 * n_users) @ flat
    if qf.absorbed:
        return float(quad_term)
    return float((qf.linear * x).sum() - quad_term)


def export_quadratic(qf: QuadraticForm, path: str | Path) -> None:
    """Write the form as JSON (dense linear part, sparse quadratic entries)."""
    entries = []
    nz = np.argwhere(qf.quadratic != 0.0)
    for idx in nz:
        i2, j2, i1, j1 = (int(v) for v in idx)
        entries.append([i2, j2, i1, j1, float(qf.quadratic[i2, j2, i1, j1])])
    obj = {
        "fixed_split": qf.fixed_split,
        "absorbed": qf.absorbed,
        "handlings": ["deny", "grant"],
        "linear": qf.linear.tolist(),
        "quadratic": entries,
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")
