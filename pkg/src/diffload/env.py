"""Sequential grant/deny decision environment.

One episode handles the request queue of a single scenario: users are
visited in request order, one per step, and the action grants or denies the
user under the cursor. Transitions are deterministic. The episode ends when
every request has been handled or the grant cap is reached, at which point
all still-pending users are denied.

Because the per-user quality terms depend on the final grant count (through
batching and bandwidth sharing), rewards cannot be emitted during the
episode; :func:`assign_rewards` computes them once the final decision is
fixed, splitting the objective into per-step accuracy credits plus a
terminal correction so that the rewards sum exactly to the objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qoe import ContractError, Decision, DecisionEntry, e2e_latency, fitted_pai
from .scenario import Scenario, ValidationError
from .split import optimal_split

PENDING = 0
IN_PROGRESS = 1
GRANTED = 2
DENIED = 3

N_GLOBALS = 6
FEATURES_PER_USER = 4  # alpha, per-step local latency, request slot, status token


@dataclass(frozen=True)
class EnvState:
    """Complete environment state, in user processing order.

    Static per-user elements (alpha, per-step local latency, request slot)
    never change during an episode; the status codes and the three counters
    are the dynamic part. ``cursor`` indexes the in-progress user, -1 once
    the episode has terminated.
    """

    alphas: tuple[float, ...]
    step_latencies: tuple[float, ...]
    request_slots: tuple[int, ...]
    statuses: tuple[int, ...]
    user_ids: tuple[int, ...]
    b_max: int
    k_hat_e: float  # edge step slope divided by GPU count
    h_e: float
    slots_per_interval: int
    pending: int
    granted: int
    denied: int
    cursor: int

    @property
    def done(self) -> bool:
        return self.cursor < 0

    @property
    def user_count(self) -> int:
        return len(self.alphas)


def processing_order(scenario: Scenario) -> list[int]:
    """User indices sorted by request slot, ties by id (FIFO reading)."""
    return sorted(range(scenario.user_count),
                  key=lambda i: (scenario.users[i].request_slot, scenario.users[i].id))


def reset(scenario: Scenario) -> EnvState:
    if scenario.user_count == 0:
        raise ValidationError("users: scenario has no users")
    if scenario.edge.b_max < 1:
        raise ValidationError("b_max: the decision environment needs a grant capacity >= 1")
    order = processing_order(scenario)
    users = [scenario.users[i] for i in order]
    statuses = [PENDING] * len(users)
    statuses[0] = IN_PROGRESS
    return EnvState(
        alphas=tuple(u.alpha for u in users),
        step_latencies=tuple(u.device.step_slope + u.device.step_intercept for u in users),
        request_slots=tuple(u.request_slot for u in users),
        statuses=tuple(statuses),
        user_ids=tuple(u.id for u in users),
        b_max=scenario.edge.b_max,
        k_hat_e=scenario.edge.device.step_slope / scenario.edge.gpus,
        h_e=scenario.edge.device.step_intercept,
        slots_per_interval=scenario.edge.slots_per_interval,
        pending=len(users) - 1,
        granted=0,
        denied=0,
        cursor=0,
    )


def step(state: EnvState, action: int) -> tuple[EnvState, bool]:
    """Apply a grant (1) / deny (0) to the in-progress user. Pure function."""
    if state.done:
        raise ContractError("step on a terminal state")
    if action not in (0, 1):
        raise ContractError(f"action must be 0 or 1, got {action}")
    statuses = list(state.statuses)
    statuses[state.cursor] = GRANTED if action == 1 else DENIED
    granted = state.granted + (1 if action == 1 else 0)
    denied = state.denied + (0 if action == 1 else 1)
    pending = state.pending

    if granted == state.b_max:
        # Grant cap reached: everything still pending is denied outright.
        for i, s in enumerate(statuses):
            if s == PENDING:
                statuses[i] = DENIED
                denied += 1
                pending -= 1
        cursor = -1
    elif pending == 0:
        cursor = -1
    else:
        cursor = statuses.index(PENDING)
        statuses[cursor] = IN_PROGRESS
        pending -= 1

    next_state = EnvState(
        alphas=state.alphas,
        step_latencies=state.step_latencies,
        request_slots=state.request_slots,
        statuses=tuple(statuses),
        user_ids=state.user_ids,
        b_max=state.b_max,
        k_hat_e=state.k_hat_e,
        h_e=state.h_e,
        slots_per_interval=state.slots_per_interval,
        pending=pending,
        granted=granted,
        denied=denied,
        cursor=cursor,
    )
    return next_state, next_state.done


def encode(state: EnvState, i_max: int, alpha_scale: float = 1.0) -> np.ndarray:
    """Feature vector: cyclically shifted local sub-states plus globals.

    Local sub-states are rotated so the in-progress user sits first, then
    padded to ``i_max`` users with denied-status filler. Status codes stay
    integer-valued tokens for the embedding lookup; the continuous statics
    are normalized to keep inputs order-one.
    """
    n = state.user_count
    if n > i_max:
        raise ContractError(f"state has {n} users, encoder capacity is {i_max}")
    out = np.zeros(i_max * FEATURES_PER_USER + N_GLOBALS)
    start = state.cursor if state.cursor >= 0 else 0
    for pos in range(n):
        i = (start + pos) % n
        base = pos * FEATURES_PER_USER
        out[base] = state.alphas[i] / alpha_scale
        out[base + 1] = state.step_latencies[i]
        out[base + 2] = state.request_slots[i] / state.slots_per_interval
        out[base + 3] = state.statuses[i]
    for pos in range(n, i_max):
        out[pos * FEATURES_PER_USER + 3] = DENIED  # filler slots read as already-denied
    g = i_max * FEATURES_PER_USER
    out[g] = state.b_max / i_max
    out[g + 1] = state.k_hat_e
    out[g + 2] = state.h_e
    out[g + 3] = state.pending / i_max
    out[g + 4] = state.granted / i_max
    out[g + 5] = state.denied / i_max
    return out


@dataclass
class Transition:
    features: np.ndarray
    action: int
    next_features: np.ndarray
    done: bool


@dataclass
class EpisodeRecord:
    transitions: list[Transition] = field(default_factory=list)
    handled_order: list[int] = field(default_factory=list)  # user ids, one per step
    final_state: EnvState | None = None
    decision: Decision | None = None
    rewards: list[float] | None = None

    @property
    def complete(self) -> bool:
        return self.final_state is not None and self.final_state.done


def run_episode(scenario: Scenario, policy, i_max: int,
                alpha_scale: float = 1.0) -> EpisodeRecord:
    """Roll out one episode; `policy(features) -> action` drives the choices."""
    record = EpisodeRecord()
    state = reset(scenario)
    features = encode(state, i_max, alpha_scale)
    while not state.done:
        action = int(policy(features))
        record.handled_order.append(state.user_ids[state.cursor])
        state, done = step(state, action)
        next_features = encode(state, i_max, alpha_scale)
        record.transitions.append(Transition(features, action, next_features, done))
        features = next_features
    record.final_state = state
    return record


def decision_from_state(state: EnvState, scenario: Scenario) -> Decision:
    """Final grant/deny vector with splits from the inner solver."""
    if not state.done:
        raise ContractError("episode has not terminated")
    granted_ids = {state.user_ids[i] for i, s in enumerate(state.statuses) if s == GRANTED}
    m = len(granted_ids)
    entries = []
    for user in scenario.users:
        if user.id in granted_ids:
            res = optimal_split(user, m, scenario.edge, scenario.pai)
            entries.append(DecisionEntry(granted=True, split=res.split))
        else:
            entries.append(DecisionEntry(granted=False, split=scenario.pai.n_total))
    return Decision(entries=entries)


def assign_rewards(episode: EpisodeRecord, scenario: Scenario) -> list[float]:
    """Per-step rewards that sum exactly to the objective of the final decision.

    Each non-terminal step earns the handled user's accuracy credit
    alpha * F(n*); the terminal step earns the accuracy credits of the
    terminal user plus all auto-denied remainders, minus the total latency
    of everyone. Also fills ``episode.decision`` and ``episode.rewards``.
    """
    if not episode.complete:
        raise ContractError("cannot assign rewards before the episode completes")
    state = episode.final_state
    decision = decision_from_state(state, scenario)
    m = decision.grant_count
    pai_terms = {}
    latency_total = 0.0
    for user, entry in zip(scenario.users, decision.entries):
        pai_terms[user.id] = user.alpha * fitted_pai(entry.split, scenario.pai)
        latency_total += e2e_latency(user, entry, m, scenario.edge,
                                     scenario.pai.n_total).total

    rewards = []
    handled = episode.handled_order
    for t, user_id in enumerate(handled):
        if t < len(handled) - 1:
            rewards.append(pai_terms[user_id])
        else:
            # Terminal step: this user's credit, plus users never visited
            # because the cap auto-denied them, minus all latency.
            visited = set(handled[:-1])
            tail = sum(v for uid, v in pai_terms.items() if uid not in visited)
            rewards.append(tail - latency_total)
    episode.decision = decision
    episode.rewards = rewards
    return rewards
