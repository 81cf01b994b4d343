"""Reference solvers: simple policies, a genetic algorithm, branch & bound,
and two exact oracles.

All solvers return a feasible :class:`Decision` and are deterministic given
their seed. The count-enumeration oracle is the ground truth used across
the test suite: every latency coupling between users flows through the
grant count m alone, so enumerating m and greedily picking the m users with
the largest grant-vs-deny gain is exact, in O(B_max * I log I).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import processing_order
from .qoe import Decision, DecisionEntry, fitted_pai, objective, step_latency_edge, step_latency_local, user_qoe
from .scenario import Scenario
from .split import optimal_split


class SplitTable:
    """Lazy per-(user, grant count) cache of optimal splits and values."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._granted: dict[tuple[int, int], tuple[int, float]] = {}
        self._denied: dict[int, float] = {}

    def granted(self, user_idx: int, m: int) -> tuple[int, float]:
        """(optimal split, QoE) for user granted within a round of m grants."""
        key = (user_idx, m)
        if key not in self._granted:
            res = optimal_split(self.scenario.users[user_idx], m,
                                self.scenario.edge, self.scenario.pai)
            self._granted[key] = (res.split, res.inner_value)
        return self._granted[key]

    def denied(self, user_idx: int) -> float:
        if user_idx not in self._denied:
            user = self.scenario.users[user_idx]
            entry = DecisionEntry(granted=False, split=self.scenario.pai.n_total)
            self._denied[user_idx] = user_qoe(user, entry, 0, self.scenario.edge,
                                              self.scenario.pai)
        return self._denied[user_idx]

    def decision(self, grants) -> Decision:
        m = int(sum(bool(g) for g in grants))
        entries = []
        for i, g in enumerate(grants):
            if g:
                split, _ = self.granted(i, m)
                entries.append(DecisionEntry(granted=True, split=split))
            else:
                entries.append(DecisionEntry(granted=False, split=self.scenario.pai.n_total))
        return Decision(entries=entries)

    def value(self, grants) -> float:
        m = int(sum(bool(g) for g in grants))
        total = 0.0
        for i, g in enumerate(grants):
            total += self.granted(i, m)[1] if g else self.denied(i)
        return total


def _first_in_request_order(scenario: Scenario, count: int) -> set[int]:
    return set(processing_order(scenario)[:count])


def baseline_all_offload_opt(scenario: Scenario) -> Decision:
    """Grant everyone up to capacity in request order, with optimized splits."""
    m = min(scenario.user_count, scenario.edge.b_max)
    chosen = _first_in_request_order(scenario, m)
    table = SplitTable(scenario)
    return table.decision([i in chosen for i in range(scenario.user_count)])


def baseline_all_offload_fixed(scenario: Scenario) -> Decision:
    """Grant everyone up to capacity in request order, offloading the maximum."""
    m = min(scenario.user_count, scenario.edge.b_max)
    chosen = _first_in_request_order(scenario, m)
    n_min, n_total = scenario.pai.n_min, scenario.pai.n_total
    entries = [
        DecisionEntry(granted=True, split=n_min) if i in chosen
        else DecisionEntry(granted=False, split=n_total)
        for i in range(scenario.user_count)
    ]
    return Decision(entries=entries)


def baseline_all_local(scenario: Scenario) -> Decision:
    n_total = scenario.pai.n_total
    return Decision(entries=[DecisionEntry(granted=False, split=n_total)
                             for _ in scenario.users])


# ---------------------------------------------------------------------------
# Genetic algorithm
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaConfig:
    population: int = 100
    iterations: int = 200
    tournament: int = 3
    crossover_prob: float = 0.5
    mutation_rate: float | None = None  # default 1 / user_count
    elitism: int = 2
    seed: int = 0  # used when no generator is passed to solve_ga

    def __post_init__(self):
        if self.population < 2:
            raise ValueError(f"population must be >= 2, got {self.population}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


def _repair(bits: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    excess = int(bits.sum()) - cap
    if excess > 0:
        granted_idx = np.flatnonzero(bits)
        drop = rng.choice(granted_idx, size=excess, replace=False)
        bits = bits.copy()
        bits[drop] = 0
    return bits


def solve_ga(scenario: Scenario, cfg: GaConfig | None = None,
             rng: np.random.Generator | int | None = None,
             history: list | None = None) -> Decision:
    """Grant-bit chromosomes with repair; fitness is the full objective.

    When given, `history` collects the best-ever fitness after each
    generation (non-decreasing thanks to elitism).
    """
    cfg = cfg if cfg is not None else GaConfig()
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(cfg.seed if rng is None else rng)
    n = scenario.user_count
    cap = min(n, scenario.edge.b_max)
    mutation = cfg.mutation_rate if cfg.mutation_rate is not None else 1.0 / n
    table = SplitTable(scenario)
    fitness_cache: dict[bytes, float] = {}

    def fitness(bits: np.ndarray) -> float:
        key = bits.tobytes()
        if key not in fitness_cache:
            fitness_cache[key] = table.value(bits.astype(bool))
        return fitness_cache[key]

    pop = [_repair((rng.random(n) < 0.5).astype(np.int8), cap, rng)
           for _ in range(cfg.population)]
    fits = [fitness(c) for c in pop]
    best_idx = int(np.argmax(fits))
    best, best_fit = pop[best_idx].copy(), fits[best_idx]

    for _ in range(cfg.iterations):
        ranked = sorted(range(len(pop)), key=lambda i: fits[i], reverse=True)
        nxt = [pop[i].copy() for i in ranked[:cfg.elitism]]
        while len(nxt) < cfg.population:
            contenders = rng.integers(0, cfg.population, size=cfg.tournament)
            p1 = pop[max(contenders, key=lambda i: fits[i])]
            contenders = rng.integers(0, cfg.population, size=cfg.tournament)
            p2 = pop[max(contenders, key=lambda i: fits[i])]
            if rng.random() < cfg.crossover_prob:
                mask = rng.random(n) < 0.5
                child = np.where(mask, p1, p2).astype(np.int8)
            else:
                child = p1.copy()
            flips = rng.random(n) < mutation
            child = np.where(flips, 1 - child, child).astype(np.int8)
            nxt.append(_repair(child, cap, rng))
        pop = nxt
        fits = [fitness(c) for c in pop]
        gen_best = int(np.argmax(fits))
        if fits[gen_best] > best_fit:
            best, best_fit = pop[gen_best].copy(), fits[gen_best]
        if history is not None:
            history.append(best_fit)

    return table.decision(best.astype(bool))


# ---------------------------------------------------------------------------
# Branch & bound on the fixed-split reduction
# ---------------------------------------------------------------------------

@dataclass
class BnbStats:
    nodes: int = 0
    incumbent: float = float("-inf")


def _fixed_split_tables(scenario: Scenario, split: int):
    """Per-user deny values and granted values indexed by grant count."""
    edge, pai = scenario.edge, scenario.pai
    cap = min(scenario.user_count, edge.b_max)
    f_grant = fitted_pai(split, pai)
    f_deny = fitted_pai(pai.n_total, pai)
    deny = np.empty(scenario.user_count)
    grant = np.empty((scenario.user_count, cap + 1))  # column m unused for m=0
    grant[:, 0] = -np.inf
    for i, user in enumerate(scenario.users):
        rtt = (edge.slots_per_interval - user.request_slot) * edge.slot_duration
        local_step = step_latency_local(user.device)
        deny[i] = user.alpha * f_deny - rtt - pai.n_total * local_step
        for m in range(1, cap + 1):
            transfer = (user.prompt_bits + user.intermediate_bits) * m / (
                edge.spectral_efficiency * edge.bandwidth_hz)
            edge_c = (pai.n_total - split) * step_latency_edge(edge.device, m, edge.gpus)
            grant[i, m] = (user.alpha * f_grant - rtt - transfer - edge_c
                           - split * local_step)
    return deny, grant, cap


def solve_bnb(scenario: Scenario, stats: BnbStats | None = None) -> Decision:
    """Exact maximizer of the fixed-split assignment via depth-first search.

    Splits are pinned at n_min for granted users. The bound at a node with g
    committed grants evaluates committed grants at m = max(g, 1) and lets each
    undecided user take the better of denial and a grant at m = g + 1; both
    are optimistic because the granted value is non-increasing in m.
    """
    stats = stats if stats is not None else BnbStats()
    n = scenario.user_count
    order = processing_order(scenario)
    deny, grant, cap = _fixed_split_tables(scenario, scenario.pai.n_min)
    d = deny[order]
    g = grant[order]

    # Suffix of max(deny, grant at m) for the optimistic completion, per m.
    best_if = np.maximum(d[:, None], g[:, 1:])  # (n, cap) columns are m = 1..cap
    suffix_opt = np.zeros((n + 1, cap + 1))
    suffix_deny = np.zeros(n + 1)
    for i in range(n - 1, -1, -1):
        suffix_deny[i] = suffix_deny[i + 1] + d[i]
        for m in range(1, cap + 1):
            suffix_opt[i, m] = suffix_opt[i + 1, m] + best_if[i, m - 1]

    best_value = float("-inf")
    best_grants: np.ndarray | None = None
    chosen = np.zeros(n, dtype=bool)

    def dfs(depth: int, grants_so_far: int) -> None:
        nonlocal best_value, best_grants
        stats.nodes += 1
        if depth == n:
            m = grants_so_far
            value = sum(g[i, m] if chosen[i] else d[i] for i in range(n))
            if value > best_value:
                best_value = value
                best_grants = chosen.copy()
            return
        # Optimistic bound: committed grants at their current (minimal) count,
        # undecided users at their individually best handling.
        if grants_so_far > 0:
            committed = sum(g[i, grants_so_far] if chosen[i] else d[i]
                            for i in range(depth))
        else:
            committed = sum(d[i] for i in range(depth) if not chosen[i])
        if grants_so_far < cap:
            tail = suffix_opt[depth, grants_so_far + 1]
        else:
            tail = suffix_deny[depth]
        if committed + tail <= best_value:
            return
        if grants_so_far < cap:
            chosen[depth] = True
            dfs(depth + 1, grants_so_far + 1)
        chosen[depth] = False
        dfs(depth + 1, grants_so_far)

    dfs(0, 0)
    stats.incumbent = best_value
    assert best_grants is not None
    grants = np.zeros(n, dtype=bool)
    grants[np.asarray(order)] = best_grants  # map back to user-id order
    n_min, n_total = scenario.pai.n_min, scenario.pai.n_total
    entries = [DecisionEntry(granted=bool(x), split=n_min if x else n_total)
               for x in grants]
    return Decision(entries=entries)


def fixed_split_value(scenario: Scenario, grants, split: int) -> float:
    """Objective with all granted splits pinned; used by fixed-split oracles."""
    deny, grant, _ = _fixed_split_tables(scenario, split)
    m = int(sum(bool(x) for x in grants))
    total = 0.0
    for i, x in enumerate(grants):
        total += grant[i, m] if x else deny[i]
    return total


# ---------------------------------------------------------------------------
# Exact oracles
# ---------------------------------------------------------------------------

def solve_count_oracle(scenario: Scenario) -> Decision:
    """Exact optimum by enumerating the grant count.

    For each candidate m, every user's gain from being granted (at optimal
    split, in a round of m) over being denied is independent of who else is
    granted, so the best set of exactly m grants is the top-m gains.
    """
    n = scenario.user_count
    cap = min(n, scenario.edge.b_max)
    table = SplitTable(scenario)
    deny_total = sum(table.denied(i) for i in range(n))
    best_value = deny_total
    best_set: set[int] = set()
    for m in range(1, cap + 1):
        gains = sorted(((table.granted(i, m)[1] - table.denied(i), i) for i in range(n)),
                       key=lambda t: (-t[0], t[1]))
        chosen = gains[:m]
        value = deny_total + sum(gain for gain, _ in chosen)
        if value > best_value:
            best_value = value
            best_set = {i for _, i in chosen}
    return table.decision([i in best_set for i in range(n)])


EXHAUSTIVE_LIMIT = 15


def solve_exhaustive(scenario: Scenario) -> Decision:
    """Ground truth by enumerating every feasible grant pattern. I <= 15 only."""
    n = scenario.user_count
    if n > EXHAUSTIVE_LIMIT:
        raise ValueError(
            f"exhaustive enumeration refused for {n} users (limit {EXHAUSTIVE_LIMIT})")
    cap = min(n, scenario.edge.b_max)
    table = SplitTable(scenario)
    best_value = float("-inf")
    best_grants = [False] * n
    for mask in range(1 << n):
        if mask.bit_count() > cap:
            continue
        grants = [(mask >> i) & 1 == 1 for i in range(n)]
        value = table.value(grants)
        if value > best_value:
            best_value = value
            best_grants = grants
    return table.decision(best_grants)


SOLVERS = {
    "b1": lambda s, rng=None: baseline_all_offload_opt(s),
    "b2": lambda s, rng=None: baseline_all_offload_fixed(s),
    "b3": lambda s, rng=None: baseline_all_local(s),
    "ga": lambda s, rng=None: solve_ga(s, rng=rng),
    "bnb": lambda s, rng=None: solve_bnb(s),
    "oracle": lambda s, rng=None: solve_count_oracle(s),
    "exhaustive": lambda s, rng=None: solve_exhaustive(s),
}
