"""Training loop: hybrid exploration, stratified prioritized replay, target net.

Rewards are only known once an episode's grant count is fixed, so each
episode is rolled out in full, its rewards are back-filled, and only then do
its transitions enter the replay buffer. Gradient steps run at a fixed
ratio to environment steps. Exploration anneals per environment step: the
epsilon gate decides between Boltzmann sampling and the greedy action, and
both epsilon and the Boltzmann temperature decay linearly over the budget.

Everything is driven by one seeded generator, so a fixed seed reproduces
the learning curve and the final weights bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..env import EpisodeRecord, Transition, assign_rewards, decision_from_state, encode, reset, run_episode, step
from ..qoe import ContractError, Decision, all_local_decision
from ..scenario import EdgeConfig, GeneratorConfig, PaiParams, Scenario, ValidationError, alpha_band, generate_scenario
from .network import Adam, QNetwork
from .replay import ReplayBuffer

SCOPES = ("general", "gpu", "specific")


@dataclass(frozen=True)
class TrainHyper:
    lr: float = 1e-4
    batch_size: int = 128
    terminal_quota: int = 16          # terminal samples per batch (1:7 ratio)
    target_sync: int = 2000           # train steps between hard target copies
    eps_start: float = 0.5
    eps_end: float = 0.001
    tau_start: float = 5.0
    tau_end: float = 0.01
    priority_exponent: float = 0.7
    is_exponent: float = 0.3
    priority_offset: float = 2e-5
    gamma: float = 1.0
    reward_scale: float = 0.1
    capacity: int = 400_000
    episodes: int = 4000
    train_every: float = 2            # env steps per gradient step; < 1 replays harder
    explore_steps: int | None = None  # env steps to anneal over; default 80% of budget

    def __post_init__(self):
        if self.episodes < 1:
            raise ValidationError(f"episodes: must be >= 1, got {self.episodes}")
        for name in ("lr", "batch_size", "target_sync", "tau_start", "tau_end",
                     "priority_exponent", "priority_offset", "reward_scale",
                     "capacity", "train_every"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name}: must be positive")
        if not 0 <= self.eps_end <= self.eps_start <= 1:
            raise ValidationError("eps schedule must satisfy 0 <= end <= start <= 1")
        if self.tau_end > self.tau_start:
            raise ValidationError("tau schedule must be non-increasing")
        if not 0 < self.terminal_quota < self.batch_size:
            raise ValidationError("terminal_quota must be in (0, batch_size)")


def linear_schedule(start: float, end: float, t: int, horizon: int) -> float:
    if horizon <= 0 or t >= horizon:
        return end
    return start + (end - start) * (t / horizon)


def greedy_action(q) -> int:
    # Exact tie resolves to deny: conservative toward edge capacity and
    # required for reproducible decisions.
    return int(q[1] > q[0])


def select_action(net: QNetwork, features: np.ndarray, eps: float, tau: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-gated Boltzmann exploration around the greedy policy."""
    q = net.forward(features)
    if rng.uniform() < eps:
        logits = (q - q.max()) / tau
        probs = np.exp(logits)
        probs /= probs.sum()
        return int(rng.choice(2, p=probs))
    return greedy_action(q)


def td_targets(rewards: np.ndarray, next_features: np.ndarray, dones: np.ndarray,
               target_net: QNetwork, gamma: float) -> np.ndarray:
    """One-step targets; terminal transitions do not bootstrap."""
    y = rewards.astype(float).copy()
    live = ~dones
    if live.any():
        q_next = target_net.forward(next_features[live])
        y[live] += gamma * q_next.max(axis=1)
    return y


def train_step(net: QNetwork, target_net: QNetwork, adam: Adam,
               buffer: ReplayBuffer, hyper: TrainHyper,
               rng: np.random.Generator) -> float | None:
    """One stratified PER update. Returns the loss, or None if the buffer is light."""
    if not buffer.ready(hyper.batch_size, hyper.terminal_quota):
        return None
    sample = buffer.sample(hyper.batch_size, hyper.terminal_quota, rng)
    feats = np.stack([item[0] for item in sample.items])
    actions = np.array([item[1] for item in sample.items])
    rewards = np.array([item[2] for item in sample.items])
    next_feats = np.stack([item[3] for item in sample.items])
    dones = np.array([item[4] for item in sample.items], dtype=bool)

    y = td_targets(rewards, next_feats, dones, target_net, hyper.gamma)
    q, cache = net.forward_cached(feats)
    rows = np.arange(len(actions))
    td = y - q[rows, actions]
    loss = float(np.mean(sample.weights * td * td))
    dq = np.zeros_like(q)
    dq[rows, actions] = -2.0 * sample.weights * td / len(actions)
    adam.step(net.backward(cache, dq))
    buffer.update_priorities(sample, td)
    return loss


def _derive(seed: int, *key: int) -> tuple[np.random.Generator, int]:
    ss = np.random.SeedSequence((seed, *key))
    pick, scen = ss.spawn(2)
    return np.random.default_rng(pick), int(scen.generate_state(1)[0])


@dataclass
class ScenarioSource:
    """Seeded episode-to-scenario mapping for one training scope.

    general: per episode, redraw the user count, the edge GPU count, and the
      user population from a cycled pool of seeds.
    gpu: as general but with the edge GPU count held at the base config.
    specific: one fixed scenario for every episode.
    """

    scope: str
    generator: GeneratorConfig
    edge: EdgeConfig
    pai: PaiParams
    seed: int
    seed_pool: int = 2000
    gpu_choices: tuple[int, ...] = (2, 4, 8, 16)
    user_range: tuple[int, int] = (10, 20)
    fixed_scenario: Scenario | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ValidationError(f"scope: must be one of {SCOPES}, got {self.scope!r}")
        if self.scope == "specific":
            self.seed_pool = 1
        if self.seed_pool < 1:
            raise ValidationError(f"seed_pool: must be >= 1, got {self.seed_pool}")
        if self.user_range[0] > self.user_range[1] or self.user_range[0] < 1:
            raise ValidationError(f"user_range: invalid {self.user_range}")

    @property
    def i_max(self) -> int:
        if self.scope == "specific":
            if self.fixed_scenario is not None:
                return self.fixed_scenario.user_count
            return self.generator.user_count
        return self.user_range[1]

    def alpha_scale(self) -> float:
        """Normalization constant for the alpha feature, fixed per policy."""
        if self.scope == "specific" and self.fixed_scenario is not None:
            return max(u.alpha for u in self.fixed_scenario.users)
        gpus = max(self.gpu_choices) if self.scope == "general" else self.edge.gpus
        edge = replace(self.edge, gpus=gpus)
        bands = [alpha_band(dev, self.generator, edge, self.pai)
                 for dev, _ in self.generator.device_catalog]
        return max(hi for _, hi, _ in bands)

    def scenario_for_episode(self, episode: int) -> Scenario:
        if self.scope == "specific" and self.fixed_scenario is not None:
            return self.fixed_scenario
        key = episode % self.seed_pool
        if key in self._cache:
            return self._cache[key]
        pick_rng, scen_seed = _derive(self.seed, key)
        cfg, edge = self.generator, self.edge
        if self.scope in ("general", "gpu"):
            users = int(pick_rng.integers(self.user_range[0], self.user_range[1] + 1))
            cfg = replace(cfg, user_count=users)
        if self.scope == "general":
            edge = replace(edge, gpus=int(pick_rng.choice(self.gpu_choices)))
        scenario = generate_scenario(scen_seed, cfg, edge, self.pai)
        self._cache[key] = scenario
        return scenario


@dataclass
class TrainedPolicy:
    i_max: int
    hidden: tuple[int, ...]
    params: dict[str, np.ndarray]
    alpha_scale: float
    scope: str
    seed: int
    episodes: int

    def make_network(self) -> QNetwork:
        net = QNetwork(self.i_max, self.hidden)
        for key, value in self.params.items():
            net.params[key] = np.asarray(value, dtype=float).copy()
        return net


@dataclass
class TrainResult:
    policy: TrainedPolicy
    episode_returns: list[float]  # unscaled objective per episode
    losses: list[float]


def train(source: ScenarioSource, hyper: TrainHyper, seed: int,
          monitor=None, monitor_every: int = 0) -> TrainResult:
    """Run the full training loop; see the module docstring for the shape.

    `monitor(episode_index, net)`, when given, is called every
    `monitor_every` episodes; it must not touch the RNG stream.
    """
    rng = np.random.default_rng(seed)
    i_max = source.i_max
    alpha_scale = source.alpha_scale()
    net = QNetwork(i_max, rng=rng)
    target = net.clone()
    adam = Adam(net.params, lr=hyper.lr)
    buffer = ReplayBuffer(hyper.capacity, terminal_fraction=hyper.terminal_quota / hyper.batch_size,
                          priority_exponent=hyper.priority_exponent,
                          is_exponent=hyper.is_exponent,
                          priority_offset=hyper.priority_offset)
    explore = hyper.explore_steps
    if explore is None:
        explore = int(0.8 * hyper.episodes * i_max)

    env_steps = 0
    train_steps = 0
    credit = 0.0  # env steps owed to the optimizer at the configured ratio
    returns: list[float] = []
    losses: list[float] = []

    for episode in range(hyper.episodes):
        scenario = source.scenario_for_episode(episode)
        record = EpisodeRecord()
        state = reset(scenario)
        feats = encode(state, i_max, alpha_scale)
        while not state.done:
            eps = linear_schedule(hyper.eps_start, hyper.eps_end, env_steps, explore)
            tau = linear_schedule(hyper.tau_start, hyper.tau_end, env_steps, explore)
            action = select_action(net, feats, eps, tau, rng)
            record.handled_order.append(state.user_ids[state.cursor])
            state, done = step(state, action)
            next_feats = encode(state, i_max, alpha_scale)
            record.transitions.append(Transition(feats, action, next_feats, done))
            feats = next_feats
            env_steps += 1
        record.final_state = state
        rewards = assign_rewards(record, scenario)
        returns.append(sum(rewards))
        for tr, r in zip(record.transitions, rewards):
            buffer.push((tr.features, tr.action, r * hyper.reward_scale,
                         tr.next_features, tr.done), terminal=tr.done)

        credit += len(record.transitions) / hyper.train_every
        while credit >= 1.0:
            loss = train_step(net, target, adam, buffer, hyper, rng)
            if loss is None:
                credit = 0.0  # still warming up; forfeit these updates
                break
            losses.append(loss)
            credit -= 1.0
            train_steps += 1
            if train_steps % hyper.target_sync == 0:
                target.copy_from(net)
        if monitor is not None and monitor_every and (episode + 1) % monitor_every == 0:
            monitor(episode, net)

    policy = TrainedPolicy(
        i_max=i_max,
        hidden=net.hidden,
        params={k: v.copy() for k, v in net.params.items()},
        alpha_scale=alpha_scale,
        scope=source.scope,
        seed=seed,
        episodes=hyper.episodes,
    )
    return TrainResult(policy=policy, episode_returns=returns, losses=losses)


def greedy_solve(policy: TrainedPolicy, scenario: Scenario) -> Decision:
    """Run the environment greedily under the policy; linear in the user count."""
    if scenario.user_count > policy.i_max:
        raise ContractError(
            f"scenario has {scenario.user_count} users; policy capacity is {policy.i_max}")
    if scenario.edge.b_max < 1:
        return all_local_decision(scenario)
    net = policy.make_network()
    record = run_episode(scenario, lambda f: greedy_action(net.forward(f)),
                         policy.i_max, policy.alpha_scale)
    return decision_from_state(record.final_state, scenario)


def save_policy(policy: TrainedPolicy, path: str | Path) -> None:
    obj = {
        "format": "diffload-policy-v1",
        "i_max": policy.i_max,
        "hidden": list(policy.hidden),
        "alpha_scale": policy.alpha_scale,
        "scope": policy.scope,
        "seed": policy.seed,
        "episodes": policy.episodes,
        "weights": {
            key: {"shape": list(value.shape), "data": value.reshape(-1).tolist()}
            for key, value in sorted(policy.params.items())
        },
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def load_policy(path: str | Path) -> TrainedPolicy:
    obj = json.loads(Path(path).read_text())
    if obj.get("format") != "diffload-policy-v1":
        raise ValidationError(f"{path}: not a recognized policy file")
    params = {}
    for key, spec in obj["weights"].items():
        params[key] = np.asarray(spec["data"], dtype=float).reshape(spec["shape"])
    return TrainedPolicy(
        i_max=int(obj["i_max"]),
        hidden=tuple(int(h) for h in obj["hidden"]),
        params=params,
        alpha_scale=float(obj["alpha_scale"]),
        scope=str(obj["scope"]),
        seed=int(obj["seed"]),
        episodes=int(obj["episodes"]),
    )
