"""Prioritized replay memory with a separate terminal-state partition.

Terminal transitions carry the latency correction and are rare (one per
episode), so they are stored apart and every sampled batch draws terminal
and non-terminal experiences at a fixed 1:7 ratio. Within each partition,
transitions are sampled proportionally to priority^exponent through a sum
tree; storage is a ring, so the oldest entry is evicted first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SumTree:
    """Binary indexed tree over leaf weights supporting prefix-sum sampling."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.tree = np.zeros(2 * capacity - 1)
        self.data = np.empty(capacity, dtype=object)
        self.write = 0
        self.size = 0

    def add(self, weight: float, item) -> int:
        leaf = self.write + self.capacity - 1
        self.data[self.write] = item
        self.update(leaf, weight)
        self.write = (self.write + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return leaf

    def update(self, leaf: int, weight: float) -> None:
        change = weight - self.tree[leaf]
        self.tree[leaf] = weight
        while leaf != 0:
            leaf = (leaf - 1) // 2
            self.tree[leaf] += change

    def get(self, value: float) -> tuple[int, float, object]:
        """Find the leaf whose cumulative-weight segment contains `value`."""
        idx = 0
        while True:
            left = 2 * idx + 1
            if left >= len(self.tree):
                break
            if value <= self.tree[left]:
                idx = left
            else:
                value -= self.tree[left]
                idx = left + 1
        data_idx = idx - (self.capacity - 1)
        return idx, self.tree[idx], self.data[data_idx]

    def get_batch(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Lockstep descent for a whole batch of query values.

        Returns (leaf indices, leaf weights); equivalent to calling
        :meth:`get` per value but without the per-query Python walk.
        """
        idx = np.zeros(len(values), dtype=np.int64)
        remaining = values.astype(float).copy()
        first_leaf = self.capacity - 1
        while True:
            internal = idx < first_leaf
            if not internal.any():
                break
            left = 2 * idx[internal] + 1
            left_sum = self.tree[left]
            go_left = remaining[internal] <= left_sum
            idx[internal] = np.where(go_left, left, left + 1)
            rem = remaining[internal]
            rem[~go_left] -= left_sum[~go_left]
            remaining[internal] = rem
        return idx, self.tree[idx]

    @property
    def total(self) -> float:
        return float(self.tree[0])

    @property
    def max_weight(self) -> float:
        if self.size == 0:
            return 0.0
        leaves = self.tree[self.capacity - 1:self.capacity - 1 + self.size]
        return float(leaves.max())


@dataclass
class Sample:
    items: list
    leaves: np.ndarray       # tree leaf indices for priority updates
    terminal_mask: np.ndarray
    weights: np.ndarray      # importance-sampling weights, max-normalized


class ReplayBuffer:
    def __init__(self, capacity: int = 400_000, terminal_fraction: float = 0.125,
                 priority_exponent: float = 0.7, is_exponent: float = 0.3,
                 priority_offset: float = 2e-5):
        term_cap = max(1, int(capacity * terminal_fraction))
        self.capacity = capacity
        self.priority_exponent = priority_exponent
        self.is_exponent = is_exponent
        self.priority_offset = priority_offset
        self.terminal = SumTree(term_cap)
        self.regular = SumTree(capacity - term_cap)

    def __len__(self) -> int:
        return self.terminal.size + self.regular.size

    def push(self, item, terminal: bool, priority: float | None = None) -> None:
        """Insert with the partition's max weight so new experiences get replayed."""
        tree = self.terminal if terminal else self.regular
        if priority is not None:
            weight = (priority + self.priority_offset) ** self.priority_exponent
        else:
            weight = tree.max_weight or 1.0
        tree.add(weight, item)

    def ready(self, batch_size: int, terminal_quota: int) -> bool:
        return (self.terminal.size >= terminal_quota
                and self.regular.size >= batch_size - terminal_quota)

    def sample(self, batch_size: int, terminal_quota: int,
               rng: np.random.Generator) -> Sample:
        """Stratified draw: `terminal_quota` terminal + the rest non-terminal."""
        if not self.ready(batch_size, terminal_quota):
            raise ValueError("not enough stored transitions in one of the partitions")
        items, leaves, masks, probs, sizes = [], [], [], [], []
        for tree, count, is_term in ((self.terminal, terminal_quota, True),
                                     (self.regular, batch_size - terminal_quota, False)):
            values = rng.uniform(0.0, tree.total, size=count)
            leaf_idx, weights_at = tree.get_batch(values)
            first_leaf = tree.capacity - 1
            for leaf, weight in zip(leaf_idx, weights_at):
                items.append(tree.data[leaf - first_leaf])
                leaves.append(int(leaf))
                masks.append(is_term)
                probs.append(weight / tree.total)
                sizes.append(tree.size)
        probs = np.asarray(probs)
        sizes = np.asarray(sizes, dtype=float)
        weights = (sizes * probs) ** (-self.is_exponent)
        weights = weights / weights.max()
        return Sample(items=items, leaves=np.asarray(leaves),
                      terminal_mask=np.asarray(masks), weights=weights)

    def update_priorities(self, sample: Sample, td_errors: np.ndarray) -> None:
        weights = (np.abs(td_errors) + self.priority_offset) ** self.priority_exponent
        for leaf, is_term, w in zip(sample.leaves, sample.terminal_mask, weights):
            tree = self.terminal if is_term else self.regular
            tree.update(int(leaf), float(w))
