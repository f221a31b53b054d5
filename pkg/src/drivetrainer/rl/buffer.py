"""
Prioritized Replay — sum tree over p^α plus a ring of transitions.

The tree is the usual array-backed binary heap layout: leaf i sits at
index i + capacity - 1 and every internal node holds the sum of its two
children. Incremental updates drift in floating point, so the internal
nodes are recomputed from the leaves every `rebuild_every` writes.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import structlog

from drivetrainer.errors import BufferUnderflowError
from drivetrainer.rl.types import Transition

logger = structlog.get_logger(__name__)


class SumTree:
    def __init__(self, capacity: int, rebuild_every: int = 100_000) -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.nodes = np.zeros(2 * capacity - 1, dtype=np.float64)
        self.rebuild_every = rebuild_every
        self._writes = 0

    @property
    def total(self) -> float:
        return float(self.nodes[0])

    def leaf(self, index: int) -> float:
        return float(self.nodes[index + self.capacity - 1])

    def leaves(self) -> np.ndarray:
        return self.nodes[self.capacity - 1 :]

    def update(self, index: int, value: float) -> None:
        node = index + self.capacity - 1
        change = value - self.nodes[node]
        self.nodes[node] = value
        while node > 0:
            node = (node - 1) // 2
            self.nodes[node] += change
        self._writes += 1
        if self._writes % self.rebuild_every == 0:
            self.rebuild()

    def rebuild(self) -> None:
        for node in range(self.capacity - 2, -1, -1):
            self.nodes[node] = self.nodes[2 * node + 1] + self.nodes[2 * node + 2]

    def find(self, value: float) -> int:
        """Leaf index whose cumulative-priority interval contains `value`."""
        node = 0
        while 2 * node + 1 < len(self.nodes):
            left = 2 * node + 1
            if value < self.nodes[left] or self.nodes[left + 1] <= 0.0:
                node = left
            else:
                value -= self.nodes[left]
                node = left + 1
        return node - (self.capacity - 1)


@dataclass(frozen=True)
class SampleBatch:
    transitions: list[Transition]
    weights: np.ndarray
    indices: np.ndarray


class PrioritizedReplayBuffer:
    """Thread-safe proportional PER; new transitions enter at the running max priority."""

    def __init__(
        self,
        capacity: int,
        alpha: float = 0.6,
        priority_floor: float = 1e-3,
        rebuild_every: int = 100_000,
    ) -> None:
        self.capacity = capacity
        self.alpha = alpha
        self.priority_floor = priority_floor
        self.tree = SumTree(capacity, rebuild_every)
        self._data: list[Transition | None] = [None] * capacity
        self._cursor = 0
        self._size = 0
        self._max_priority = 1.0
        self._lock = threading.Lock()
        self.total_pushed = 0

    def __len__(self) -> int:
        return self._size

    @property
    def max_priority(self) -> float:
        return self._max_priority

    def push(self, transition: Transition) -> None:
        with self._lock:
            self._data[self._cursor] = transition
            self.tree.update(self._cursor, self._max_priority**self.alpha)
            self._cursor = (self._cursor + 1) % self.capacity
            self._size = min(self.capacity, self._size + 1)
            self.total_pushed += 1

    def sample(self, n: int, beta: float, rng: np.random.Generator) -> SampleBatch:
        """Stratified draw of `n` transitions; weights (N·P(i))^-β scaled so the largest is 1."""
        with self._lock:
            if self._size < n or n <= 0:
                raise BufferUnderflowError(f"cannot sample {n} from a buffer holding {self._size}")
            total = self.tree.total
            segment = total / n
            indices = np.empty(n, dtype=np.int64)
            for i in range(n):
                value = rng.uniform(segment * i, segment * (i + 1))
                indices[i] = min(self.tree.find(value), self._size - 1)
            priorities = self.tree.leaves()[indices]
            transitions = [self._data[i] for i in indices]

        probs = priorities / total
        weights = (self._size * probs) ** (-beta)
        weights /= weights.max()
        return SampleBatch(transitions=transitions, weights=weights, indices=indices)  # type: ignore[arg-type]

    def update_priorities(self, indices: np.ndarray, priorities: np.ndarray) -> None:
        """Write raw priorities (|TD| + floor) back; later duplicates in `indices` win."""
        with self._lock:
            for index, priority in zip(indices, priorities):
                p = max(float(priority), self.priority_floor)
                self.tree.update(int(index), p**self.alpha)
                self._max_priority = max(self._max_priority, p)

    def probabilities(self) -> np.ndarray:
        """Sampling probability of every stored leaf."""
        with self._lock:
            leaves = self.tree.leaves()[: self._size]
            return leaves / leaves.sum()
