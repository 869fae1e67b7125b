"""Dynamic multiset of dormant blocks with rate-proportional sampling.

Slots live at the leaves of an implicit complete binary sum tree stored in a
flat array (node ``i`` has children ``2i`` and ``2i+1``; leaves start at
``cap``). Removing a block zeroes its leaf, so dead slots accumulate until the
array is compacted. Every internal node is recomputed as the float sum of its
two children on each update rather than adjusted by a delta, so subtrees with
no live slots are exactly zero and no drift accumulates.

The ``tree_*`` functions are compiled and also used by the simulation
kernels in :mod:`seedbank.engine`.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def tree_set(tree, cap, slot, value):
    i = slot + cap
    tree[i] = value
    i >>= 1
    while i >= 1:
        tree[i] = tree[2 * i] + tree[2 * i + 1]
        i >>= 1


@njit(cache=True)
def tree_find(tree, cap, u):
    """Leaf index whose cumulative interval contains ``u`` in ``[0, tree[1])``."""
    i = 1
    while i < cap:
        left = tree[2 * i]
        right = tree[2 * i + 1]
        if (u < left and left > 0.0) or right <= 0.0:
            i = 2 * i
        else:
            u -= left
            i = 2 * i + 1
    return i - cap


@njit(cache=True)
def tree_build(tree, cap):
    for i in range(cap - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]


@njit(cache=True)
def tree_compact(tree, cap, used):
    """Move live leaves to the front; returns the new number of used slots."""
    k = 0
    for s in range(used):
        v = tree[cap + s]
        if v > 0.0:
            tree[cap + k] = v
            k += 1
    for s in range(k, cap):
        tree[cap + s] = 0.0
    tree_build(tree, cap)
    return k


def _pow2_at_least(n: int) -> int:
    return 1 << max(4, math.ceil(math.log2(max(n, 1))))


class DormantBank:
    """Dormant blocks, one slot per block, sampled proportionally to their rate.

    Two blocks with the same rate are never merged; identity is the block id
    returned by :meth:`insert`.
    """

    def __init__(self, rates=(), capacity: int = 16):
        self._cap = _pow2_at_least(capacity)
        self._tree = np.zeros(2 * self._cap)
        self._ids = np.full(self._cap, -1, dtype=np.int64)
        self._used = 0
        self._count = 0
        self._next_id = 0
        for r in rates:
            self.insert(r)

    def __len__(self) -> int:
        return self._count

    @property
    def count(self) -> int:
        return self._count

    @property
    def total_rate(self) -> float:
        return float(self._tree[1])

    def insert(self, rate: float) -> int:
        rate = float(rate)
        if not rate > 0.0 or not math.isfinite(rate):
            raise ValueError(f"dormant rate must be positive and finite, got {rate}")
        if self._used == self._cap:
            self._compact_or_grow()
        slot = self._used
        self._used += 1
        tree_set(self._tree, self._cap, slot, rate)
        bid = self._next_id
        self._next_id += 1
        self._ids[slot] = bid
        self._count += 1
        return bid

    def sample_activation(self, rng: np.random.Generator) -> tuple[int, float]:
        """Remove one block chosen with probability ``rate / total_rate``."""
        if self._count == 0:
            raise IndexError("sample from an empty dormant bank")
        return self.remove_at(rng.random() * self._tree[1])

    def remove_at(self, u: float) -> tuple[int, float]:
        """Remove the block whose cumulative-rate interval contains ``u``."""
        slot = tree_find(self._tree, self._cap, u)
        rate = float(self._tree[self._cap + slot])
        tree_set(self._tree, self._cap, slot, 0.0)
        bid = int(self._ids[slot])
        self._ids[slot] = -1
        self._count -= 1
        return bid, rate

    def rates(self) -> np.ndarray:
        leaves = self._tree[self._cap:self._cap + self._used]
        return leaves[leaves > 0.0].copy()

    def snapshot(self) -> list[tuple[float, int]]:
        """Live blocks grouped by exact rate, sorted by rate."""
        vals, counts = np.unique(self.rates(), return_counts=True)
        return [(float(v), int(k)) for v, k in zip(vals, counts)]

    def resum(self) -> float:
        """Exact re-summation of live rates (for drift checks)."""
        return math.fsum(self.rates())

    def _compact_or_grow(self):
        if self._count * 2 <= self._cap:
            live = self._ids[:self._used][self._tree[self._cap:self._cap + self._used] > 0.0]
            self._used = tree_compact(self._tree, self._cap, self._used)
            self._ids[:] = -1
            self._ids[:self._used] = live
            return
        rates = self._tree[self._cap:self._cap + self._used]
        keep = rates > 0.0
        live_rates, live_ids = rates[keep].copy(), self._ids[:self._used][keep].copy()
        self._cap *= 2
        self._tree = np.zeros(2 * self._cap)
        self._tree[self._cap:self._cap + len(live_rates)] = live_rates
        tree_build(self._tree, self._cap)
        self._ids = np.full(self._cap, -1, dtype=np.int64)
        self._ids[:len(live_ids)] = live_ids
        self._used = len(live_rates)
