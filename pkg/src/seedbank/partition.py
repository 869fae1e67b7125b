"""Marked partitions of {1..K}: graphical construction and a direct jump chain.

A block is identified by its *position*, the smallest individual it contains.
Both simulators emit the same event log:

    ("deactivate", position, rate)   flag 0 -> rate
    ("activate",   position, rate)   flag rate -> 0
    ("merge",      keep, gone)       block at ``gone`` joins block at ``keep`` (keep < gone)

The graphical simulator attaches one unit-rate Poisson clock to every pair of
positions ``i < j`` and one alternating renewal flag process to every
position. A ring of the ``(i, j)`` clock merges ``j`` into ``i`` when both are
still positions of blocks and both flags are 0. Clocks and flag switches are
drawn lazily from a heap; a position that disappears takes its clocks and its
flag process with it, since its individuals now follow the line of ``keep``.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .measure import RateMeasure

MAX_K = 64

DEACTIVATE = "deactivate"
ACTIVATE = "activate"
MERGE = "merge"


@dataclass(frozen=True)
class MarkedPartition:
    """Blocks as (sorted members, flag), sorted by their smallest member."""

    K: int
    blocks: tuple[tuple[tuple[int, ...], float], ...]

    def __post_init__(self):
        seen = sorted(i for members, _ in self.blocks for i in members)
        if seen != list(range(1, self.K + 1)):
            raise ValueError("blocks do not partition {1..K}")
        if any(not members or flag < 0 for members, flag in self.blocks):
            raise ValueError("blocks must be nonempty with flags >= 0")

    @classmethod
    def from_labels(cls, labels: Sequence[int], flags: dict[int, float]) -> "MarkedPartition":
        groups: dict[int, list[int]] = {}
        for i, lab in enumerate(labels, start=1):
            groups.setdefault(lab, []).append(i)
        blocks = tuple((tuple(groups[p]), float(flags[p])) for p in sorted(groups))
        return cls(len(labels), blocks)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def n_active(self) -> int:
        return sum(1 for _, f in self.blocks if f == 0)

    def shape(self) -> tuple[tuple[int, ...], ...]:
        """The unmarked set partition."""
        return tuple(members for members, _ in self.blocks)

    def same_block(self, i: int, j: int) -> bool:
        return any(i in members and j in members for members, _ in self.blocks)

    def pair_indicators(self) -> tuple[int, ...]:
        """``1{i ~ j}`` over pairs ``i < j`` in lexicographic order."""
        lab = {}
        for members, _ in self.blocks:
            for i in members:
                lab[i] = members[0]
        return tuple(int(lab[i] == lab[j]) for i in range(1, self.K + 1)
                     for j in range(i + 1, self.K + 1))


@dataclass
class PartitionPath:
    """Event log of one run together with queries on the partition it encodes."""

    K: int
    initial_flags: tuple[float, ...]
    horizon: float
    events: list[tuple[float, str, int, float]] = field(default_factory=list)
    t_mrca: float | None = None
    final_labels: list[int] = field(default_factory=list)
    final_flags: dict[int, float] = field(default_factory=dict)

    def partition_at(self, t: float) -> MarkedPartition:
        if t < 0 or t > self.horizon:
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        labels = list(range(1, self.K + 1))
        flags = {i + 1: f for i, f in enumerate(self.initial_flags)}
        for time, kind, a, b in self.events:
            if time > t:
                break
            if kind == MERGE:
                a, b = int(a), int(b)
                labels = [a if lab == b else lab for lab in labels]
                del flags[b]
            elif kind == DEACTIVATE:
                flags[a] = b
            else:
                flags[a] = 0.0
        return MarkedPartition.from_labels(labels, flags)

    def final_partition(self) -> MarkedPartition:
        return MarkedPartition.from_labels(self.final_labels, self.final_flags)

    def block_count_at(self, t: float) -> int:
        merges = sum(1 for time, kind, _, _ in self.events if kind == MERGE and time <= t)
        return self.K - merges


def _check_args(K: int, horizon: float | None, f) -> tuple[float, tuple[float, ...]]:
    if not 1 <= K <= MAX_K:
        raise ValueError(f"K must lie in 1..{MAX_K}")
    horizon = math.inf if horizon is None else float(horizon)
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    flags = (0.0,) * K if f is None else tuple(float(x) for x in f)
    if len(flags) != K or any(x < 0 or not math.isfinite(x) for x in flags):
        raise ValueError("need K finite nonnegative initial flags")
    return horizon, flags


def _mrca(labels_alive: int, flags: dict[int, float]) -> bool:
    return labels_alive == 1 and next(iter(flags.values())) == 0.0


def simulate_graphical(K: int, mu: RateMeasure, horizon: float | None = None, f=None,
                       rng: np.random.Generator | None = None) -> PartitionPath:
    """Graphical construction up to ``horizon``.

    With ``horizon=None`` the run stops at the first time one active block
    remains. ``f`` holds initial flags (default all 0).
    """
    horizon, flags0 = _check_args(K, horizon, f)
    rng = np.random.default_rng() if rng is None else rng
    c = mu.c
    path = PartitionPath(K, flags0, horizon)
    labels = list(range(1, K + 1))
    flags = {i + 1: x for i, x in enumerate(flags0)}
    alive = set(flags)
    heap: list[tuple[float, int, int, int]] = []
    # entries (time, tie, i, j): j > 0 is a pair clock, j == 0 a flag switch of i
    for i in range(1, K + 1):
        for j in range(i + 1, K + 1):
            heapq.heappush(heap, (rng.exponential(), i * (K + 1) + j, i, j))

    def schedule_switch(p, now):
        rate = flags[p] if flags[p] > 0 else c
        if rate > 0:
            heapq.heappush(heap, (now + rng.exponential(1.0 / rate), p, p, 0))

    for p in alive:
        schedule_switch(p, 0.0)

    if _mrca(len(alive), flags):
        path.t_mrca = 0.0
    stop = horizon
    while heap:
        t, _, i, j = heapq.heappop(heap)
        if t > stop:
            break
        if j == 0:
            if i not in alive:
                continue
            if flags[i] == 0:
                rate = float(mu.sample_rate(rng))
                flags[i] = rate
                path.events.append((t, DEACTIVATE, i, rate))
            else:
                path.events.append((t, ACTIVATE, i, flags[i]))
                flags[i] = 0.0
            schedule_switch(i, t)
        else:
            if i not in alive or j not in alive:
                continue
            if flags[i] == 0 and flags[j] == 0:
                for k in range(K):
                    if labels[k] == j:
                        labels[k] = i
                alive.discard(j)
                del flags[j]
                path.events.append((t, MERGE, i, j))
            else:
                heapq.heappush(heap, (t + rng.exponential(), i * (K + 1) + j, i, j))
        if path.t_mrca is None and _mrca(len(alive), flags):
            path.t_mrca = t
            if math.isinf(horizon):
                break
    path.final_labels = labels
    path.final_flags = flags
    return path


def simulate_direct(K: int, mu: RateMeasure, horizon: float | None = None, f=None,
                    rng: np.random.Generator | None = None) -> PartitionPath:
    """Jump chain on marked partitions with the same event log as the graphical run.

    Each active block turns dormant at rate ``c`` with a rate drawn from
    ``nu``, each dormant block with flag ``lam`` wakes at rate ``lam``, and
    each pair of active blocks merges at rate 1.
    """
    horizon, flags0 = _check_args(K, horizon, f)
    rng = np.random.default_rng() if rng is None else rng
    c = mu.c
    path = PartitionPath(K, flags0, horizon)
    labels = list(range(1, K + 1))
    flags = {i + 1: x for i, x in enumerate(flags0)}
    t = 0.0
    if _mrca(len(flags), flags):
        path.t_mrca = 0.0
        if math.isinf(horizon):
            path.final_labels, path.final_flags = labels, flags
            return path
    while True:
        active = [p for p, x in flags.items() if x == 0]
        dormant = [p for p, x in flags.items() if x > 0]
        a = len(active)
        r_merge = a * (a - 1) / 2
        r_deact = c * a
        r_act = math.fsum(flags[p] for p in dormant)
        total = r_merge + r_deact + r_act
        if total <= 0:
            break
        t += rng.exponential(1.0 / total)
        if t > horizon:
            break
        u = rng.random() * total
        if u < r_merge:
            i, j = sorted(rng.choice(active, size=2, replace=False).tolist())
            for k in range(K):
                if labels[k] == j:
                    labels[k] = i
            del flags[j]
            path.events.append((t, MERGE, i, j))
        elif u < r_merge + r_deact:
            p = active[int(rng.integers(a))]
            rate = float(mu.sample_rate(rng))
            flags[p] = rate
            path.events.append((t, DEACTIVATE, p, rate))
        else:
            u -= r_merge + r_deact
            p = dormant[-1]
            for q in dormant:
                if u < flags[q]:
                    p = q
                    break
                u -= flags[q]
            path.events.append((t, ACTIVATE, p, flags[p]))
            flags[p] = 0.0
        if path.t_mrca is None and _mrca(len(flags), flags):
            path.t_mrca = t
            if math.isinf(horizon):
                break
    path.final_labels = labels
    path.final_flags = flags
    return path


def total_rate(partition: MarkedPartition, mu: RateMeasure) -> float:
    """Total jump rate out of a marked partition."""
    a = partition.n_active
    return a * (a - 1) / 2 + mu.c * a + math.fsum(f for _, f in partition.blocks if f > 0)


def _check_perm(sigma: Sequence[int], K: int) -> list[int]:
    sigma = [int(s) for s in sigma]
    if sorted(sigma) != list(range(1, K + 1)):
        raise ValueError("sigma must be a permutation of 1..K given as images sigma(1..K)")
    return sigma


def relabel(partition: MarkedPartition, sigma: Sequence[int]) -> MarkedPartition:
    """Image of a partition under ``i -> sigma(i)``."""
    sigma = _check_perm(sigma, partition.K)
    blocks = [(tuple(sorted(sigma[i - 1] for i in members)), flag)
              for members, flag in partition.blocks]
    return MarkedPartition(partition.K, tuple(sorted(blocks)))


_SIMULATORS = {"graphical": simulate_graphical, "direct": simulate_direct}


def partition_sample(K: int, mu: RateMeasure, t: float, reps: int, rng: np.random.Generator,
                     f=None, simulator: str = "graphical") -> list[MarkedPartition]:
    sim = _SIMULATORS[simulator]
    return [sim(K, mu, t, f, rng).final_partition() for _ in range(reps)]


@dataclass
class ExchangeabilityResult:
    p_value: float
    statistic: float
    categories: int
    counts_identity: dict
    counts_relabeled: dict


def exchangeability_test(K: int, mu: RateMeasure, t: float, sigma: Sequence[int], reps: int,
                         rng: np.random.Generator, f=None,
                         simulator: str = "graphical") -> ExchangeabilityResult:
    """Chi-square homogeneity test of the unmarked partition at ``t``.

    One batch is run from flags ``f``; an independent batch is run and
    relabeled by ``sigma``. Categories are the joint patterns of the pair
    indicators ``1{i ~ j}``, i.e. the set partitions themselves. ``sigma``
    may only exchange individuals with equal initial flags.
    """
    sigma = _check_perm(sigma, K)
    flags = (0.0,) * K if f is None else tuple(float(x) for x in f)
    if any(flags[sigma[i] - 1] != flags[i] for i in range(K)):
        raise ValueError("sigma must preserve the initial flags")
    first = Counter(p.shape() for p in partition_sample(K, mu, t, reps, rng, flags, simulator))
    second = Counter(relabel(p, sigma).shape()
                     for p in partition_sample(K, mu, t, reps, rng, flags, simulator))
    cats = sorted(set(first) | set(second))
    if len(cats) < 2:
        return ExchangeabilityResult(1.0, 0.0, len(cats), dict(first), dict(second))
    table = np.array([[first[k] for k in cats], [second[k] for k in cats]])
    stat, p, _, _ = stats.chi2_contingency(table, correction=False)
    return ExchangeabilityResult(float(p), float(stat), len(cats), dict(first), dict(second))


def transposition(K: int, a: int, b: int) -> list[int]:
    sigma = list(range(1, K + 1))
    sigma[a - 1], sigma[b - 1] = b, a
    return sigma
