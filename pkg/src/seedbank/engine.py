"""Exact simulation of the block-counting process ``(n, m)``.

``n`` is the number of active blocks and ``m`` the dormant blocks, each with
its own wake-up rate. From ``(n, m)`` the process jumps

* ``(n-1, m)`` at rate ``n(n-1)/2`` (coalescence of two active blocks),
* ``(n-1, m + delta_lam)`` at rate ``c n``, ``lam ~ nu`` (deactivation),
* ``(n+1, m - delta_lam)`` at rate ``lam`` per dormant block (activation).

Three variants share the kernel. In the accelerated variant an activated
block vanishes instead of rejoining the active pool. In the decelerated
variant coalescence is switched off while ``n < ceil((n + |m|)**alpha)`` as
long as the total block count is at least ``m0``.

The bulk path is the compiled :func:`_simulate` kernel, seeded per replicate;
:func:`step` is a readable reference implementation of a single transition on
:class:`BlockCountState` and drives user-supplied stop predicates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .bank import DormantBank, tree_compact, tree_find, tree_set
from .measure import RateMeasure

STANDARD = "standard"
ACCELERATED = "accelerated"
DECELERATED = "decelerated"
_VCODE = {STANDARD: 0, ACCELERATED: 1, DECELERATED: 2}

EVENT_NAMES = ("coalescence", "deactivation", "activation", "vanish")

STOP_ABSORBED = 0
STOP_FIRST_N = 1
STOP_EXTINCT = 2
STOP_HORIZON = 3


class StuckStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class Variant:
    kind: str = STANDARD
    alpha: float = 0.75
    m0: int = 2

    def __post_init__(self):
        if self.kind not in _VCODE:
            raise ValueError(f"unknown variant {self.kind!r}")
        if self.kind == DECELERATED:
            if not 0.5 < self.alpha < 1.0:
                raise ValueError("decelerated variant needs 1/2 < alpha < 1")
            if int(self.m0) != self.m0 or self.m0 < 2:
                raise ValueError("decelerated variant needs an integer threshold m0 >= 2")

    @classmethod
    def standard(cls) -> "Variant":
        return cls(STANDARD)

    @classmethod
    def accelerated(cls) -> "Variant":
        return cls(ACCELERATED)

    @classmethod
    def decelerated(cls, alpha: float = 0.75, m0: int = 2) -> "Variant":
        return cls(DECELERATED, alpha, int(m0))

    @classmethod
    def parse(cls, name: str, alpha: float = 0.75, m0: int = 2) -> "Variant":
        if name == DECELERATED:
            return cls.decelerated(alpha, m0)
        return cls(name)

    @property
    def code(self) -> int:
        return _VCODE[self.kind]


def decelerated_threshold(c: float, lam_lo: float, lam_hi: float, eps: float, alpha: float) -> int:
    """Threshold ``m0`` from the decelerated upper-bound argument for a given ``eps``.

    ``ceil(max(((lam_lo + 2c(1+eps)) / (lam_lo eps))**(1/(1-alpha)),
    lam_hi - c, (1 + (2/eps - 2) lam_lo)**(1/(2 alpha - 1))))``
    """
    if not (0.5 < alpha < 1.0 and eps > 0 and lam_lo > 0):
        raise ValueError("need 1/2 < alpha < 1, eps > 0, lam_lo > 0")
    a = ((lam_lo + 2 * c * (1 + eps)) / (lam_lo * eps)) ** (1 / (1 - alpha))
    b = lam_hi - c
    d = max(1 + (2 / eps - 2) * lam_lo, 0.0) ** (1 / (2 * alpha - 1))
    return int(math.ceil(max(a, b, d)))


@njit(cache=True)
def _gate_open(n, total, vcode, alpha, m0):
    if vcode != 2 or total < m0:
        return True
    # n >= ceil(x) iff n >= x for integer n; the tolerance absorbs x = k + ulp
    return n >= math.ceil(total ** alpha - 1e-9)


def coalescence_rate(n: int, count: int, variant: Variant) -> float:
    if n < 2:
        return 0.0
    if _gate_open(n, n + count, variant.code, variant.alpha, variant.m0):
        return n * (n - 1) / 2.0
    return 0.0


def is_absorbed(n: int, count: int, variant: Variant) -> bool:
    if variant.kind == ACCELERATED:
        return n + count <= 1
    return n == 1 and count == 0


@dataclass
class BlockCountState:
    n: int
    bank: DormantBank = field(default_factory=DormantBank)
    t: float = 0.0

    @property
    def total(self) -> int:
        return self.n + self.bank.count


def step(state: BlockCountState, variant: Variant, mu: RateMeasure,
         rng: np.random.Generator) -> tuple[str, BlockCountState]:
    """Advance ``state`` in place by one jump; returns the event name and the state."""
    n, bank = state.n, state.bank
    if is_absorbed(n, bank.count, variant):
        raise ValueError("step called on an absorbing state")
    coal = coalescence_rate(n, bank.count, variant)
    deact = mu.c * n
    act = bank.total_rate
    total = coal + deact + act
    if total <= 0.0:
        raise StuckStateError(f"stuck state: no transition out of (n={n}, |m|={bank.count})")
    state.t += rng.exponential(1.0 / total)
    u = rng.random() * total
    if u < coal:
        state.n -= 1
        return "coalescence", state
    if u < coal + deact:
        state.n -= 1
        bank.insert(mu.sample_rate(rng))
        return "deactivation", state
    bank.remove_at(min(u - coal - deact, act * (1 - 1e-16)))
    if variant.kind == ACCELERATED:
        return "vanish", state
    state.n += 1
    return "activation", state


@njit(cache=True)
def _draw_rate(kind, atom_rates, atom_cum, ga, gb):
    if kind == 0:
        if atom_rates.shape[0] == 1:
            return atom_rates[0]
        j = np.searchsorted(atom_cum, np.random.random(), side="right")
        if j >= atom_rates.shape[0]:
            j = atom_rates.shape[0] - 1
        return atom_rates[j]
    # shape ga, rate gb
    return np.random.gamma(ga, 1.0 / gb)


@njit(cache=True)
def _simulate(n0, init_rates, m_draw, vcode, alpha, m0, kind, atom_rates, atom_cum,
              ga, gb, c, horizon, seed, stop_mode, target_n, keep_trace, max_events):
    np.random.seed(seed)
    total0 = n0 + init_rates.shape[0] + m_draw
    cap = 16
    while cap < 2 * total0:
        cap *= 2
    tree = np.zeros(2 * cap)
    used = 0
    for i in range(init_rates.shape[0]):
        tree[cap + used] = init_rates[i]
        used += 1
    for i in range(m_draw):
        tree[cap + used] = _draw_rate(kind, atom_rates, atom_cum, ga, gb)
        used += 1
    for i in range(cap - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]
    count = used

    n = n0
    t = 0.0
    deacts = 0
    record = 0
    nmin = n0
    events = 0
    absorbed = False
    stuck = False

    tcap = 1024 if keep_trace else 1
    tr_t = np.empty(tcap)
    tr_k = np.empty(tcap, dtype=np.int64)
    tr_n = np.empty(tcap, dtype=np.int64)
    tr_m = np.empty(tcap, dtype=np.int64)
    ntr = 0

    while True:
        if stop_mode == 0:
            if vcode == 1:
                done = n + count <= 1
            else:
                done = n == 1 and count == 0
        elif stop_mode == 1:
            done = n <= target_n
        elif stop_mode == 2:
            done = n + count == 0
        else:
            done = False
        if done:
            absorbed = True
            break
        if events >= max_events:
            break
        coal = 0.0
        if n >= 2 and _gate_open(n, n + count, vcode, alpha, m0):
            coal = n * (n - 1) / 2.0
        deact = c * n
        act = tree[1]
        total = coal + deact + act
        if total <= 0.0:
            if stop_mode == 3:
                # frozen state: nothing happens before the horizon
                t = horizon
            else:
                stuck = True
            break
        dt = np.random.exponential(1.0) / total
        if t + dt > horizon:
            t = horizon
            break
        t += dt
        events += 1
        u = np.random.random() * total
        if u < coal:
            n -= 1
            ev = 0
        elif u < coal + deact:
            n -= 1
            if used == cap:
                used = tree_compact(tree, cap, used)
            tree_set(tree, cap, used, _draw_rate(kind, atom_rates, atom_cum, ga, gb))
            used += 1
            count += 1
            deacts += 1
            ev = 1
        else:
            v = u - coal - deact
            if v >= act:
                v = act * (1.0 - 1e-16)
            slot = tree_find(tree, cap, v)
            tree_set(tree, cap, slot, 0.0)
            count -= 1
            if vcode == 1:
                ev = 3
            else:
                n += 1
                ev = 2
        if n < nmin:
            if ev == 1:
                record += 1
            nmin = n
        if keep_trace:
            if ntr == tcap:
                tcap *= 2
                a1 = np.empty(tcap)
                a1[:ntr] = tr_t
                tr_t = a1
                a2 = np.empty(tcap, dtype=np.int64)
                a2[:ntr] = tr_k
                tr_k = a2
                a3 = np.empty(tcap, dtype=np.int64)
                a3[:ntr] = tr_n
                tr_n = a3
                a4 = np.empty(tcap, dtype=np.int64)
                a4[:ntr] = tr_m
                tr_m = a4
            tr_t[ntr] = t
            tr_k[ntr] = ev
            tr_n[ntr] = n
            tr_m[ntr] = count
            ntr += 1

    final = np.empty(count)
    k = 0
    for s in range(used):
        if tree[cap + s] > 0.0:
            final[k] = tree[cap + s]
            k += 1
    return (t, absorbed, stuck, deacts, record, n, count, events, final,
            tr_t[:ntr], tr_k[:ntr], tr_n[:ntr], tr_m[:ntr])


@njit(cache=True)
def _simulate_many(seeds, n0, init_rates, m_draw, vcode, alpha, m0, kind, atom_rates,
                   atom_cum, ga, gb, c, horizon, stop_mode, target_n, max_events):
    reps = seeds.shape[0]
    t_out = np.empty(reps)
    absorbed = np.empty(reps, dtype=np.bool_)
    stuck = np.empty(reps, dtype=np.bool_)
    deacts = np.empty(reps, dtype=np.int64)
    record = np.empty(reps, dtype=np.int64)
    n_out = np.empty(reps, dtype=np.int64)
    m_out = np.empty(reps, dtype=np.int64)
    ev_out = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        res = _simulate(n0, init_rates, m_draw, vcode, alpha, m0, kind, atom_rates, atom_cum,
                        ga, gb, c, horizon, seeds[r], stop_mode, target_n, False, max_events)
        t_out[r] = res[0]
        absorbed[r] = res[1]
        stuck[r] = res[2]
        deacts[r] = res[3]
        record[r] = res[4]
        n_out[r] = res[5]
        m_out[r] = res[6]
        ev_out[r] = res[7]
    return t_out, absorbed, stuck, deacts, record, n_out, m_out, ev_out


@dataclass
class SimOutcome:
    """Result of one run. ``t_mrca`` is ``None`` when the run stopped at the horizon."""

    t_mrca: float | None
    deactivation_count: int
    a_count: int
    n: int
    dormant: np.ndarray
    t: float
    events: int
    event_trace: list[tuple[float, str, int, int]] | None = None

    @property
    def absorbed(self) -> bool:
        return self.t_mrca is not None


def _seed_from(rng) -> int:
    if rng is None:
        return int(np.random.default_rng().integers(2**32))
    if isinstance(rng, (int, np.integer)):
        return int(rng) % 2**32
    return int(rng.integers(2**32))


def _initial_bank(m0) -> tuple[np.ndarray, int]:
    """``m0`` is either a count (rates drawn i.i.d. from nu) or explicit rates."""
    if isinstance(m0, (int, np.integer)):
        if m0 < 0:
            raise ValueError("negative dormant count")
        return np.zeros(0), int(m0)
    rates = np.asarray(list(m0), dtype=np.float64)
    if np.any(rates <= 0):
        raise ValueError("dormant rates must be positive")
    return rates, 0


_STOPS = {"absorbed": STOP_ABSORBED, "first_n1": STOP_FIRST_N, "extinct": STOP_EXTINCT,
          "horizon": STOP_HORIZON}


def run_kernel(n0: int, m0, variant: Variant, mu: RateMeasure, seed: int, *,
               horizon: float | None = None, stop: str = "absorbed", target_n: int = 1,
               keep_trace: bool = False, max_events: int = 2**62) -> SimOutcome:
    init, m_draw = _initial_bank(m0)
    if n0 < 0 or n0 + len(init) + m_draw < 1:
        raise ValueError("need at least one block")
    if m_draw and mu.is_empty:
        raise ValueError("cannot draw dormant rates from an empty measure")
    if stop == "horizon" and (horizon is None or math.isinf(horizon)):
        raise ValueError("stop='horizon' needs a finite horizon")
    if stop == "extinct" and variant.kind != ACCELERATED:
        raise ValueError("only the accelerated variant can go extinct")
    kind, rates, cum, ga, gb, c = mu.kernel_args()
    res = _simulate(int(n0), init, m_draw, variant.code, variant.alpha, variant.m0, kind,
                    rates, cum, ga, gb, c, math.inf if horizon is None else float(horizon),
                    seed, _STOPS[stop], int(target_n), keep_trace, max_events)
    t, absorbed, stuck, deacts, record, n, count, events, final, tt, tk, tn, tm = res
    if stuck:
        raise StuckStateError(f"stuck state: no transition out of (n={n}, |m|={count})")
    trace = None
    if keep_trace:
        trace = [(float(a), EVENT_NAMES[k], int(b), int(d)) for a, k, b, d in zip(tt, tk, tn, tm)]
    return SimOutcome(t_mrca=float(t) if absorbed else None, deactivation_count=int(deacts),
                      a_count=int(record), n=int(n), dormant=final, t=float(t),
                      events=int(events), event_trace=trace)


def sample_tmrca(n0: int, m0=0, variant: Variant = Variant(), mu: RateMeasure | None = None,
                 rng=None, horizon: float | None = None, keep_trace: bool = False) -> SimOutcome:
    """Run until the single-ancestor state (or the horizon).

    ``m0`` is an initial dormant count (rates drawn i.i.d. from ``nu``) or a
    sequence of explicit dormant rates. ``rng`` is a numpy Generator or an
    integer seed.
    """
    mu = RateMeasure.empty() if mu is None else mu
    return run_kernel(n0, m0, variant, mu, _seed_from(rng), horizon=horizon, keep_trace=keep_trace)


def simulate_many(seeds: np.ndarray, n0: int, m0, variant: Variant, mu: RateMeasure, *,
                  horizon: float | None = None, stop: str = "absorbed", target_n: int = 1,
                  max_events: int = 2**62) -> dict[str, np.ndarray]:
    """Vector of independent runs, one per seed; returns per-replicate arrays."""
    init, m_draw = _initial_bank(m0)
    if n0 + len(init) + m_draw < 1:
        raise ValueError("need at least one block")
    kind, rates, cum, ga, gb, c = mu.kernel_args()
    out = _simulate_many(np.asarray(seeds, dtype=np.int64), int(n0), init, m_draw, variant.code,
                         variant.alpha, variant.m0, kind, rates, cum, ga, gb, c,
                         math.inf if horizon is None else float(horizon), _STOPS[stop],
                         int(target_n), max_events)
    keys = ("t", "absorbed", "stuck", "deactivations", "a_count", "n", "dormant", "events")
    res = dict(zip(keys, out))
    if res["stuck"].any():
        raise StuckStateError("stuck state reached in a replicate")
    return res


def measure_A(n: int, variant: Variant, mu: RateMeasure, rng=None,
              stop: str | Callable[[BlockCountState], bool] = "first_n1") -> int:
    """Number of deactivations that took the active count to a new minimum.

    Starting from ``(n, empty)`` this counts, over the first-passage times of
    the active count to ``n-1, n-2, ...``, those passages caused by a
    deactivation. The default stop is the first time one active block
    remains. ``stop`` may also be ``"absorbed"``, ``"extinct"`` (accelerated
    only) or a predicate on :class:`BlockCountState`, checked before each jump.
    """
    if callable(stop):
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        state = BlockCountState(n)
        nmin, a = n, 0
        while not stop(state) and not is_absorbed(state.n, state.bank.count, variant):
            kind, state = step(state, variant, mu, gen)
            if state.n < nmin:
                a += kind == "deactivation"
                nmin = state.n
        return a
    return run_kernel(n, 0, variant, mu, _seed_from(rng), stop=stop).a_count


def expected_A_exact(n: int, c: float) -> float:
    """``sum_{j=2}^{n} 2c / (j + 2c - 1)``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if c < 0:
        raise ValueError("c must be nonnegative")
    if c == 0:
        return 0.0
    j = np.arange(2, n + 1, dtype=float)
    return math.fsum(2 * c / (j + 2 * c - 1))


def A_log_bracket(n: int, c: float) -> tuple[float, float]:
    """Bounds ``2c log((n+2c)/(1+2c)) <= E[A^n] <= 2c log((n+2c-1)/(2c))``."""
    return (2 * c * (math.log(n + 2 * c) - math.log(1 + 2 * c)),
            2 * c * (math.log(n + 2 * c - 1) - math.log(2 * c)))


def pure_death_extinction_mean(N: int, mu: RateMeasure) -> float:
    """``sum_{i=1}^{N} int_0^inf L(t)**i dt`` with ``L`` the dormancy survival function.

    Term ``i`` is the mean time to the first death among ``i`` blocks with
    fresh ``K``-distributed lifetimes, so the sum is the mean extinction time
    of a pure death process restarted at each death. For a single atom it is
    the mean of the maximum of ``N`` exponentials. Returns ``inf`` if any
    term diverges.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if mu.is_empty:
        raise ValueError("pure death bound needs c > 0")
    if mu.kind == "gamma":
        i = np.arange(1, N + 1, dtype=float)
        if mu.a <= 1.0:
            return math.inf
        return math.fsum(mu.b / (mu.a * i - 1.0))
    if len(mu.rates) == 1:
        return math.fsum(1.0 / (mu.rates[0] * np.arange(1, N + 1)))
    from scipy import integrate

    terms = []
    for i in range(1, N + 1):
        val, _ = integrate.quad(lambda t, i=i: mu.survival_laplace(t) ** i, 0, np.inf,
                                epsabs=1e-12, epsrel=1e-10, limit=200)
        terms.append(val)
    return math.fsum(terms)


def initial_state(n0: int, m0: Sequence[float] = ()) -> BlockCountState:
    return BlockCountState(n0, DormantBank(m0, capacity=max(16, 2 * (n0 + len(m0)))))
