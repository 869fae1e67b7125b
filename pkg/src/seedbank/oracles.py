"""Closed forms and small linear systems used as ground truth for Monte Carlo.

Covers two-sample coalescence times, the expected time ``f(lam)`` to reach
two active lineages, reflected random-walk hitting times, the law of a single
ancestral line (limit, renewal equation, forward equation) and the fixation
weight of the diffusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .measure import RateMeasure


def tmrca_two_single_bank(c: float, lam: float) -> float:
    """``E[T_MRCA(0, 2 delta_lam)]`` when ``mu = c delta_lam``."""
    if c < 0 or lam <= 0:
        raise ValueError("need c >= 0 and lam > 0")
    return 1.0 + (4 * c + 3) / (2 * lam) + (2 * c * c + c) / (2 * lam * lam)


@dataclass
class RecurrenceSolution:
    """Solution of the two-lineage recurrence for an atom measure.

    ``f_values[lam]`` is the expected time from ``(1, delta_lam)`` to
    ``(2, 0)``; ``pair_values[(lam, lam2)]`` the expected time from
    ``(0, delta_lam + delta_lam2)`` to ``(2, 0)``.
    """

    mu: RateMeasure
    f_values: dict[float, float]
    pair_values: dict[tuple[float, float], float]
    condition_number: float

    def f(self, lam: float) -> float:
        """``f`` at any rate, extended off the atoms through the recurrence."""
        if lam in self.f_values:
            return self.f_values[lam]
        r = np.asarray(self.mu.rates)
        w = np.asarray(self.mu.weights)
        fr = np.array([self.f_values[x] for x in self.mu.rates])
        return 1.0 / lam + np.sum(w * fr / (lam + r)) / (1.0 + np.sum(w / (lam + r)))

    def pair(self, lam: float, lam2: float) -> float:
        if (lam, lam2) in self.pair_values:
            return self.pair_values[(lam, lam2)]
        s = lam + lam2
        return 1.0 / s + lam2 / s * self.f(lam) + lam / s * self.f(lam2)

    def tmrca_active_pair(self) -> float:
        """``E[T_MRCA(2, 0)] = 1 + 2 int f dmu``."""
        return 1.0 + 2.0 * math.fsum(w * self.f_values[r] for r, w in zip(self.mu.rates, self.mu.weights))

    def tmrca_one_dormant(self, lam: float) -> float:
        return self.f(lam) + self.tmrca_active_pair()

    def tmrca_two_dormant(self, lam: float, lam2: float) -> float:
        return self.pair(lam, lam2) + self.tmrca_active_pair()


def solve_f(mu: RateMeasure) -> RecurrenceSolution:
    """Solve ``f(l_i) = 1/l_i + (sum_j c_j f(l_j)/(l_i+l_j)) / (1 + sum_j c_j/(l_i+l_j))``."""
    if not mu.is_discrete:
        raise TypeError("solve_f needs an atom measure")
    r = np.asarray(mu.rates)
    w = np.asarray(mu.weights)
    if len(r) > 100:
        raise ValueError("at most 100 atoms supported")
    C = w[None, :] / (r[:, None] + r[None, :])
    S = C.sum(axis=1)
    A = np.diag(1.0 + S) - C
    b = (1.0 + S) / r
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > 1e14:
        raise np.linalg.LinAlgError(f"recurrence system is singular (condition number {cond:.3g})")
    fv = linalg.lu_solve(linalg.lu_factor(A), b)
    f_values = {float(x): float(v) for x, v in zip(r, fv)}
    pair_values = {}
    for i, li in enumerate(r):
        for j, lj in enumerate(r):
            s = li + lj
            pair_values[(float(li), float(lj))] = float(1 / s + lj / s * fv[i] + li / s * fv[j])
    return RecurrenceSolution(mu, f_values, pair_values, cond)


# reflected random walk on {0, 1, ...}: forced up from 0, up w.p. p elsewhere

def rw_hitting_time(p: float, j: int, m: int) -> float:
    """Expected hitting time of ``m`` from ``j`` for the walk reflected at 0."""
    if not 0 < p <= 1 or p == 0.5:
        raise ValueError("need 0 < p <= 1 and p != 1/2")
    if not 0 <= j < m:
        raise ValueError("need 0 <= j < m")
    q = 1.0 - p
    d = p - q
    r = q / p
    return (m - j) / d + 2 * p * q / d**2 * (r**m - r**j)


def rw_hitting_linear(p, j: int, m: int) -> float:
    """Same expectation by solving the first-step equations directly.

    ``p`` is a constant or a sequence with ``p[k]`` the up-probability at
    position ``k`` (``p[0]`` is ignored: the walk is forced up from 0).
    """
    if not 0 <= j < m:
        raise ValueError("need 0 <= j < m")
    ps = np.full(m, float(p)) if np.ndim(p) == 0 else np.asarray(p, dtype=float)[:m]
    # unknowns E_0..E_{m-1}; E_m = 0
    A = np.zeros((m, m))
    b = np.ones(m)
    A[0, 0] = 1.0
    if m > 1:
        A[0, 1] = -1.0
    for k in range(1, m):
        A[k, k] = 1.0
        A[k, k - 1] = -(1.0 - ps[k])
        if k + 1 < m:
            A[k, k + 1] = -ps[k]
    return float(np.linalg.solve(A, b)[j])


def rw_hitting_mc(p, j: int, m: int, reps: int, rng: np.random.Generator,
                  max_steps: int = 10**7) -> tuple[float, float]:
    """Monte Carlo mean and standard error of the hitting time of ``m`` from ``j``."""
    if not 0 <= j < m:
        raise ValueError("need 0 <= j < m")
    if reps < 2:
        raise ValueError("need at least 2 replicates")
    ps = np.full(m, float(p)) if np.ndim(p) == 0 else np.asarray(p, dtype=float)[:m]
    pos = np.full(reps, j, dtype=np.int64)
    steps = np.zeros(reps, dtype=np.int64)
    alive = pos < m
    for _ in range(max_steps):
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        cur = pos[idx]
        up = (cur == 0) | (rng.random(idx.size) < ps[np.minimum(cur, m - 1)])
        pos[idx] = cur + np.where(up, 1, -1)
        steps[idx] += 1
        alive[idx] = pos[idx] < m
    else:
        raise RuntimeError("random walk did not reach the target")
    return float(steps.mean()), float(steps.std(ddof=1) / math.sqrt(reps))


# single ancestral line

@dataclass
class AncestralLimit:
    active: float
    degenerate: bool
    mu: RateMeasure

    def dormant_weight(self, lo: float = 0.0, hi: float = math.inf) -> float:
        """Limiting probability of being dormant with rate in ``(lo, hi]``."""
        if self.degenerate:
            return math.nan
        return self.active * self.mu.reciprocal_weight(lo, hi)


def ancestral_limit(mu: RateMeasure) -> AncestralLimit:
    inv = mu.integrate_reciprocal()
    if math.isinf(inv):
        return AncestralLimit(0.0, True, mu)
    return AncestralLimit(1.0 / (1.0 + inv), False, mu)


def ancestral_active_prob_limit(mu: RateMeasure) -> float:
    """``1 / (1 + int lam**-1 mu(dlam))``; 0 when the integral diverges."""
    return ancestral_limit(mu).active


def single_bank_active_prob(c: float, lam: float, t):
    """``P(active at t)`` for one line started active, ``mu = c delta_lam``."""
    t = np.asarray(t, dtype=float)
    out = lam / (c + lam) + c / (c + lam) * np.exp(-(c + lam) * t)
    return float(out) if out.ndim == 0 else out


@dataclass
class RenewalResult:
    t: np.ndarray
    p: np.ndarray
    h: float
    max_change: float
    converged: bool


def _renewal_grid(mu: RateMeasure, T: float, h: float) -> np.ndarray:
    # P: active prob. from an active start; Q: from the start of a dormancy.
    # P(t) = e^{-ct} + int_0^t c e^{-cs} Q(t-s) ds,  Q(t) = int_0^t k(s) P(t-s) ds,
    # with k the dormancy density; both convolutions by the trapezoid rule.
    c = mu.c
    N = int(round(T / h))
    s = np.arange(N + 1) * h
    e = np.exp(-c * s)
    ce = c * e
    k = mu.dormancy_density(s)
    P = np.empty(N + 1)
    Q = np.empty(N + 1)
    P[0], Q[0] = 1.0, 0.0
    denom = 1.0 - h * h * c * k[0] / 4.0
    for n in range(1, N + 1):
        a = e[n] + h * (np.dot(ce[1:n], Q[n - 1:0:-1]) + 0.5 * ce[n] * Q[0])
        b = h * (np.dot(k[1:n], P[n - 1:0:-1]) + 0.5 * k[n] * P[0])
        P[n] = (a + 0.5 * h * c * b) / denom
        Q[n] = b + 0.5 * h * k[0] * P[n]
    return P


def renewal_active_prob(mu: RateMeasure, t_grid, h: float = 1e-3, tol: float = 1e-4) -> RenewalResult:
    """Solve the renewal equation for ``P(active at t)`` of a line started active.

    The solve is repeated with step ``h/2``; ``converged`` reports whether the
    largest change at the requested times is below ``tol``. Values come from
    the finer solve.
    """
    if mu.is_empty:
        raise ValueError("renewal equation needs c > 0")
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t_grid < 0):
        raise ValueError("times must be nonnegative")
    T = max(float(t_grid.max()), h)
    T = math.ceil(T / h - 1e-9) * h
    coarse = _renewal_grid(mu, T, h)
    fine = _renewal_grid(mu, T, h / 2)
    pc = np.interp(t_grid, np.arange(len(coarse)) * h, coarse)
    pf = np.interp(t_grid, np.arange(len(fine)) * (h / 2), fine)
    change = float(np.max(np.abs(pf - pc)))
    return RenewalResult(t_grid, pf, h / 2, change, change < tol)


def _forward_rhs(z, rates, weights, c):
    p, q = z[0], z[1:]
    out = np.empty_like(z)
    out[0] = -c * p + np.dot(rates, q)
    out[1:] = -rates * q + p * weights
    return out


def _rk4(z0, rates, weights, c, t, nsteps):
    z = z0.copy()
    h = t / nsteps
    for _ in range(nsteps):
        k1 = _forward_rhs(z, rates, weights, c)
        k2 = _forward_rhs(z + 0.5 * h * k1, rates, weights, c)
        k3 = _forward_rhs(z + 0.5 * h * k2, rates, weights, c)
        k4 = _forward_rhs(z + h * k3, rates, weights, c)
        z = z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return z


def ode_ancestral_distribution(mu: RateMeasure, p0: float, q0, t: float,
                               tol: float = 1e-8) -> tuple[float, np.ndarray]:
    """Law ``(p(t), q_i(t))`` of one ancestral line from the forward equation.

    ``dp/dt = -c p + sum_i lam_i q_i``, ``dq_i/dt = -lam_i q_i + c_i p``,
    integrated by classical RK4; the step is halved until the result moves
    by less than ``tol``.
    """
    if not mu.is_discrete:
        raise TypeError("forward equation solver needs an atom measure")
    rates = np.asarray(mu.rates)
    weights = np.asarray(mu.weights)
    q0 = np.broadcast_to(np.asarray(q0, dtype=float), rates.shape)
    if abs(p0 + q0.sum() - 1.0) > 1e-12:
        raise ValueError("initial law must have total mass 1")
    z0 = np.concatenate([[p0], q0])
    if t == 0:
        return float(p0), q0.copy()
    stiff = max(mu.c, rates.max())
    nsteps = max(16, int(math.ceil(t * stiff / 0.05)))
    z = _rk4(z0, rates, weights, mu.c, t, nsteps)
    for _ in range(20):
        nsteps *= 2
        z2 = _rk4(z0, rates, weights, mu.c, t, nsteps)
        if np.max(np.abs(z2 - z)) < tol:
            z = z2
            break
        z = z2
    return float(z[0]), z[1:]


def fixation_weight(x: float, y, mu: RateMeasure) -> float:
    """Limiting probability that the diffusion fixes at (1, 1)."""
    if mu.is_empty:
        return float(x)
    if not mu.is_discrete:
        raise TypeError("fixation_weight takes an atom measure")
    inv = mu.integrate_reciprocal()
    y = np.broadcast_to(np.asarray(y, dtype=float), (len(mu.rates),))
    if np.any((y < 0) | (y > 1)) or not 0 <= x <= 1:
        raise ValueError("frequencies must lie in [0, 1]")
    r = np.asarray(mu.rates)
    w = np.asarray(mu.weights)
    return float((x + np.sum(y * w / r)) / (1.0 + inv))


# exploratory probes: tabulate, never assert

def probe_f_monotonicity(mu: RateMeasure, lam_grid) -> list[dict]:
    """Tabulate ``f(lam)`` and forward differences on a grid of rates."""
    sol = solve_f(mu)
    lam_grid = np.sort(np.asarray(lam_grid, dtype=float))
    vals = np.array([sol.f(x) for x in lam_grid])
    diffs = np.append(np.diff(vals) / np.diff(lam_grid), np.nan)
    return [{"lam": float(a), "f": float(b), "slope": float(d)} for a, b, d in zip(lam_grid, vals, diffs)]


def probe_pair_monotonicity(mu: RateMeasure, lam2: float, lam_grid) -> list[dict]:
    """Tabulate ``f(lam, lam2)`` over ``lam`` for fixed ``lam2``."""
    sol = solve_f(mu)
    lam_grid = np.sort(np.asarray(lam_grid, dtype=float))
    vals = np.array([sol.pair(x, lam2) for x in lam_grid])
    diffs = np.append(np.diff(vals) / np.diff(lam_grid), np.nan)
    return [{"lam": float(a), "lam2": lam2, "f_pair": float(b), "slope": float(d)}
            for a, b, d in zip(lam_grid, vals, diffs)]


def probe_dominance(mu: RateMeasure, mu_dominated: RateMeasure, t_grid, h: float = 1e-3) -> list[dict]:
    """Side-by-side ``P_t`` and ``E[T_MRCA(2,0)]`` for a measure and a dominated one."""
    pa = renewal_active_prob(mu, t_grid, h).p
    pb = renewal_active_prob(mu_dominated, t_grid, h).p
    ta = solve_f(mu).tmrca_active_pair() if mu.is_discrete else math.nan
    tb = solve_f(mu_dominated).tmrca_active_pair() if mu_dominated.is_discrete else math.nan
    return [{"t": float(t), "P": float(a), "P_dominated": float(b), "tmrca20": ta,
             "tmrca20_dominated": tb} for t, a, b in zip(np.atleast_1d(t_grid), pa, pb)]
