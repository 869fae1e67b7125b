"""Seed-bank diffusion for atom measures and its moment duality with the coalescent.

For ``mu = sum_i c_i delta_{lam_i}`` the diffusion is finite dimensional:

    dX   = (sum_i c_i Y_i - c X) dt + sqrt(X (1 - X)) dW
    dY_i = lam_i (X - Y_i) dt

The seed-bank coordinates ``y`` are ordered like ``mu.rates`` (ascending).

Two integrators are available. ``"em"`` is plain Euler-Maruyama with the
state clamped to ``[0, 1]`` after every step. Clamping turns ``x = 0`` into a
partly reflecting barrier, which biases heterozygosity upward over long
horizons. ``"beta"`` (the default) draws the new ``x`` from the Beta law with
the Euler mean ``x + (sum c_i y_i - c x) dt`` and variance ``x (1-x) dt``, so
it stays in ``[0, 1]`` and lets paths settle at the boundary. The ``y`` update
is the explicit Euler step in both schemes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .engine import Variant, run_kernel
from .measure import RateMeasure
from .oracles import fixation_weight


@dataclass
class DiffusionState:
    x: float
    y: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))


def _check_atoms(mu: RateMeasure):
    if not mu.is_discrete:
        raise TypeError("the diffusion is implemented for atom measures only")


def _em_step(x, y, rates, weights, c, dt, z):
    # x: (paths,), y: (paths, k)
    drift = y @ weights - c * x
    sd = np.sqrt(np.maximum(0.0, x * (1.0 - x)))
    x_new = x + drift * dt + sd * math.sqrt(dt) * z
    y_new = y + rates * (x[:, None] - y) * dt
    np.clip(x_new, 0.0, 1.0, out=x_new)
    np.clip(y_new, 0.0, 1.0, out=y_new)
    return x_new, y_new


def step_em(state: DiffusionState, mu: RateMeasure, dt: float, rng: np.random.Generator | None,
            noise: bool = True) -> DiffusionState:
    """One Euler-Maruyama step. With ``noise=False`` (or ``rng=None``) only the drift is applied."""
    _check_atoms(mu)
    if dt <= 0:
        raise ValueError("dt must be positive")
    z = rng.standard_normal(1) if (noise and rng is not None) else np.zeros(1)
    x, y = _em_step(np.array([state.x]), state.y[None, :], np.asarray(mu.rates),
                    np.asarray(mu.weights), mu.c, dt, z)
    return DiffusionState(float(x[0]), y[0], state.t + dt)


@njit(cache=True)
def _paths_kernel(x0, y0, rates, weights, c, dt, marks, seeds, beta):
    npaths = seeds.shape[0]
    k = rates.shape[0]
    nm = marks.shape[0]
    xs = np.empty((nm, npaths))
    ys = np.empty((nm, npaths, k))
    sq = math.sqrt(dt)
    y = np.empty(k)
    for p in range(npaths):
        np.random.seed(seeds[p])
        x = x0
        for i in range(k):
            y[i] = y0[i]
        j = 0
        while j < nm and marks[j] == 0:
            xs[j, p] = x
            ys[j, p, :] = y
            j += 1
        s = 0
        while j < nm:
            drift = -c * x
            for i in range(k):
                drift += weights[i] * y[i]
            mean = x + drift * dt
            var = x * (1.0 - x) * dt
            if beta:
                if mean <= 0.0:
                    xn = 0.0
                elif mean >= 1.0:
                    xn = 1.0
                else:
                    spread = mean * (1.0 - mean) / var - 1.0 if var > 0.0 else -1.0
                    if spread <= 0.0 or spread > 1e12:
                        xn = mean
                    else:
                        xn = np.random.beta(mean * spread, (1.0 - mean) * spread)
                        if not (xn >= 0.0 and xn <= 1.0):
                            xn = mean
            else:
                xn = mean + math.sqrt(max(0.0, x * (1.0 - x))) * sq * np.random.normal()
                xn = min(1.0, max(0.0, xn))
            for i in range(k):
                yi = y[i] + rates[i] * (x - y[i]) * dt
                y[i] = min(1.0, max(0.0, yi))
            x = xn
            s += 1
            while j < nm and marks[j] == s:
                xs[j, p] = x
                ys[j, p, :] = y
                j += 1
    return xs, ys


def simulate_paths(x0: float, y0, mu: RateMeasure, t_grid, dt: float, paths: int,
                   rng: np.random.Generator, scheme: str = "beta") -> tuple[np.ndarray, np.ndarray]:
    """Values of ``x`` and ``y`` at each time of ``t_grid``.

    Returns arrays of shape ``(len(t_grid), paths)`` and ``(len(t_grid), paths, k)``.
    Requested times are rounded to the nearest multiple of ``dt``. Each path
    runs on its own stream seeded from ``rng``.
    """
    _check_atoms(mu)
    if scheme not in ("beta", "em"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    k = len(mu.rates)
    y0 = np.broadcast_to(np.asarray(y0, dtype=float), (k,)).copy()
    if not 0 <= x0 <= 1 or np.any((y0 < 0) | (y0 > 1)):
        raise ValueError("initial frequencies must lie in [0, 1]")
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    marks = np.rint(t_grid / dt).astype(np.int64)
    if np.any(np.diff(marks) < 0):
        raise ValueError("t_grid must be nondecreasing")
    seeds = rng.integers(2**32, size=paths).astype(np.int64)
    xs, ys = _paths_kernel(float(x0), y0, np.asarray(mu.rates, dtype=float),
                           np.asarray(mu.weights, dtype=float), mu.c, float(dt), marks, seeds,
                           scheme == "beta")
    assert np.all((xs >= 0) & (xs <= 1)) and np.all((ys >= 0) & (ys <= 1))
    return xs, ys


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def _moment_args(mu, y0, m):
    k = len(mu.rates)
    y0 = np.broadcast_to(np.asarray(y0, dtype=float), (k,))
    m = np.broadcast_to(np.asarray(m, dtype=np.int64), (k,))
    if np.any(m < 0):
        raise ValueError("multiplicities must be nonnegative")
    return y0, m


def dual_moment_lhs(x0: float, y0, n: int, m, t: float, dt: float, paths: int,
                    rng: np.random.Generator, mu: RateMeasure,
                    scheme: str = "beta") -> tuple[float, float]:
    """Monte Carlo ``E[X_t**n prod_i Y_t(lam_i)**m_i]`` over diffusion paths."""
    _check_atoms(mu)
    y0, m = _moment_args(mu, y0, m)
    if n < 0 or (n == 0 and m.sum() == 0):
        raise ValueError("need n >= 0 and (n, m) not both zero")
    if t == 0:
        return float(x0**n * np.prod(y0**m)), 0.0
    xs, ys = simulate_paths(x0, y0, mu, [t], dt, paths, rng, scheme)
    vals = xs[0] ** n * np.prod(ys[0] ** m, axis=1)
    return _mean_se(vals)


def dual_moment_rhs(x0: float, y0, n: int, m, t: float, reps: int, rng: np.random.Generator,
                    mu: RateMeasure) -> tuple[float, float]:
    """Monte Carlo ``E[x0**N_t prod y0(lam)**M_t(lam)]`` over coalescent runs from ``(n, m)``."""
    _check_atoms(mu)
    y0, m = _moment_args(mu, y0, m)
    if n < 0 or (n == 0 and m.sum() == 0):
        raise ValueError("need n >= 0 and (n, m) not both zero")
    rates = np.asarray(mu.rates)
    init = np.repeat(rates, m)
    if t == 0:
        return float(x0**n * np.prod(y0**m)), 0.0
    seeds = rng.integers(2**32, size=reps)
    vals = np.empty(reps)
    variant = Variant()
    for r, s in enumerate(seeds):
        # the dual keeps moving after the common ancestor is found
        out = run_kernel(n, init, variant, mu, int(s), horizon=t, stop="horizon")
        idx = np.searchsorted(rates, out.dormant)
        vals[r] = x0**out.n * np.prod(y0[idx])
    return _mean_se(vals)


def martingale_functional(x, y, mu: RateMeasure):
    """``(x + sum_i y_i c_i/lam_i) / (1 + sum_i c_i/lam_i)``, driftless under the SDE."""
    r = np.asarray(mu.rates)
    w = np.asarray(mu.weights)
    return (x + np.asarray(y) @ (w / r)) / (1.0 + mu.integrate_reciprocal())


def martingale_trace(x0: float, y0, mu: RateMeasure, t_grid, dt: float, paths: int,
                     rng: np.random.Generator, scheme: str = "beta") -> list[tuple[float, float, float]]:
    """``(t, mean, se)`` of the driftless functional at each requested time."""
    xs, ys = simulate_paths(x0, y0, mu, t_grid, dt, paths, rng, scheme)
    out = []
    for t, x, y in zip(np.atleast_1d(t_grid), xs, ys):
        mean, se = _mean_se(martingale_functional(x, y, mu))
        out.append((float(t), mean, se))
    return out


@dataclass
class FixationReport:
    t: float
    paths: int
    interior_mass: float
    mean_x: float
    se_x: float
    fixation_weight: float
    fixed_high: float
    fixed_low: float


def fixation_check(x0: float, y0, mu: RateMeasure, t_long: float, dt: float, paths: int,
                   rng: np.random.Generator, margin: float = 0.05,
                   scheme: str = "beta") -> FixationReport:
    """Summarise how far paths at ``t_long`` have moved to the corners (0,0) and (1,1)."""
    if math.isinf(mu.integrate_reciprocal()):
        raise ValueError("fixation needs a finite expected dormancy time")
    xs, ys = simulate_paths(x0, y0, mu, [t_long], dt, paths, rng, scheme)
    x = xs[0]
    mean, se = _mean_se(x)
    interior = float(np.mean((x > margin) & (x < 1 - margin)))
    return FixationReport(float(t_long), paths, interior, mean, se, fixation_weight(x0, y0, mu),
                          float(np.mean(x >= 1 - margin)), float(np.mean(x <= margin)))
