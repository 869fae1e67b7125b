"""Finite rate measures on (0, inf) driving dormancy.

A measure ``mu`` is either a finite sum of weighted atoms or ``c`` times a
Gamma(a, b) law with shape ``a`` and *rate* ``b`` (density proportional to
``lam**(a-1) * exp(-b lam)``, mean ``a/b``). This is the convention under which
the dormancy time is Lomax, ``K(t) = 1 - (1 + t/b)**(-a)``.

The empty measure (``c = 0``) is allowed so that the Kingman coalescent is
available as a degenerate mode of every simulator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

ATOMS = "atoms"
GAMMA = "gamma"
EMPTY = "empty"


class EmptyMeasureError(ValueError):
    """Raised when an operation needs dormancy but the measure has no mass."""

    def __init__(self, msg: str = "no dormancy possible: rate measure is empty"):
        super().__init__(msg)


@dataclass(frozen=True)
class RateMeasure:
    kind: str
    rates: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.kind == ATOMS:
            if not self.rates:
                raise ValueError("atom list must be non-empty; use RateMeasure.empty()")
            if len(self.rates) != len(self.weights):
                raise ValueError("rates and weights differ in length")
            if any(r <= 0 or not math.isfinite(r) for r in self.rates):
                raise ValueError("atom rates must be finite and strictly positive")
            if any(w <= 0 or not math.isfinite(w) for w in self.weights):
                raise ValueError("atom weights must be finite and strictly positive")
            if len(set(self.rates)) != len(self.rates):
                raise ValueError("atom rates must be pairwise distinct")
            object.__setattr__(self, "c", float(math.fsum(self.weights)))
        elif self.kind == GAMMA:
            if not (self.a > 0 and self.b > 0 and self.c > 0):
                raise ValueError("gamma measure needs a > 0, b > 0, c > 0")
        elif self.kind == EMPTY:
            object.__setattr__(self, "c", 0.0)
        else:
            raise ValueError(f"unknown measure kind {self.kind!r}")

    # constructors

    @classmethod
    def atoms(cls, pairs: Sequence[tuple[float, float]]) -> "RateMeasure":
        """Discrete measure ``sum_i w_i * delta_{rate_i}`` from ``(rate, weight)`` pairs."""
        pairs = sorted((float(r), float(w)) for r, w in pairs)
        return cls(ATOMS, tuple(r for r, _ in pairs), tuple(w for _, w in pairs))

    @classmethod
    def dirac(cls, rate: float, mass: float = 1.0) -> "RateMeasure":
        return cls.atoms([(rate, mass)])

    @classmethod
    def gamma(cls, a: float, b: float, c: float = 1.0) -> "RateMeasure":
        return cls(GAMMA, a=float(a), b=float(b), c=float(c))

    @classmethod
    def empty(cls) -> "RateMeasure":
        return cls(EMPTY)

    @classmethod
    def from_config(cls, cfg: dict | str | Path) -> "RateMeasure":
        """Build from ``{"type": "atoms", "atoms": [[rate, weight], ...]}``,
        ``{"type": "gamma", "a": .., "b": .., "c": ..}`` or ``{"type": "empty"}``.

        A string is parsed as inline JSON if it starts with ``{``, otherwise it
        is read as a path to a JSON file.
        """
        if isinstance(cfg, (str, Path)):
            text = str(cfg).strip()
            if text.startswith("{"):
                cfg = json.loads(text)
            else:
                cfg = json.loads(Path(cfg).read_text())
        kind = cfg.get("type")
        if kind == ATOMS:
            return cls.atoms([tuple(p) for p in cfg["atoms"]])
        if kind == GAMMA:
            return cls.gamma(cfg["a"], cfg["b"], cfg.get("c", 1.0))
        if kind == EMPTY:
            return cls.empty()
        raise ValueError(f"unknown measure type {kind!r}")

    def to_config(self) -> dict:
        if self.kind == ATOMS:
            return {"type": ATOMS, "atoms": [[r, w] for r, w in zip(self.rates, self.weights)]}
        if self.kind == GAMMA:
            return {"type": GAMMA, "a": self.a, "b": self.b, "c": self.c}
        return {"type": EMPTY}

    # basic accessors

    @property
    def is_empty(self) -> bool:
        return self.kind == EMPTY

    @property
    def is_discrete(self) -> bool:
        return self.kind == ATOMS

    def total_mass(self) -> float:
        return self.c

    def support_bounds(self) -> tuple[float, float]:
        """(inf, sup) of the support; Gamma support is (0, inf)."""
        if self.kind == ATOMS:
            return self.rates[0], self.rates[-1]
        if self.kind == GAMMA:
            return 0.0, math.inf
        raise EmptyMeasureError()

    def probabilities(self) -> np.ndarray:
        """Atom probabilities of the normalised law ``nu = mu / c``."""
        if self.kind != ATOMS:
            raise TypeError("probabilities are defined for atom measures only")
        w = np.asarray(self.weights)
        return w / w.sum()

    # sampling

    def sample_rate(self, rng: np.random.Generator, size: int | None = None):
        """Draw rate(s) from ``nu = mu / c``."""
        if self.kind == EMPTY:
            raise EmptyMeasureError()
        if self.kind == ATOMS:
            if len(self.rates) == 1:
                return self.rates[0] if size is None else np.full(size, self.rates[0])
            idx = rng.choice(len(self.rates), size=size, p=self.probabilities())
            out = np.asarray(self.rates)[idx]
            return float(out) if size is None else out
        out = rng.gamma(self.a, 1.0 / self.b, size=size)
        return float(out) if size is None else out

    # integrals

    def integrate_reciprocal(self) -> float:
        """``int lam**-1 mu(dlam)``, the mean dormancy time times ``c``; may be ``inf``."""
        if self.kind == EMPTY:
            return 0.0
        if self.kind == ATOMS:
            return math.fsum(w / r for r, w in zip(self.rates, self.weights))
        if self.a <= 1.0:
            return math.inf
        # E[1/lam] = b / (a - 1) for lam ~ Gamma(shape a, rate b)
        return self.c * self.b / (self.a - 1.0)

    def reciprocal_weight(self, lo: float, hi: float) -> float:
        """``int_{(lo, hi]} lam**-1 mu(dlam)``."""
        if self.kind == EMPTY:
            return 0.0
        if self.kind == ATOMS:
            return math.fsum(w / r for r, w in zip(self.rates, self.weights) if lo < r <= hi)
        if self.a <= 1.0:
            return math.inf if lo <= 0.0 else _gamma_reciprocal_interval(self, lo, hi)
        return _gamma_reciprocal_interval(self, lo, hi)

    def integrate_rate(self) -> float:
        """``int lam mu(dlam)``."""
        if self.kind == EMPTY:
            return 0.0
        if self.kind == ATOMS:
            return math.fsum(w * r for r, w in zip(self.rates, self.weights))
        return self.c * self.a / self.b

    def survival_laplace(self, t):
        """``int exp(-lam t) nu(dlam)``: probability a fresh dormancy outlasts ``t``."""
        if self.kind == EMPTY:
            raise EmptyMeasureError()
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("t must be nonnegative")
        if self.kind == ATOMS:
            p = self.probabilities()
            r = np.asarray(self.rates)
            out = np.exp(-np.multiply.outer(t, r)) @ p
        else:
            out = (1.0 + t / self.b) ** (-self.a)
        return float(out) if out.ndim == 0 else out

    def dormancy_cdf(self, t):
        """``K(t) = int (1 - exp(-lam t)) nu(dlam)``."""
        if self.kind == EMPTY:
            raise EmptyMeasureError()
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("t must be nonnegative")
        if self.kind == ATOMS:
            p = self.probabilities()
            r = np.asarray(self.rates)
            out = -np.expm1(-np.multiply.outer(t, r)) @ p
        else:
            out = -np.expm1(-self.a * np.log1p(t / self.b))
        return float(out) if out.ndim == 0 else out

    def dormancy_density(self, t):
        """Density of the dormancy time, ``int lam exp(-lam t) nu(dlam)``."""
        if self.kind == EMPTY:
            raise EmptyMeasureError()
        t = np.asarray(t, dtype=float)
        if self.kind == ATOMS:
            p = self.probabilities()
            r = np.asarray(self.rates)
            out = (np.exp(-np.multiply.outer(t, r)) * r) @ p
        else:
            out = (self.a / self.b) * (1.0 + t / self.b) ** (-self.a - 1.0)
        return float(out) if out.ndim == 0 else out

    def expect(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """``int fn(lam) mu(dlam)`` for atom measures (exact finite sum)."""
        if self.kind == EMPTY:
            return 0.0
        if self.kind != ATOMS:
            raise TypeError("expect() is exact for atom measures only; use quadrature")
        r = np.asarray(self.rates)
        return float(math.fsum(np.asarray(self.weights) * fn(r)))

    def kernel_args(self) -> tuple[int, np.ndarray, np.ndarray, float, float, float]:
        """Flat representation consumed by the compiled simulation kernels."""
        if self.kind == ATOMS:
            cum = np.cumsum(self.probabilities())
            cum[-1] = 1.0
            return 0, np.asarray(self.rates, dtype=np.float64), cum, 0.0, 0.0, self.c
        if self.kind == GAMMA:
            return 1, np.zeros(1), np.ones(1), self.a, self.b, self.c
        return 2, np.zeros(1), np.ones(1), 0.0, 0.0, 0.0


def _gamma_reciprocal_interval(mu: RateMeasure, lo: float, hi: float) -> float:
    from scipy import stats

    # lam**-1 * Gamma(a, rate b) density = b/(a-1) * Gamma(a-1, rate b) density when
    # a > 1, otherwise fall back to quadrature on the bounded interval.
    if mu.a > 1.0:
        g = stats.gamma(mu.a - 1.0, scale=1.0 / mu.b)
        return mu.c * mu.b / (mu.a - 1.0) * (g.cdf(hi) - g.cdf(lo))
    from scipy import integrate

    dens = stats.gamma(mu.a, scale=1.0 / mu.b).pdf
    val, _ = integrate.quad(lambda x: dens(x) / x, lo, hi, limit=200)
    return mu.c * val
