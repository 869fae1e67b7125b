"""Batch Monte Carlo harness: seeds, summaries, grids and report files.

Every replicate gets its own 32-bit seed derived from
``SeedSequence([master, experiment, replicate])``, so a replicate's output
depends only on those three numbers. Replicates are dealt to workers
round-robin and reassembled by index, which makes results bit-identical for
any worker count.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import Variant, expected_A_exact, A_log_bracket, simulate_many
from .measure import RateMeasure

EXPERIMENTS = {"tmrca": 1, "grid": 2, "notcdi": 3, "an": 4, "partition": 5, "duality": 6,
               "oracle": 7}


def derive_seeds(master: int, experiment: int, reps: int, start: int = 0) -> np.ndarray:
    out = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        out[r] = np.random.SeedSequence([master, experiment, start + r]).generate_state(1)[0]
    return out


def replicate_rng(master: int, experiment: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master, experiment, replicate]))


# summaries

@dataclass
class McSummary:
    mean: float
    se: float
    reps: int
    extras: dict = field(default_factory=dict)

    @property
    def var(self) -> float:
        return self.se**2 * self.reps

    def within(self, target: float, k: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.mean - target) <= k * self.se + slack


def summarize(samples: Iterable[float], **extras) -> McSummary:
    x = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples")
    return McSummary(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), int(x.size),
                     dict(extras))


def merge(a: McSummary, b: McSummary) -> McSummary:
    """Pooled summary of two disjoint sample sets."""
    n = a.reps + b.reps
    delta = b.mean - a.mean
    mean = a.mean + delta * b.reps / n
    m2 = (a.var * (a.reps - 1) + b.var * (b.reps - 1)
          + delta * delta * a.reps * b.reps / n)
    return McSummary(mean, math.sqrt(m2 / (n - 1) / n), n)


# parallel runs

def _run_chunk(args):
    seeds, n0, m0, variant, mu_cfg, kw = args
    return simulate_many(seeds, n0, m0, variant, RateMeasure.from_config(mu_cfg), **kw)


def run_replicates(seeds: np.ndarray, n0: int, m0, variant: Variant, mu: RateMeasure,
                   workers: int = 1, **kw) -> dict[str, np.ndarray]:
    """``simulate_many`` spread over ``workers`` processes, results in replicate order."""
    seeds = np.asarray(seeds, dtype=np.int64)
    if workers <= 1 or len(seeds) < 2:
        return simulate_many(seeds, n0, m0, variant, mu, **kw)
    workers = min(workers, len(seeds))
    m0 = m0 if isinstance(m0, (int, np.integer)) else list(m0)
    jobs = [(seeds[w::workers], n0, m0, variant, mu.to_config(), kw) for w in range(workers)]
    with ProcessPoolExecutor(workers) as pool:
        parts = list(pool.map(_run_chunk, jobs))
    out = {}
    for key in parts[0]:
        arr = np.empty(len(seeds), dtype=parts[0][key].dtype)
        for w, part in enumerate(parts):
            arr[w::workers] = part[key]
        out[key] = arr
    return out


# bounds grid

def log_argument(n: int, m_size: int, c: float) -> float:
    return math.log(n) + m_size / (2 * c)


@dataclass
class BoundsRow:
    n: int
    m_size: int
    mean_tmrca: float
    se: float
    ratio: float
    lower_ref: float
    upper_ref: float
    reps: int


@dataclass
class BoundsReport:
    mu: dict
    rows: list[BoundsRow]

    header = ("n", "m_size", "mean_tmrca", "se", "ratio", "lower_ref", "upper_ref", "reps")

    def table(self) -> list[tuple]:
        return [tuple(getattr(r, h) for h in self.header) for r in self.rows]


def reference_bounds(mu: RateMeasure) -> tuple[float, float]:
    """(lower, upper) constants for the grid ratio; the Gamma upper one is unknown (nan)."""
    if mu.kind == "gamma":
        return mu.b / mu.a, math.nan
    lo, hi = mu.support_bounds()
    return 1.0 / hi, 2.0 / lo


def tmrca_grid(mu: RateMeasure, schedule: Sequence[tuple[int, int]], reps: int, seed: int,
               workers: int = 1, fixed_rate: float | None = None) -> BoundsReport:
    """Standard-engine T_MRCA from ``(n, m_size)`` with dormant rates i.i.d. ``nu``.

    ``fixed_rate`` gives every initial dormant block that rate instead (debugging).
    """
    if mu.is_empty:
        raise ValueError("the grid needs a nonzero rate measure")
    lower, upper = reference_bounds(mu)
    rows = []
    for k, (n, m_size) in enumerate(schedule):
        arg = log_argument(n, m_size, mu.c)
        if arg <= math.e:
            raise ValueError(f"log n + m/(2c) = {arg:.3f} must exceed e at grid point {(n, m_size)}")
        m0 = m_size if fixed_rate is None else [fixed_rate] * m_size
        seeds = derive_seeds(seed, EXPERIMENTS["grid"] * 1000 + k, reps)
        t = run_replicates(seeds, n, m0, Variant(), mu, workers)["t"]
        s = summarize(t)
        rows.append(BoundsRow(n, m_size, s.mean, s.se, s.mean / math.log(arg), lower, upper, reps))
    return BoundsReport(mu.to_config(), rows)


# not coming down from infinity (finite-n proxy)

@dataclass
class NotCdiRow:
    n: int
    mean_blocks: float
    se: float
    reps: int


def not_cdi_probe(mu: RateMeasure, n_grid: Sequence[int], t: float, reps: int, seed: int,
                  workers: int = 1) -> list[NotCdiRow]:
    """Mean total number of blocks at time ``t`` starting from ``n`` active blocks."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    rows = []
    for k, n in enumerate(n_grid):
        if t == 0:
            rows.append(NotCdiRow(int(n), float(n), 0.0, reps))
            continue
        seeds = derive_seeds(seed, EXPERIMENTS["notcdi"] * 1000 + k, reps)
        out = run_replicates(seeds, int(n), 0, Variant(), mu, workers, horizon=float(t))
        s = summarize(out["n"] + out["dormant"])
        rows.append(NotCdiRow(int(n), s.mean, s.se, reps))
    return rows


# the A^n statistic

@dataclass
class AnResult:
    n: int
    c: float
    summary: McSummary
    exact: float
    bracket: tuple[float, float]

    @property
    def z(self) -> float:
        return (self.summary.mean - self.exact) / self.summary.se if self.summary.se > 0 else 0.0


def a_n_experiment(mu: RateMeasure, n: int, reps: int, seed: int, workers: int = 1) -> AnResult:
    """Record-setting deactivations from ``(n, empty)`` until one active block remains."""
    if n < 2:
        raise ValueError("n must be at least 2")
    seeds = derive_seeds(seed, EXPERIMENTS["an"], reps)
    out = run_replicates(seeds, n, 0, Variant(), mu, workers, stop="first_n1")
    a = out["a_count"].astype(float)
    if mu.c == 0:
        s = McSummary(float(a.mean()), 0.0, reps) if reps < 2 else summarize(a)
        return AnResult(n, 0.0, s, 0.0, (0.0, 0.0))
    return AnResult(n, mu.c, summarize(a), expected_A_exact(n, mu.c), A_log_bracket(n, mu.c))


# output

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path | None, header: Sequence[str], rows: Iterable[Sequence]) -> Path | None:
    """Write rows with a fixed header; ``path=None`` writes to stdout."""
    def dump(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])

    if path is None:
        dump(sys.stdout)
        return None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        dump(fh)
    return path


def write_sidecar(path: str | Path, config: dict) -> Path:
    """Resolved config next to a CSV: ``out.csv`` -> ``out.json``."""
    side = Path(path).with_suffix(".json")
    side.parent.mkdir(parents=True, exist_ok=True)
    side.write_text(json.dumps(config, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return side


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")
