#!/usr/bin/env python3
"""Run the grid, not-coming-down and A^n experiments from their configs.

    python3 scripts/run_experiments.py [--workers N] [--reps R] [--outdir results]

Each experiment writes a CSV and a JSON sidecar. Reruns with the same
config and seed reproduce the CSVs byte for byte.
"""

import argparse
import json
import time
from pathlib import Path

from seedbank import experiments as ex
from seedbank.measure import RateMeasure

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--reps", type=int, default=None, help="override reps in every config")
    ap.add_argument("--outdir", default=str(ROOT / "results"))
    args = ap.parse_args()
    out = Path(args.outdir)

    def load(name):
        cfg = json.loads((ROOT / "configs" / name).read_text())
        if args.reps:
            cfg["reps"] = args.reps
        cfg["workers"] = args.workers
        return cfg, RateMeasure.from_config(cfg["mu"])

    for name in ("grid.json", "grid_gamma.json"):
        t0 = time.time()
        cfg, mu = load(name)
        rep = ex.tmrca_grid(mu, [tuple(p) for p in cfg["schedule"]], cfg["reps"], cfg["seed"],
                            cfg["workers"])
        path = ex.write_csv(out / Path(cfg["out"]).name, rep.header, rep.table())
        ex.write_sidecar(path, cfg)
        print(f"{name}: {len(rep.rows)} rows in {time.time() - t0:.1f}s -> {path}")
        for r in rep.rows:
            print(f"  n={r.n:>6} m={r.m_size:>6} mean={r.mean_tmrca:.3f}+-{r.se:.3f} ratio={r.ratio:.3f}")

    t0 = time.time()
    cfg, mu = load("notcdi.json")
    rows = ex.not_cdi_probe(mu, cfg["n_grid"], cfg["t"], cfg["reps"], cfg["seed"], cfg["workers"])
    path = ex.write_csv(out / Path(cfg["out"]).name, ("n", "mean_blocks", "se", "reps"),
                        [(r.n, r.mean_blocks, r.se, r.reps) for r in rows])
    ex.write_sidecar(path, cfg)
    print(f"notcdi.json: {time.time() - t0:.1f}s -> {path}")
    for r in rows:
        print(f"  n={r.n:>6} blocks={r.mean_blocks:.3f}+-{r.se:.3f}")

    t0 = time.time()
    cfg, mu = load("an.json")
    r = ex.a_n_experiment(mu, cfg["n"], cfg["reps"], cfg["seed"], cfg["workers"])
    path = ex.write_csv(out / Path(cfg["out"]).name,
                        ("n", "c", "mean", "se", "reps", "exact", "bracket_lo", "bracket_hi"),
                        [(r.n, r.c, r.summary.mean, r.summary.se, r.summary.reps, r.exact, *r.bracket)])
    ex.write_sidecar(path, cfg)
    print(f"an.json: {time.time() - t0:.1f}s -> {path}")
    print(f"  mean A={r.summary.mean:.4f}+-{r.summary.se:.4f} exact={r.exact:.4f}")


if __name__ == "__main__":
    main()
