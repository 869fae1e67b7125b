"""Command line entry point: ``seedbank <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .diffusion import dual_moment_lhs, dual_moment_rhs
from .engine import Variant, expected_A_exact, pure_death_extinction_mean
from .measure import RateMeasure
from .oracles import (ancestral_limit, fixation_weight, renewal_active_prob, rw_hitting_time,
                      single_bank_active_prob, solve_f, tmrca_two_single_bank)
from .partition import MERGE, simulate_direct, simulate_graphical

DEFAULT_MU = '{"type": "atoms", "atoms": [[1.0, 1.0]]}'


def _emit_json(obj, out: str | None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=ex._jsonable) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_config(path: str | None) -> dict:
    return json.loads(Path(path).read_text()) if path else {}


def _resolve(args, cfg: dict, defaults: dict) -> dict:
    """Config values overridden by command-line flags that were given."""
    out = dict(defaults)
    out.update(cfg)
    for key in defaults:
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


def cmd_tmrca(args):
    mu = RateMeasure.from_config(args.mu)
    variant = Variant.parse(args.variant, args.alpha, args.m0)
    seeds = ex.derive_seeds(args.seed, ex.EXPERIMENTS["tmrca"], args.reps)
    res = ex.run_replicates(seeds, args.n, args.m, variant, mu, args.workers,
                            horizon=args.horizon)
    rows = [(r, float(t) if ok else "", int(d), bool(ok))
            for r, (t, d, ok) in enumerate(zip(res["t"], res["deactivations"], res["absorbed"]))]
    path = ex.write_csv(args.out, ("replicate", "t_mrca", "deactivations", "absorbed"),
                        rows)
    if args.out:
        ex.write_sidecar(path, {"command": "tmrca", "mu": mu.to_config(), "n": args.n, "m": args.m,
                                "variant": args.variant, "alpha": args.alpha, "m0": args.m0,
                                "reps": args.reps, "seed": args.seed, "horizon": args.horizon})


def cmd_partition(args):
    mu = RateMeasure.from_config(args.mu)
    sim = simulate_graphical if args.simulator == "graphical" else simulate_direct
    rng = ex.replicate_rng(args.seed, ex.EXPERIMENTS["partition"], 0)
    path = sim(args.K, mu, args.horizon, None, rng)
    rows = []
    for t, kind, a, b in path.events:
        detail = f"{a}<-{b}" if kind == MERGE else f"{a}:{b!r}"
        rows.append((t, kind, detail))
    if path.t_mrca is not None:
        rows.append((path.t_mrca, "mrca", ""))
    for t in args.snapshot or ():
        p = path.partition_at(t)
        detail = " ".join("{" + ",".join(map(str, m)) + "}" + f"@{f!r}" for m, f in p.blocks)
        rows.append((t, "snapshot", detail))
    rows.sort(key=lambda r: r[0])
    ex.write_csv(args.out, ("time", "kind", "detail"), rows)


def _single_formula(args) -> dict:
    f = args.formula
    if f == "tmrca2":
        val = tmrca_two_single_bank(args.c, args.lam)
    elif f == "rw":
        val = rw_hitting_time(args.p, args.j, args.m)
    elif f == "A":
        val = expected_A_exact(args.n, args.c)
    elif f == "pure-death":
        val = pure_death_extinction_mean(args.n, RateMeasure.from_config(args.mu))
    else:
        val = single_bank_active_prob(args.c, args.lam, args.t[0] if args.t else 1.0)
    return {"formula": f, "value": val}


def cmd_oracle(args):
    if args.formula != "report":
        _emit_json(_single_formula(args), args.out)
        return
    mu = RateMeasure.from_config(args.mu)
    report: dict = {"mu": mu.to_config()}
    lim = ancestral_limit(mu)
    report["ancestral_active_limit"] = lim.active
    if mu.is_discrete:
        sol = solve_f(mu)
        report["f"] = {repr(r): v for r, v in sol.f_values.items()}
        report["tmrca_active_pair"] = sol.tmrca_active_pair()
        report["fixation_weight"] = fixation_weight(args.x0, args.y0, mu)
    if args.t:
        res = renewal_active_prob(mu, args.t)
        report["active_prob"] = {repr(float(t)): float(p) for t, p in zip(res.t, res.p)}
    _emit_json(report, args.out)


def cmd_duality(args):
    mu = RateMeasure.from_config(args.mu)
    k = len(mu.rates)
    m = np.broadcast_to(np.asarray(args.m, dtype=np.int64), (k,)) if len(args.m) in (1, k) else None
    if m is None:
        raise SystemExit("--m needs one multiplicity or one per atom")
    y0 = np.broadcast_to(np.asarray(args.y0, dtype=float), (k,))
    rng_l = ex.replicate_rng(args.seed, ex.EXPERIMENTS["duality"], 0)
    rng_r = ex.replicate_rng(args.seed, ex.EXPERIMENTS["duality"], 1)
    lhs, se_l = dual_moment_lhs(args.x0, y0, args.n, m, args.t, args.dt, args.reps, rng_l, mu,
                                scheme=args.scheme)
    rhs, se_r = dual_moment_rhs(args.x0, y0, args.n, m, args.t, args.reps, rng_r, mu)
    ok = abs(lhs - rhs) <= 3 * (se_l + se_r) + args.slack
    _emit_json({"lhs": lhs, "se_lhs": se_l, "rhs": rhs, "se_rhs": se_r, "pass": bool(ok)}, args.out)


GRID_DEFAULTS = {"mu": '{"type": "atoms", "atoms": [[1.0, 0.5], [2.0, 0.5]]}',
                 "schedule": [[100, 100], [1000, 1000], [10000, 10000]],
                 "reps": 1000, "seed": 0, "out": None, "workers": 1}


def cmd_grid(args):
    cfg = _resolve(args, _load_config(args.config), GRID_DEFAULTS)
    mu = RateMeasure.from_config(cfg["mu"])
    rep = ex.tmrca_grid(mu, [tuple(p) for p in cfg["schedule"]], cfg["reps"], cfg["seed"],
                        cfg["workers"])
    path = ex.write_csv(cfg["out"], rep.header, rep.table())
    if cfg["out"]:
        ex.write_sidecar(path, {**cfg, "mu": mu.to_config(), "command": "grid"})


NOTCDI_DEFAULTS = {"mu": DEFAULT_MU, "n_grid": [100, 1000, 10000], "t": 0.1, "reps": 1000,
                   "seed": 0, "out": None, "workers": 1}


def cmd_notcdi(args):
    cfg = _resolve(args, _load_config(args.config), NOTCDI_DEFAULTS)
    mu = RateMeasure.from_config(cfg["mu"])
    rows = ex.not_cdi_probe(mu, cfg["n_grid"], cfg["t"], cfg["reps"], cfg["seed"], cfg["workers"])
    path = ex.write_csv(cfg["out"], ("n", "mean_blocks", "se", "reps"),
                        [(r.n, r.mean_blocks, r.se, r.reps) for r in rows])
    if cfg["out"]:
        ex.write_sidecar(path, {**cfg, "mu": mu.to_config(), "command": "notcdi"})


AN_DEFAULTS = {"mu": DEFAULT_MU, "n": 1000, "reps": 10000, "seed": 0, "out": None, "workers": 1}


def cmd_an(args):
    cfg = _resolve(args, _load_config(args.config), AN_DEFAULTS)
    mu = RateMeasure.from_config(cfg["mu"])
    r = ex.a_n_experiment(mu, cfg["n"], cfg["reps"], cfg["seed"], cfg["workers"])
    row = (r.n, r.c, r.summary.mean, r.summary.se, r.summary.reps, r.exact, *r.bracket)
    path = ex.write_csv(cfg["out"],
                        ("n", "c", "mean", "se", "reps", "exact", "bracket_lo", "bracket_hi"), [row])
    if cfg["out"]:
        ex.write_sidecar(path, {**cfg, "mu": mu.to_config(), "command": "an"})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seedbank", description="Continuum seed-bank coalescent tools")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, reps_default=None, config=False):
        sp.add_argument("--seed", type=int, default=None if config else 0)
        sp.add_argument("--reps", type=int, default=reps_default)
        sp.add_argument("--out", default=None, help="output path (default stdout)")
        sp.add_argument("--workers", type=int, default=None if config else 1)
        if config:
            sp.add_argument("--config", default=None, help="JSON config file")
            sp.add_argument("--mu", default=None, help="measure as inline JSON or a JSON file")
        else:
            sp.add_argument("--mu", default=DEFAULT_MU, help="measure as inline JSON or a JSON file")

    sp = sub.add_parser("tmrca", help="T_MRCA samples of the block-counting process")
    common(sp, 1000)
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--m", type=int, default=0, help="dormant blocks, rates drawn from nu")
    sp.add_argument("--variant", default="standard",
                    choices=("standard", "accelerated", "decelerated"))
    sp.add_argument("--alpha", type=float, default=0.75)
    sp.add_argument("--m0", type=int, default=2)
    sp.add_argument("--horizon", type=float, default=None)
    sp.set_defaults(func=cmd_tmrca)

    sp = sub.add_parser("partition", help="event log of one marked-partition run")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.add_argument("--mu", default=DEFAULT_MU)
    sp.add_argument("--K", type=int, default=4)
    sp.add_argument("--horizon", type=float, default=None)
    sp.add_argument("--simulator", choices=("graphical", "direct"), default="graphical")
    sp.add_argument("--snapshot", type=float, action="append", help="time of a partition snapshot")
    sp.set_defaults(func=cmd_partition)

    sp = sub.add_parser("oracle", help="closed-form values for a measure (JSON)")
    sp.add_argument("--mu", default=DEFAULT_MU)
    sp.add_argument("--out", default=None)
    sp.add_argument("--x0", type=float, default=0.5)
    sp.add_argument("--y0", type=float, default=0.5)
    sp.add_argument("--t", type=float, nargs="*", default=None, help="times for the active probability")
    sp.add_argument("--formula", default="report",
                    choices=("report", "tmrca2", "rw", "A", "pure-death", "single-bank"),
                    help="one named closed form instead of the full report")
    sp.add_argument("--c", type=float, default=1.0)
    sp.add_argument("--lam", type=float, default=1.0)
    sp.add_argument("--p", type=float, default=2 / 3)
    sp.add_argument("--j", type=int, default=0)
    sp.add_argument("--m", type=int, default=2)
    sp.add_argument("--n", type=int, default=2)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("duality", help="diffusion moment vs coalescent dual (JSON)")
    common(sp, 10000)
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--m", type=int, nargs="+", default=[1])
    sp.add_argument("--x0", type=float, default=0.5)
    sp.add_argument("--y0", type=float, nargs="+", default=[0.5])
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--scheme", choices=("beta", "em"), default="beta")
    sp.add_argument("--slack", type=float, default=0.05)
    sp.set_defaults(func=cmd_duality)

    sp = sub.add_parser("grid", help="T_MRCA bounds grid (CSV)")
    common(sp, config=True)
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("notcdi", help="total blocks at a fixed time vs n (CSV)")
    common(sp, config=True)
    sp.add_argument("--t", type=float, default=None)
    sp.set_defaults(func=cmd_notcdi)

    sp = sub.add_parser("an", help="record-setting deactivation count (CSV)")
    common(sp, config=True)
    sp.add_argument("--n", type=int, default=None)
    sp.set_defaults(func=cmd_an)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
