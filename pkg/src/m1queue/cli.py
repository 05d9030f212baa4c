"""Command-line entry point ``m1queue``.

Exit codes: 0 on success, 1 on a domain or input error, 2 on a usage error.
Results go to files or standard output, diagnostics to standard error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

from . import __version__
from .integral import continuity_experiment, parse_drift, solve_map
from .manyserver import INTERARRIVALS, FcltRow, fclt_experiment, simulate_queue, staffing
from .metric import coupling_to_reps, m1_distance
from .pathio import (
    ExperimentConfig,
    load_config,
    load_path,
    path_to_dict,
    save_json,
    save_path,
    save_rep,
)
from .paths import DomainError
from .regularize import regularize
from .reps import canonical_rep

SEED_ENV = "M1QUEUE_SEED"
CONTINUITY_FIELDS = ("index", "d_in", "d_out", "bound", "bound_source", "uniform_in")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise DomainError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _write_csv(fields, rows, out) -> None:
    fh = sys.stdout if out in (None, "-") else open(out, "w", newline="")
    try:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    finally:
        if fh is not sys.stdout:
            fh.close()


# -- subcommands ----------------------------------------------------------------------------


def cmd_m1_dist(a) -> int:
    x, y = load_path(a.a), load_path(a.b)
    val, cp = m1_distance(x, y, a.mesh)
    print(f"estimate,{val!r}")
    print(f"mesh,{cp.mesh!r}")
    if a.rep_a or a.rep_b:
        ra, rb = coupling_to_reps(x, y, cp)
        if a.rep_a:
            save_rep(ra, a.rep_a)
        if a.rep_b:
            save_rep(rb, a.rep_b)
    return 0


def cmd_canon_rep(a) -> int:
    save_rep(canonical_rep(load_path(a.x)), a.output)
    return 0


def cmd_solve_map(a) -> int:
    rep = solve_map(load_path(a.x), parse_drift(a.drift), a.step)
    save_path(rep.y, a.output)
    print(f"error_bound,{rep.error_bound!r}", file=sys.stderr)
    return 0


def cmd_regularize(a) -> int:
    rr = regularize(load_path(a.x), load_path(a.xn), a.eps, a.mesh)
    out = {
        "bounds": rr.bounds(),
        "diagnostics": {k: v for k, v in rr.diagnostics.items() if k != "fragment_slopes"},
        "partition": {
            "eps1": rr.spec.eps1,
            "eps2": rr.spec.eps2,
            "eps3": rr.spec.eps3,
            "eps4": rr.spec.eps4,
            "jump_times": list(rr.spec.times),
            "intervals": [dataclasses.asdict(iv) for iv in rr.spec.intervals],
        },
        "rep": rr.rep.to_json(),
        "phi": {"s": rr.phi.s.tolist(), "values": rr.phi.values.tolist()},
    }
    save_json(out, a.output)
    return 0


def cmd_simulate(a) -> int:
    seed = _default_seed() if a.seed is None else a.seed
    p = staffing(a.n, a.mu, a.theta, a.beta, a.alpha, T=a.T, q0=a.q0, seed=seed)
    tr = simulate_queue(p, a.interarrival)
    out = {
        "params": dataclasses.asdict(p)
        | {"c_n": p.c_n, "rho_n": p.rho_n, "lambda_n": p.lambda_n, "interarrival": a.interarrival},
        "counts": tr.counts,
        "Q": path_to_dict(tr.Q),
        "A": path_to_dict(tr.A),
    }
    save_json(out, a.output)
    return 0


def cmd_fclt(a) -> int:
    over = {}
    if a.seed is not None:
        over["seed"] = a.seed
    elif SEED_ENV in os.environ:
        over["seed"] = _default_seed()
    if a.workers is not None:
        over["workers"] = a.workers
    cfg = load_config(a.config, over) if a.config else ExperimentConfig(**over)
    template = staffing(cfg.ns[0], cfg.mu, cfg.theta, cfg.beta, cfg.alpha, T=cfg.T)
    rows = fclt_experiment(
        cfg.ns,
        template,
        cfg.reps,
        cfg.seed,
        interarrival=cfg.interarrival,
        scale=cfg.scale,
        skew=cfg.skew,
        driver_step=cfg.driver_step,
        step=cfg.step,
        workers=cfg.workers,
    )
    _write_csv(FcltRow.CSV_FIELDS, [r.csv_row() for r in rows], a.output)
    for r in rows:
        print(f"n={r.n} ks={r.ks:.4f} ks_se={r.ks_se:.4f}", file=sys.stderr)
    return 0


def cmd_continuity(a) -> int:
    x = load_path(a.x)
    seq = [load_path(f) for f in a.xn]
    rows = continuity_experiment(seq, x, parse_drift(a.drift), a.mesh, a.step, a.eps)
    _write_csv(CONTINUITY_FIELDS, [dataclasses.asdict(r) for r in rows], a.output)
    return 0


# -- parser ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="m1queue",
        description="M1 distances, integral maps and many-server queue experiments.",
    )
    ap.add_argument("--version", action="version", version=f"m1queue {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("m1-dist", help="M1 distance estimate between two path files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--mesh", type=float, default=None, help="graph mesh (default: 1e-3 of the larger arclength)")
    p.add_argument("--rep-a", help="write the coupling representation of the first path here")
    p.add_argument("--rep-b", help="write the coupling representation of the second path here")
    p.set_defaults(func=cmd_m1_dist)

    p = sub.add_parser("canon-rep", help="canonical parametric representation of a path")
    p.add_argument("x")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_canon_rep)

    p = sub.add_parser("solve-map", help="solve y = x + int h(y) for a path x")
    p.add_argument("x")
    p.add_argument("--drift", default="zero", help="zero | linear:c=1 | qed:mu=1,theta=1")
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_solve_map)

    p = sub.add_parser("regularize", help="regularized representation of xn against x")
    p.add_argument("x")
    p.add_argument("xn")
    p.add_argument("--eps", type=float, default=0.9)
    p.add_argument("--mesh", type=float, default=None)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_regularize)

    p = sub.add_parser("simulate", help="simulate one trace of the many-server queue")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--T", type=float, default=10.0)
    p.add_argument("--q0", type=int, default=None, help="initial customers (default n)")
    p.add_argument("--interarrival", choices=INTERARRIVALS, default="pareto")
    p.add_argument("--seed", type=int, default=None, help=f"default from ${SEED_ENV} or 0")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser(
        "fclt-experiment",
        help="queue vs limit comparison over several n",
        description="Writes CSV columns: " + ",".join(FcltRow.CSV_FIELDS),
    )
    p.add_argument("--config", help="JSON config (keys of ExperimentConfig)")
    p.add_argument("--seed", type=int, default=None, help=f"overrides the config; default from ${SEED_ENV}")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_fclt)

    p = sub.add_parser(
        "continuity-experiment",
        help="M1 distances before and after the integral map",
        description="Writes CSV columns: " + ",".join(CONTINUITY_FIELDS),
    )
    p.add_argument("x", help="limit path")
    p.add_argument("xn", nargs="+", help="approximating paths")
    p.add_argument("--drift", default="qed:mu=1,theta=1")
    p.add_argument("--mesh", type=float, default=None)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--eps", type=float, default=0.9)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_continuity)
    return ap


def run(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (DomainError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
