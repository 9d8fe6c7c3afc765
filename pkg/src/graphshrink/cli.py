"""Command-line interface: fit, summarize, simulate, bf-curve."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .inference import rand_index, summarize
from .model import Dataset, Hyperparams
from .partition import Partition
from .sampler import Schedule, run_chains
from .shrinkage import QuadratureError, Scenario, bf_curve, default_scenarios, scale_match
from .simulate import SimConfig, generate_synthetic

log = logging.getLogger("graphshrink")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_DIMENSION = 4
EXIT_CONFIG = 5
EXIT_DRAWS = 6
EXIT_NUMERICAL = 7

DEFAULTS = {"tau0": 1.0, "c": 0.5, "iters": 40000, "burnin": 10000, "thin": 10, "seed": 0, "chains": 1}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_MISSING_FILE, f"{what} file not found: {path}")
    return p


def _read(reader, path, what: str, *args, **kwargs):
    _require_file(path, what)
    try:
        return reader(path, *args, **kwargs)
    except io.InputFormatError as exc:
        raise CliError(EXIT_DIMENSION, str(exc)) from None


# ---------------------------------------------------------------------------
# fit


def _settings(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        _require_file(args.config, "config")
        try:
            cfg.update(io.load_config(args.config))
        except io.ConfigError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from None
    for key in ("tau0", "c", "iters", "burnin", "thin", "seed", "chains"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _hyperparams(cfg: dict) -> tuple[Hyperparams, Schedule]:
    kw = {k: cfg[k] for k in ("tau0", "c", "move_probs", "mh_step_tau") if k in cfg}
    try:
        h = Hyperparams(**kw)
        sched = Schedule(cfg["iters"], cfg["burnin"], cfg["thin"])
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"invalid configuration: {exc}") from None
    if cfg["chains"] < 1:
        raise CliError(EXIT_CONFIG, "chains must be at least 1")
    if sched.n_draws < 1:
        raise CliError(EXIT_CONFIG, "iters // thin must be at least 1")
    return h, sched


def cmd_fit(args) -> int:
    cfg = _settings(args)
    h, sched = _hyperparams(cfg)
    y = _read(io.read_vector, args.y, "response")
    if args.normal_means:
        if args.x:
            raise CliError(EXIT_USAGE, "--x and --normal-means are mutually exclusive")
        data = Dataset.normal_means(y)
    else:
        if not args.x:
            raise CliError(EXIT_USAGE, "either --x or --normal-means is required")
        X = _read(io.read_matrix, args.x, "design")
        if X.shape[0] != len(y):
            raise CliError(EXIT_DIMENSION, f"design has {X.shape[0]} rows but response has {len(y)} entries")
        try:
            data = Dataset.from_arrays(X, y)
        except ValueError as exc:
            raise CliError(EXIT_DIMENSION, str(exc)) from None
    p = args.p if args.p is not None else data.p
    g = _read(io.read_edge_list, args.graph, "graph", index_base=args.index_base, p=p)
    if g.p != data.p:
        raise CliError(EXIT_DIMENSION, f"graph has {g.p} vertices but the data have {data.p} coefficients")

    out = run_chains(data, g, h, sched, seed=cfg["seed"], chains=cfg["chains"])
    log.info("sampled %d draws in %.1f s", len(out), out.runtime_seconds)
    summary = summarize(out, args.level)
    summary["acceptance"] = out.acceptance
    summary["settings"] = {k: cfg[k] for k in sorted(cfg)}
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    io.write_draws(outdir / "draws.csv", out)
    io.write_json(outdir / "summary.json", summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# summarize


def cmd_summarize(args) -> int:
    path = _require_file(args.draws, "draws")
    try:
        out = io.read_draws(path)
    except io.DrawsFormatError as exc:
        raise CliError(EXIT_DRAWS, str(exc)) from None
    if not 0 < args.level < 1:
        raise CliError(EXIT_CONFIG, "--level must lie in (0, 1)")
    summary = summarize(out, args.level)
    if args.truth:
        truth = _read(io.read_vector, args.truth, "truth")
        if len(truth) != out.p:
            raise CliError(EXIT_DIMENSION, f"truth has {len(truth)} entries, draws have {out.p}")
        ri = rand_index(Partition.from_labels(summary["partition"]), Partition.from_labels(truth.astype(np.int64)))
        summary["rand_index"] = ri
        print(f"rand_index {ri!r}")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    io.write_json(outdir / "summary.json", summary)
    if args.plot_data:
        rows = np.column_stack([
            np.arange(out.p), summary["partition"], summary["beta_median"],
            summary["beta_lower"], summary["beta_upper"],
        ])
        with open(outdir / "vertex_estimates.csv", "w") as fh:
            fh.write("vertex,label,beta_median,beta_lower,beta_upper\n")
            for r in rows.tolist():
                fh.write(f"{int(r[0])},{int(r[1])},{r[2]!r},{r[3]!r},{r[4]!r}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    beta_spec = args.beta
    if beta_spec != "paper-like":
        _require_file(beta_spec, "true beta")
    try:
        cfg = SimConfig(args.side, args.n_train, args.n_test, args.theta, args.snr, beta_spec, args.seed)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    try:
        sim = generate_synthetic(cfg)
    except io.InputFormatError as exc:
        raise CliError(EXIT_DIMENSION, str(exc)) from None
    except ValueError as exc:
        raise CliError(EXIT_DIMENSION, str(exc)) from None
    except np.linalg.LinAlgError as exc:
        raise CliError(EXIT_NUMERICAL, str(exc)) from None
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    io.write_edge_list(outdir / "graph.txt", sim.graph)
    io.write_matrix(outdir / "X.csv", sim.X_train)
    io.write_vector(outdir / "y.csv", sim.data.y)
    io.write_matrix(outdir / "X_test.csv", sim.X_test)
    io.write_vector(outdir / "y_test.csv", sim.y_test)
    io.write_vector(outdir / "beta.csv", sim.beta)
    io.write_vector(outdir / "partition.csv", sim.partition.labels)
    io.write_json(outdir / "meta.json", {
        "sigma2": sim.sigma2, "p": sim.graph.p, "lattice_side": cfg.lattice_side,
        "n_train": cfg.n_train, "n_test": cfg.n_test, "theta": cfg.theta, "snr": cfg.snr,
        "true_beta_spec": cfg.true_beta_spec, "seed": cfg.seed,
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# bf-curve


def _scenarios(names) -> list[Scenario]:
    known = {s.name: s for s in default_scenarios()}
    if not names:
        return list(known.values())
    out = []
    for name in names:
        if name in known:
            out.append(known[name])
            continue
        # custom scenario "nu:share", e.g. "7:0.8"
        try:
            nu, share = (float(x) for x in name.split(":"))
            sc = Scenario(name, nu, share)
        except ValueError:
            raise CliError(EXIT_CONFIG, f"unknown scenario {name!r}; known: {sorted(known)} or NU:SHARE") from None
        if not (nu > 0 and 0 < share < 1):
            raise CliError(EXIT_CONFIG, f"invalid scenario {name!r}")
        out.append(sc)
    return out


def cmd_bf_curve(args) -> int:
    scenarios = _scenarios(args.scenario)
    if not (args.t_max > 0 and args.t_points >= 2):
        raise CliError(EXIT_CONFIG, "--t-max must be positive and --t-points at least 2")
    grid = np.linspace(0.0, args.t_max, args.t_points)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(out, "w") as fh:
            fh.write("scenario,n1,n2,nu,tau1,tau2,abs_t,bf_normal,bf_horseshoe\n")
            for sc in scenarios:
                tau1, tau2 = scale_match(sc.n1, sc.n2)
                for t, bfn, bfh in bf_curve(sc, grid, (tau1, tau2)).tolist():
                    fh.write(f"{sc.name},{sc.n1!r},{sc.n2!r},{sc.nu!r},{tau1!r},{tau2!r},{t!r},{bfn!r},{bfh!r}\n")
    except QuadratureError as exc:
        raise CliError(EXIT_NUMERICAL, str(exc)) from None
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphshrink", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="run the sampler and write draws and a summary")
    fit.add_argument("--graph", required=True, help="edge-list file")
    fit.add_argument("--y", required=True, help="response (or per-vertex signal) vector CSV")
    fit.add_argument("--x", help="design matrix CSV (n x p)")
    fit.add_argument("--normal-means", action="store_true", help="identity design; --y holds one value per vertex")
    fit.add_argument("--config", help="JSON file with sampler settings")
    fit.add_argument("--tau0", type=float)
    fit.add_argument("--c", type=float)
    fit.add_argument("--iters", type=int, help="post-burn-in iterations")
    fit.add_argument("--burnin", type=int)
    fit.add_argument("--thin", type=int)
    fit.add_argument("--chains", type=int)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--p", type=int, help="vertex count (default: number of coefficients)")
    fit.add_argument("--index-base", type=int, choices=(0, 1), default=0)
    fit.add_argument("--level", type=float, default=0.9, help="credible level of the intervals")
    fit.add_argument("--out", required=True, help="output directory")
    fit.set_defaults(func=cmd_fit)

    summ = sub.add_parser("summarize", help="summarize a draws CSV")
    summ.add_argument("--draws", required=True)
    summ.add_argument("--out", required=True, help="output directory")
    summ.add_argument("--level", type=float, default=0.9)
    summ.add_argument("--truth", help="vector of true cluster labels; prints the Rand index")
    summ.add_argument("--plot-data", action="store_true", help="also write per-vertex estimates CSV")
    summ.set_defaults(func=cmd_summarize)

    sim = sub.add_parser("simulate", help="generate a synthetic lattice regression problem")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--side", type=int, default=30)
    sim.add_argument("--n-train", type=int, default=100)
    sim.add_argument("--n-test", type=int, default=1000)
    sim.add_argument("--theta", type=float, default=0.0)
    sim.add_argument("--snr", type=float, default=4.0)
    sim.add_argument("--beta", default="paper-like", help='"paper-like" or a vector CSV')
    sim.add_argument("--seed", type=int, default=0)
    sim.set_defaults(func=cmd_simulate)

    bf = sub.add_parser("bf-curve", help="Bayes factor curves against |t|")
    bf.add_argument("--out", required=True, help="output CSV")
    bf.add_argument("--scenario", action="append", help="scenario name or NU:SHARE; repeatable")
    bf.add_argument("--t-max", type=float, default=20.0)
    bf.add_argument("--t-points", type=int, default=201)
    bf.set_defaults(func=cmd_bf_curve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"graphshrink {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
