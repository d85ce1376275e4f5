"""Command-line interface: ``condbm <command> [options]``.

Commands
--------
gamma     survival probability and its log-gradient for a domain
meander   meander ensembles from the SDE, Bessel or rejection sampler
cluster   boundaries of the cluster of a point in the Brownian web
flow      coalescing n-point motion from a set of starting points
drifted   stationary point and infinite-cluster boundaries under a drift
validate  the acceptance suite

Exit codes: 0 success, 2 usage error, 3 simulation failure, and for
``validate`` 3 + number of failed checks (at most 125).

Options may also come from a ``--config`` file of ``key = value`` lines whose
keys are the long option names; the command line wins over the file. The
default seed is read from ``CONDBM_SEED``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__
from . import analytic as an
from .errors import SimulationError
from .flows import (cluster_partition, parse_points, run_boundary_ensemble,
                    run_stationary, simulate_coalescing)
from .meander import METHODS, meander_mean, run_ensemble
from .rng import RngStream
from .sde import TimeGrid, make_grid
from .stats import ks_one_sample, summarize
from .validate import DEFAULT_SEED

SEED_ENV = "CONDBM_SEED"
EXIT_USAGE = 2
EXIT_SIMULATION = 3
MAX_EXIT = 125

MEANDER_COLUMNS = ("path_id", "t", "value", "weight")
BOUNDARY_COLUMNS = ("path_id", "t", "alpha", "beta")
FLOW_COLUMNS = ("particle_id", "t", "position", "survivor_id")
STATIONARY_COLUMNS = ("run_id", "eta", "survivors")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# output

def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def write_table(stream, columns, rows, fmt="csv", config=None, summary=None):
    """Write rows as CSV (floats at full precision) or as one JSON document."""
    if fmt == "csv":
        stream.write(",".join(columns) + "\n")
        for r in rows:
            stream.write(",".join(_fmt(v) for v in r) + "\n")
        return
    data = {c: [] for c in columns}
    for r in rows:
        for c, v in zip(columns, r):
            data[c].append(int(v) if isinstance(v, (int, np.integer)) else float(v))
    json.dump(_document(config, {"summary": summary, "data": data}), stream, allow_nan=True)
    stream.write("\n")


def read_csv(path_or_stream) -> dict:
    """Columns of a CSV written by this tool; id columns come back as int."""
    if isinstance(path_or_stream, (str, os.PathLike)):
        with open(path_or_stream, newline="") as fh:
            return read_csv(fh)
    reader = csv.reader(path_or_stream)
    header = next(reader)
    cols = list(zip(*reader)) or [()] * len(header)
    out = {}
    for name, vals in zip(header, cols):
        kind = int if name.endswith("_id") or name == "survivors" else float
        out[name] = np.array([kind(v) for v in vals], dtype=kind)
    return out


def read_json(path_or_stream) -> dict:
    if isinstance(path_or_stream, (str, os.PathLike)):
        with open(path_or_stream) as fh:
            return json.load(fh)
    return json.load(path_or_stream)


def _document(config, results):
    return {"version": __version__, "config": config, "results": results}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


# --------------------------------------------------------------------------
# parser

def _positive(kind):
    def conv(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _common(default_seed):
    # one parent per subcommand: argparse shares parent actions, so defaults would leak
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=default_seed, help=f"master seed (default ${SEED_ENV})")
    g.add_argument("--out", default=None, help="data file; without it only the summary is printed")
    g.add_argument("--format", choices=("csv", "json"), default="csv", help="data file format")
    g.add_argument("--threads", type=_positive(int), default=1)
    g.add_argument("--config", default=None, help="file of key = value lines")
    g.add_argument("--record-points", type=int, default=11,
                   help="equally spaced times written per path; 0 writes every step")
    return common


def build_parser(default_seed: int | None = None) -> argparse.ArgumentParser:
    seed0 = 0 if default_seed is None else default_seed
    p = argparse.ArgumentParser(prog="condbm", description="Conditioned Brownian motion and Brownian-web samplers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gamma", parents=[_common(seed0)], help="survival probability of a domain")
    s.add_argument("--domain", choices=("halfline", "interval", "halfspace", "box", "wedge2"),
                   default="halfline")
    s.add_argument("--t", type=_positive(float), default=1.0)
    s.add_argument("--y", type=_float_list, default=[1.0], help="point, comma separated")
    s.add_argument("--origin", type=float, default=0.0)
    s.add_argument("--direction", type=int, choices=(1, -1), default=1)
    s.add_argument("--a", type=float, default=0.0, help="interval left end")
    s.add_argument("--b", type=float, default=1.0, help="interval right end")
    s.add_argument("--anchor", type=_float_list, default=[0.0, 0.0])
    s.add_argument("--normal", type=_float_list, default=[1.0, 0.0])
    s.add_argument("--factors", default="halfline:0:1,interval:0:1",
                   help="box factors, e.g. halfline:0:1,interval:0:2")

    s = sub.add_parser("meander", parents=[_common(seed0)], help="Brownian meander ensembles")
    s.add_argument("--method", choices=METHODS, default="sde")
    s.add_argument("--T", type=_positive(float), default=1.0)
    s.add_argument("--n", type=_positive(int), default=1000)
    s.add_argument("--dt-max", type=_positive(float), default=None,
                   help="largest step (default 1e-3 T; 1e-4 T for rejection)")
    s.add_argument("--eps-start", type=float, default=None, help="default 1e-4 T")
    s.add_argument("--eps-end", type=float, default=None, help="default 1e-6 T")
    s.add_argument("--refine-levels", type=int, default=10)
    s.add_argument("--y0", type=_positive(float), default=None, help="rejection start, default 1e-3 sqrt(T)")
    s.add_argument("--max-attempts", type=_positive(int), default=10 ** 7)

    s = sub.add_parser("cluster", parents=[_common(seed0)], help="cluster boundaries in the Brownian web")
    s.add_argument("--mode", choices=("sde", "oracle"), default="sde")
    s.add_argument("--x", type=float, default=0.0)
    s.add_argument("--T", type=_positive(float), default=1.0)
    s.add_argument("--n", type=_positive(int), default=1000)
    s.add_argument("--epsilon", type=_positive(float), default=None, help="oracle start gap")
    s.add_argument("--dt-max", type=_positive(float), default=None)
    s.add_argument("--max-attempts", type=_positive(int), default=10 ** 7)

    s = sub.add_parser("flow", parents=[_common(seed0)], help="coalescing n-point motion")
    s.add_argument("--points", default="-5:5:0.01", help="a:b:step or a comma list; write --points=-5:5:0.01 for a negative start")
    s.add_argument("--T", type=_positive(float), default=1.0)
    s.add_argument("--dt", type=_positive(float), default=1e-3)
    s.add_argument("--drift", default=None, help="drift a(x), e.g. '-x'")
    s.add_argument("--lam", type=_positive(float), default=None, help="monotonicity constant of the drift")
    s.add_argument("--window", type=_float_list, default=None, help="a,b: count clusters started in [a, b]")

    s = sub.add_parser("drifted", parents=[_common(seed0)], help="flows with a contracting drift")
    s.add_argument("--mode", choices=("stationary", "infinite-sde", "infinite-oracle"), default="stationary")
    s.add_argument("--drift", default="-x")
    s.add_argument("--lam", type=_positive(float), default=1.0)
    s.add_argument("--runs", type=_positive(int), default=1000, help="stationary runs or boundary pairs")
    s.add_argument("--lookback", type=_positive(float), default=10.0)
    s.add_argument("--span", type=_positive(float), default=5.0)
    s.add_argument("--particles", type=int, default=200)
    s.add_argument("--dt", type=_positive(float), default=1e-2)
    s.add_argument("--x", type=float, default=0.0)
    s.add_argument("--T", type=_positive(float), default=1.0)
    s.add_argument("--epsilon", type=_positive(float), default=1e-3)
    s.add_argument("--strict", action="store_true", help="fail (exit 3) if any run did not coalesce")

    s = sub.add_parser("validate", parents=[_common(DEFAULT_SEED if default_seed is None else default_seed)],
                       help="run the acceptance suite")
    s.add_argument("--suite", choices=("all", "analytic", "meander", "flows", "determinism"), default="all")
    s.add_argument("--report", default=None, help="JSON report path")
    return p


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def load_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.lstrip("-").replace("-", "_")] = v
    return out


def _apply_config(sp, values: dict, path):
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in values.items():
        act = actions.get(key)
        if act is None:
            raise UsageError(f"{path}: unknown key {key!r}")
        if isinstance(act, argparse._StoreTrueAction):
            val = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                val = act.type(raw) if act.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"{path}: bad value for {key}: {exc}") from None
            if act.choices is not None and val not in act.choices:
                raise UsageError(f"{path}: {key} must be one of {list(act.choices)}")
        defaults[key] = val
    sp.set_defaults(**defaults)


def parse_args(argv):
    parser = build_parser(_default_seed())
    args = parser.parse_args(argv)
    if args.config:
        _apply_config(_subparser(parser, args.command), load_config(args.config), args.config)
        args = parser.parse_args(argv)
    return args


def _config_of(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("config",)}


# --------------------------------------------------------------------------
# commands

def _record_times(T, k, start=0.0):
    if k < 0 or k == 1:
        raise UsageError("--record-points must be 0 or at least 2")
    return np.linspace(start, T, k)


def _build_domain(args):
    if args.domain == "halfline":
        return an.HalfLine(args.origin, args.direction)
    if args.domain == "interval":
        return an.Interval(args.a, args.b)
    if args.domain == "halfspace":
        return an.HalfSpace(tuple(args.anchor), tuple(args.normal))
    if args.domain == "wedge2":
        return an.Wedge2()
    factors = []
    for spec in args.factors.split(","):
        kind, *vals = spec.split(":")
        vals = [float(v) for v in vals]
        if kind == "halfline":
            factors.append(an.HalfLine(vals[0] if vals else 0.0, int(vals[1]) if len(vals) > 1 else 1))
        elif kind == "interval" and len(vals) == 2:
            factors.append(an.Interval(*vals))
        else:
            raise UsageError(f"bad box factor {spec!r}")
    return an.Box(tuple(factors))


def cmd_gamma(args, out):
    dom = _build_domain(args)
    y = np.asarray(args.y, dtype=float)
    res = {"t": args.t, "y": y, "gamma": an.exit_prob(dom, args.t, y),
           "log_gamma": an.log_exit_prob(dom, args.t, y),
           "grad_log_gamma": an.grad_log_exit_prob(dom, args.t, y)}
    return res, None


def _meander_grid(args):
    T = args.T
    if args.method == "rejection":
        dt = 1e-4 * T if args.dt_max is None else args.dt_max
        return TimeGrid.uniform(0.0, T, max(1, int(math.ceil(T / dt - 1e-9))))
    dt = 1e-3 * T if args.dt_max is None else args.dt_max
    eps0 = 1e-4 * T if args.eps_start is None else args.eps_start
    eps1 = 1e-6 * T if args.eps_end is None else args.eps_end
    if args.method == "bessel":
        eps0 = eps1 = 0.0
    n = max(2, int(math.ceil((T - eps0 - eps1) / dt - 1e-9)))
    return make_grid(T, n, eps0, eps1, args.refine_levels if args.method == "sde" else 0)


def cmd_meander(args, out):
    T = args.T
    keep = args.record_points == 0
    observe = None if keep else _record_times(T, args.record_points)
    ens = run_ensemble(args.method, args.n, T, seed=args.seed, grid=_meander_grid(args),
                       observe=sorted({0.5 * T, T} | set([] if keep else observe.tolist())),
                       y0=args.y0, max_attempts=args.max_attempts, threads=args.threads,
                       keep_paths=keep)
    w = ens.weights if args.method == "bessel" else None
    end = ens.endpoint
    d, p = ks_one_sample(end, lambda z: 1.0 - np.exp(-z * z / (2.0 * T)), w)
    means = {}
    for t in (0.5 * T, T):
        s = summarize(ens.at(t), w)
        means[f"{t:g}"] = {"mean": s.mean, "se": s.se, "identity": meander_mean(T, t)}
    summary = {"method": args.method, "n": ens.n, "T": T,
               "endpoint": summarize(end, w).as_dict(), "ks_rayleigh": {"D": d, "p": p},
               "means": means, "weight_mean": float(ens.weights.mean()),
               "acceptance_rate": ens.acceptance_rate, "retry_rate": ens.retry_rate}
    rows = []
    if keep:
        for i, path in enumerate(ens.paths):
            rows.extend((i, t, v, path.weight) for t, v in zip(path.times, path.values[:, 0]))
    else:
        cols = [int(np.argmin(np.abs(ens.observe - t))) for t in observe]
        for i in range(ens.n):
            rows.extend((i, ens.observe[j], ens.values[i, j], ens.weights[i]) for j in cols)
    return summary, (MEANDER_COLUMNS, rows)


def _boundary_rows(ens, observe, keep):
    rows = []
    if keep:
        for i, bp in enumerate(ens.paths):
            rows.extend((i, t, a, b) for t, a, b in zip(bp.times, bp.alpha, bp.beta))
    else:
        cols = [int(np.argmin(np.abs(ens.observe - t))) for t in observe]
        for i in range(ens.n):
            rows.extend((i, ens.observe[j], ens.alpha[i, j], ens.beta[i, j]) for j in cols)
    return rows


def _gap_summary(ens, scale):
    gap = ens.gap[:, -1]
    d, p = ks_one_sample(gap / scale, lambda z: 1.0 - np.exp(-z * z / 2.0))
    return {"gap": summarize(gap).as_dict(), "center": summarize(ens.center[:, -1]).as_dict(),
            "ks_gap_rayleigh": {"D": d, "p": p}, "min_gap": float(np.min(ens.min_gap)),
            "acceptance_rate": ens.acceptance_rate}


def cmd_cluster(args, out):
    T = args.T
    keep = args.record_points == 0
    # the boundaries start from a gap of order sqrt(eps0), so recording starts at eps0
    start = 1e-4 * T
    observe = None if keep else _record_times(T, args.record_points, start)
    grid = None
    if args.dt_max is not None:
        if args.mode == "sde":
            from .sde import meander_grid
            grid = meander_grid(T, args.dt_max)
        else:
            grid = TimeGrid.uniform(0.0, T, int(math.ceil(T / args.dt_max - 1e-9)))
    obs = [T] if keep else sorted(set(observe.tolist()) | {T})
    ens = run_boundary_ensemble(args.mode, args.n, args.x, T, seed=args.seed, grid=grid, observe=obs,
                                epsilon=args.epsilon, max_attempts=args.max_attempts,
                                threads=args.threads, keep_paths=keep)
    summary = {"mode": args.mode, "n": ens.n, "x": args.x, "T": T, **_gap_summary(ens, math.sqrt(2.0 * T))}
    return summary, (BOUNDARY_COLUMNS, _boundary_rows(ens, observe, keep))


def _drift_spec(expr, lam):
    if expr is None:
        return None
    if lam is None:
        raise UsageError("a drift needs --lam")
    return an.DriftSpec(expr, lam)


def cmd_flow(args, out):
    pts = parse_points(args.points)
    drift = _drift_spec(args.drift, args.lam)
    sys_ = simulate_coalescing(pts, args.T, args.dt, RngStream(args.seed, 0), drift,
                               record=out is not None)
    snap = cluster_partition(sys_)
    summary = {"n": sys_.n, "T": sys_.horizon, "dt": sys_.meta["dt"], "survivors": sys_.survivors,
               "vertices": snap.vertices, "sizes": snap.sizes}
    if args.window is not None:
        if len(args.window) != 2:
            raise UsageError("--window takes a,b")
        a, b = args.window
        summary["window"] = {"a": a, "b": b, "clusters": snap.count_in(sys_.initial, a, b)}
    if out is None:
        return summary, None
    steps = len(sys_.times) - 1
    if args.record_points == 0:
        ks = np.arange(steps + 1)
    else:
        if args.record_points < 2:
            raise UsageError("--record-points must be 0 or at least 2")
        ks = np.unique(np.round(np.linspace(0, steps, args.record_points)).astype(int))
    rows = [(i, sys_.times[k], sys_.positions[k, i], sys_.owners[k, i])
            for i in range(sys_.n) for k in ks]
    return summary, (FLOW_COLUMNS, rows)


def cmd_drifted(args, out):
    drift = _drift_spec(args.drift, args.lam)
    if args.mode == "stationary":
        if args.particles < 2:
            raise UsageError("--particles must be at least 2")
        res = run_stationary(drift, args.runs, seed=args.seed, lookback=args.lookback, span=args.span,
                             n_particles=args.particles, dt=args.dt, threads=args.threads)
        est = res["estimates"]
        failed = int(np.sum(res["survivors"] != 1))
        if failed and args.strict:
            from .errors import NotCoalesced
            raise NotCoalesced(f"{failed} of {args.runs} runs did not coalesce",
                               failed=failed, survivors=res["survivors"][res["survivors"] != 1])
        summary = {"mode": "stationary", "runs": args.runs, "coalesced_rate": res["coalesced_rate"]}
        if est.size:
            d, p = ks_one_sample(est, lambda z: an.stationary_cdf(drift, z))
            summary.update(eta=summarize(est).as_dict(), ks_stationary={"D": d, "p": p},
                           stationary_mode=drift.table.mode)
        rows = [(i, res["all"][i], res["survivors"][i]) for i in range(args.runs)]
        return summary, (STATIONARY_COLUMNS, rows)
    keep = args.record_points == 0
    observe = None if keep else _record_times(args.T, args.record_points)
    obs = [args.T] if keep else sorted(set(observe.tolist()) | {args.T})
    ens = run_boundary_ensemble(args.mode, args.runs, args.x, args.T, seed=args.seed, observe=obs,
                                epsilon=args.epsilon, drift=drift, threads=args.threads, keep_paths=keep)
    summary = {"mode": args.mode, "n": ens.n, "x": args.x, "T": args.T,
               "gap": summarize(ens.gap[:, -1]).as_dict(),
               "center": summarize(ens.center[:, -1]).as_dict(),
               "min_gap": float(np.min(ens.min_gap)), "acceptance_rate": ens.acceptance_rate}
    return summary, (BOUNDARY_COLUMNS, _boundary_rows(ens, observe, keep))


def cmd_validate(args, stdout):
    from .validate import run_suite
    results = run_suite(args.suite, seed=args.seed, echo=lambda s: print(s, file=stdout))
    nfail = sum(not r.verdict for r in results)
    print(f"{len(results) - nfail}/{len(results)} passed", file=stdout)
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(_jsonable(_document(_config_of(args), [r.as_dict() for r in results])), fh, indent=2)
    return 0 if nfail == 0 else min(EXIT_SIMULATION + nfail, MAX_EXIT)


COMMANDS = {"gamma": cmd_gamma, "meander": cmd_meander, "cluster": cmd_cluster, "flow": cmd_flow,
            "drifted": cmd_drifted}


def run(args, stdout) -> int:
    if args.command == "validate":
        return cmd_validate(args, stdout)
    summary, table = COMMANDS[args.command](args, args.out)
    config = _config_of(args)
    if args.out is not None and table is not None:
        with open(args.out, "w", newline="") as fh:
            write_table(fh, table[0], table[1], args.format, _jsonable(config), _jsonable(summary))
    json.dump(_jsonable(_document(config, summary)), stdout, indent=2, allow_nan=True)
    stdout.write("\n")
    return 0


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        args = parse_args(argv)
        return run(args, stdout)
    except SystemExit as exc:          # argparse: usage errors, --help, --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"condbm: error: {exc}", file=stderr)
        return EXIT_USAGE
    except SimulationError as exc:
        print(f"condbm: simulation failed: {exc}", file=stderr)
        if exc.diagnostics:
            print("diagnostics: " + json.dumps(_jsonable(exc.diagnostics)), file=stderr)
        return EXIT_SIMULATION
    except (ValueError, TypeError) as exc:
        print(f"condbm: error: {exc}", file=stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
