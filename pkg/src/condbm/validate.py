"""Acceptance suite: every sampler checked against closed forms or an independent oracle.

Each check returns a :class:`CriterionResult`. Statistical checks use level
0.001 and fixed seeds, so a run is reproducible and a failure is a real
signal rather than bad luck on one draw.
"""
from __future__ import annotations

import hashlib
import io
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from . import analytic as an
from .flows import (parse_points, run_boundary_ensemble, run_stationary,
                    simulate_coalescing)
from .meander import meander_mean, run_ensemble
from .rng import RngStream
from .sde import TimeGrid, meander_grid
from .stats import ks_critical, ks_one_sample, ks_two_sample, summarize

LEVEL = 1e-3
DEFAULT_SEED = 20240601


@dataclass
class CriterionResult:
    name: str
    target: str
    observed: str
    tolerance: str
    verdict: bool
    runtime: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.verdict else "FAIL"
        return f"{tag}  {self.name:<34s} {self.observed}  [{self.target}; {self.tolerance}]  ({self.runtime:.1f}s)"

    def as_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = "PASS" if self.verdict else "FAIL"
        return d


def rayleigh_cdf(scale=1.0):
    return lambda z: 1.0 - np.exp(-np.square(z) / (2.0 * scale * scale))


def _fmt_p(p):
    return f"{p:.3g}"


# -- analytic --------------------------------------------------------------

def c01_exit_prob(seed=DEFAULT_SEED):
    hl = an.HalfLine()
    ts = np.linspace(0.05, 10.0, 20)
    ys = np.linspace(0.05, 8.0, 20)
    worst = 0.0
    for t in ts:
        for y in ys:
            ref, _ = integrate.quad(lambda z: math.exp(-0.5 * z * z), 0.0, y / math.sqrt(t),
                                    epsabs=1e-13, epsrel=1e-13)
            worst = max(worst, abs(an.exit_prob(hl, t, y) - math.sqrt(2.0 / math.pi) * ref))
    box = an.Box((an.HalfLine(), an.Interval(0.0, 2.0)))
    gen = RngStream(seed, 1).generator()
    box_worst = 0.0
    for _ in range(400):
        t = gen.uniform(0.01, 10.0)
        p = (gen.uniform(0.01, 5.0), gen.uniform(0.01, 1.99))
        prod = an.exit_prob(an.HalfLine(), t, p[0]) * an.exit_prob(an.Interval(0.0, 2.0), t, p[1])
        box_worst = max(box_worst, abs(an.exit_prob(box, t, p) - prod))
    ok = worst <= 1e-10 and box_worst <= 1e-14
    return CriterionResult("1 analytic exactness", "quadrature; product of marginals",
                           f"max|err|={worst:.2e}, box={box_worst:.1e}", "1e-10; 1e-14", ok)


def c02_drift_bound(seed=DEFAULT_SEED):
    gen = RngStream(seed, 2).generator()
    t = 10.0 * (1.0 - gen.random(10_000))
    y = 10.0 * (1.0 - gen.random(10_000))
    hl = an.HalfLine()
    g = np.array([an.grad_log_exit_prob(hl, ti, yi)[0] for ti, yi in zip(t, y)])
    ok = bool(np.all(g > 0) and np.all(g <= 1.0 / y))
    ratio = float(np.max(g * y))
    return CriterionResult("2 drift bound 0 < g <= 1/y", "all 1e4 points", f"max g*y={ratio:.6f}",
                           "exact", ok)


def _segment_second_diff(domain, t, p, q, n=41):
    s = np.linspace(0.0, 1.0, n)
    pts = p[None, :] + s[:, None] * (q - p)[None, :]
    f = np.array([an.log_exit_prob(domain, t, v) for v in pts])
    return float(np.max(f[2:] - 2.0 * f[1:-1] + f[:-2]))


def c03_log_concave(seed=DEFAULT_SEED):
    gen = RngStream(seed, 3).generator()
    worst = {}
    for name, dom in (("halfline", an.HalfLine()), ("interval", an.Interval(0.0, 1.0)),
                      ("wedge2", an.Wedge2())):
        w = -math.inf
        for _ in range(1000):
            t = math.exp(gen.uniform(math.log(1e-3), math.log(10.0)))
            if name == "halfline":
                p, q = gen.uniform(1e-3, 5.0, 1), gen.uniform(1e-3, 5.0, 1)
            elif name == "interval":
                p, q = gen.uniform(1e-3, 1 - 1e-3, 1), gen.uniform(1e-3, 1 - 1e-3, 1)
            else:
                c = gen.uniform(-3, 3, 2)
                p = np.array([c[0], c[0] + gen.uniform(1e-3, 5.0)])
                q = np.array([c[1], c[1] + gen.uniform(1e-3, 5.0)])
            w = max(w, _segment_second_diff(dom, t, p, q))
        worst[name] = w
    ok = all(v <= 1e-8 for v in worst.values())
    return CriterionResult("3 log-concavity", "second differences <= 0",
                           ", ".join(f"{k}={v:.1e}" for k, v in worst.items()), "1e-8", ok)


# -- meander ----------------------------------------------------------------

def c04_meander_endpoint(seed=DEFAULT_SEED, n=50_000, threads=1):
    ens = run_ensemble("sde", n, 1.0, seed=seed + 4, grid=meander_grid(1.0, 1e-3, eps_end=1e-6),
                       observe=[1.0], threads=threads)
    d, p = ks_one_sample(ens.endpoint, rayleigh_cdf())
    return CriterionResult("4 meander SDE endpoint", "Rayleigh(1)", f"D={d:.4f} p={_fmt_p(p)}",
                           f"p > {LEVEL}", p > LEVEL,
                           details={"retry_rate": ens.retry_rate, "n": n})


def c05_imhof(seed=DEFAULT_SEED, n=100_000, threads=1):
    ens = run_ensemble("bessel", n, 1.0, seed=seed + 5, grid=np.array([0.0, 1.0]), observe=[1.0],
                       threads=threads)
    s = summarize(ens.weights)
    neff = summarize(ens.endpoint, ens.weights).n_eff
    d, p = ks_one_sample(ens.endpoint, rayleigh_cdf(), ens.weights)
    crit = ks_critical(neff, LEVEL)
    ok = abs(s.mean - 1.0) <= 3 * s.se and d < crit
    return CriterionResult("5 Imhof reweighting", "E[w]=1; weighted CDF Rayleigh(1)",
                           f"mean w={s.mean:.4f}+-{s.se:.4f}, D={d:.4f}",
                           f"3 SE; D < {crit:.4f} (N_eff={neff:.0f})", ok)


def three_sampler_ensembles(seed=DEFAULT_SEED, n=20_000, threads=1, y0=1e-3):
    obs = [0.5, 1.0]
    sde = run_ensemble("sde", n, 1.0, seed=seed + 61, observe=obs, threads=threads)
    bes = run_ensemble("bessel", n, 1.0, seed=seed + 62, grid=np.array([0.0, 0.5, 1.0]), observe=obs,
                       threads=threads)
    rej = run_ensemble("rejection", n, 1.0, seed=seed + 63, grid=TimeGrid.uniform(0.0, 1.0, 10_000),
                       observe=obs, y0=y0, threads=threads)
    return sde, bes, rej


def c06_three_samplers(seed=DEFAULT_SEED, n=20_000, threads=1):
    sde, bes, rej = three_sampler_ensembles(seed, n, threads)
    ps = {}
    for j, t in enumerate((0.5, 1.0)):
        ps[f"sde/rej@{t}"] = ks_two_sample(sde.values[:, j], rej.values[:, j])[1]
        ps[f"sde/bes@{t}"] = ks_two_sample(sde.values[:, j], bes.values[:, j], None, bes.weights)[1]
        ps[f"rej/bes@{t}"] = ks_two_sample(rej.values[:, j], bes.values[:, j], None, bes.weights)[1]
    pmin = min(ps.values())
    return CriterionResult("6 three-sampler agreement", "pairwise two-sample KS",
                           f"min p={_fmt_p(pmin)}", f"all p > {LEVEL}", pmin > LEVEL,
                           details={"p_values": ps, "acceptance_rate": rej.acceptance_rate})


def c07_mean_identity(seed=DEFAULT_SEED, n=50_000, threads=1):
    ts = (0.25, 0.5, 0.75)
    ens = run_ensemble("sde", n, 1.0, seed=seed + 7, observe=ts, threads=threads)
    rows, ok = [], True
    for j, t in enumerate(ts):
        s = summarize(ens.values[:, j])
        ref = meander_mean(1.0, t)
        tol = 3 * s.se + 0.01 * ref
        ok &= abs(s.mean - ref) <= tol
        rows.append(f"t={t}: {s.mean:.4f} vs {ref:.4f}")
    return CriterionResult("7 mean identity", "quadrature of E[Y(t)]", "; ".join(rows),
                           "3 SE + 1%", bool(ok))


# -- flows -----------------------------------------------------------------

def c08_boundaries(seed=DEFAULT_SEED, n_sde=50_000, n_oracle=20_000, threads=1):
    sde = run_boundary_ensemble("sde", n_sde, 0.0, 1.0, seed=seed + 81, threads=threads)
    orc = run_boundary_ensemble("oracle", n_oracle, 0.0, 1.0, seed=seed + 82, epsilon=1e-3,
                                threads=threads)
    gap = sde.gap[:, -1]
    d1, p1 = ks_one_sample(gap / math.sqrt(2.0), rayleigh_cdf())
    d2, p2 = ks_two_sample(gap, orc.gap[:, -1])
    ok = p1 > LEVEL and p2 > LEVEL and bool(np.all(sde.min_gap > 0))
    return CriterionResult("8 cluster-boundary law", "gap/sqrt2 ~ Rayleigh(1); SDE = oracle",
                           f"p={_fmt_p(p1)}, p2={_fmt_p(p2)}", f"p > {LEVEL}", ok,
                           details={"oracle_acceptance": orc.acceptance_rate})


def coalescence_study(seed=DEFAULT_SEED, n=100_000, dts=(1e-3, 5e-4, 2.5e-4)):
    """Non-meeting frequency of two particles from {0, 1} at several dt on shared streams.

    All runs use the normals of the finest step; coarser runs sum them, so the
    coarse grids are subsets of the fine one and the estimates are pathwise ordered.
    """
    fine = min(dts)
    out = []
    for dt in dts:
        sub = int(round(dt / fine))
        alive = 0
        for i in range(n):
            s = simulate_coalescing([0.0, 1.0], 1.0, dt, RngStream(seed + 9, i), record=False,
                                    substeps=sub, stop_on_single=True)
            alive += s.survivors == 2
        out.append(alive / n)
    return np.array(out)


def c09_coalescence(seed=DEFAULT_SEED, n=100_000):
    target = an.exit_prob(an.Wedge2(), 1.0, (0.0, 1.0))
    est = coalescence_study(seed, n)
    bias = est - target
    se = math.sqrt(target * (1 - target) / n)
    monotone = bool(np.all(np.diff(bias) < 0) and np.all(bias > -3 * se))
    final = abs(bias[-1])
    ok = monotone and final < 0.01
    return CriterionResult("9 coalescence probability", f"{target:.4f}",
                           "bias " + ", ".join(f"{b:+.4f}" for b in bias)
                           + f" (final {final / target:.2%} rel)",
                           "monotone; |err| < 0.01", ok,
                           details={"estimates": est.tolist(), "target": target, "se": se})


def c10_stationary(seed=DEFAULT_SEED, runs=10_000, threads=1):
    drift = an.DriftSpec.linear(1.0)
    res = run_stationary(drift, runs, seed=seed + 10, lookback=10.0, span=5.0, n_particles=200,
                         dt=1e-2, threads=threads)
    est = res["estimates"]
    d, p = ks_one_sample(est, lambda z: an.stationary_cdf(drift, z))
    var = float(np.var(est, ddof=1))
    ok = res["coalesced_rate"] >= 0.99 and p > LEVEL and abs(var - 0.5) <= 0.025
    return CriterionResult("10 stationary point", "N(0, 1/2)",
                           f"coalesced={res['coalesced_rate']:.4f}, p={_fmt_p(p)}, var={var:.4f}",
                           f">= 0.99; p > {LEVEL}; 5%", ok)


def c11_infinite_cluster(seed=DEFAULT_SEED, n=10_000, threads=1):
    drift = an.DriftSpec.linear(1.0)
    sde = run_boundary_ensemble("infinite-sde", n, 0.0, 1.0, seed=seed + 111, drift=drift,
                                threads=threads)
    orc = run_boundary_ensemble("infinite-oracle", n, 0.0, 1.0, seed=seed + 112, drift=drift,
                                epsilon=1e-3, threads=threads)
    d, p = ks_two_sample(sde.gap[:, -1], orc.gap[:, -1])
    positive = bool(np.all(sde.min_gap > 0))
    return CriterionResult("11 infinite-cluster boundaries", "SDE gap = oracle gap at t=1",
                           f"D={d:.4f} p={_fmt_p(p)}, gap>0 in all={positive}",
                           f"p > {LEVEL}; 100%", p > LEVEL and positive,
                           details={"oracle_acceptance": orc.acceptance_rate})


# -- determinism -------------------------------------------------------------

def _digest(arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def c12_determinism(seed=DEFAULT_SEED):
    from .cli import main
    outs = []
    with tempfile.TemporaryDirectory() as tmp:
        for k in range(2):
            path = os.path.join(tmp, f"run{k}.csv")
            main(["meander", "--method", "sde", "--n", "200", "--seed", str(seed),
                  "--record-points", "0", "--out", path], stdout=io.StringIO())
            with open(path, "rb") as fh:
                outs.append(fh.read())
    same_cli = outs[0] == outs[1] and len(outs[0]) > 0
    pts = parse_points("-5:5:0.05")
    one = simulate_coalescing(pts, 1.0, 1e-3, RngStream(seed, 12).generator())
    gen = RngStream(seed, 12).generator()
    half = simulate_coalescing(pts, 0.5, 1e-3, gen)
    two = simulate_coalescing(None, 0.5, 1e-3, gen, start=half)
    same_flow = _digest([one.positions, one.owners, one.times]) == _digest([two.positions, two.owners, two.times])
    b1 = run_boundary_ensemble("sde", 50, seed=seed)
    b2 = run_boundary_ensemble("sde", 50, seed=seed, threads=3)
    same_threads = np.array_equal(b1.alpha, b2.alpha) and np.array_equal(b1.beta, b2.beta)
    ok = same_cli and same_flow and same_threads
    return CriterionResult("12 determinism and semigroup", "byte-identical",
                           f"rerun={same_cli}, composed={same_flow}, threads={same_threads}",
                           "exact", ok)


CRITERIA = {
    "analytic": (c01_exit_prob, c02_drift_bound, c03_log_concave),
    "meander": (c04_meander_endpoint, c05_imhof, c06_three_samplers, c07_mean_identity),
    "flows": (c08_boundaries, c09_coalescence, c10_stationary, c11_infinite_cluster),
    "determinism": (c12_determinism,),
}


def run_suite(suite: str = "all", seed: int = DEFAULT_SEED, echo=None) -> list[CriterionResult]:
    if suite == "all":
        funcs = [f for group in CRITERIA.values() for f in group]
    elif suite in CRITERIA:
        funcs = list(CRITERIA[suite])
    else:
        raise ValueError(f"unknown suite {suite!r}; choose from all, {', '.join(CRITERIA)}")
    results = []
    for f in funcs:
        t0 = time.perf_counter()
        r = f(seed=seed)
        r.runtime = time.perf_counter() - t0
        results.append(r)
        if echo is not None:
            echo(r.line())
    return results
