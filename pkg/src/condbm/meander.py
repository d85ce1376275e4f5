"""Three samplers of the Brownian meander and the mean identity they must satisfy.

* ``sde``: the singular SDE dY = d/dy log gamma_{R+}(T - t, Y) dt + dW, started
  from the exact entrance law at a small positive time.
* ``bessel``: the 3-d Bessel process, sampled exactly on any grid and
  reweighted by the Imhof density sqrt(pi T) / (sqrt(2) Z(T)).
* ``rejection``: Brownian motion from a small y0 > 0, kept only if it stays
  positive at every grid time.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from . import kernels
from .analytic import HalfLine, entrance_table, imhof_weight
from .errors import AttemptsExhausted
from .rng import RngStream, as_generator, stream_label
from .sde import KAPPA, ConditionedDrift, PathRealization, TimeGrid, euler_maruyama, meander_grid

METHODS = ("sde", "bessel", "rejection")


def _label(rng):
    seed, index = stream_label(rng)
    return {"seed": seed, "index": index}


def sample_meander_sde(T: float, grid: TimeGrid, rng, max_retries: int = 32,
                       backend=None, kappa: float = KAPPA) -> PathRealization:
    """Meander path from the singular SDE; the value at t = 0 is recorded as 0."""
    if not grid.eps_start > 0:
        raise ValueError("the SDE sampler needs a grid starting at a positive time")
    gen = as_generator(rng)
    z0 = entrance_table(T, grid.eps_start).sample(gen)
    path = euler_maruyama(ConditionedDrift(HalfLine(), T), HalfLine(), z0, grid, gen,
                          max_retries=max_retries, tail=grid.eps_end, backend=backend,
                          sampler="meander-sde", kappa=kappa)
    times = np.concatenate([[0.0], path.times])
    values = np.concatenate([[[0.0]], path.values])
    meta = dict(path.meta, **_label(rng))
    return PathRealization(times, values, 1.0, meta, grid)


def _full_times(grid_times, T):
    t = np.asarray(grid_times, dtype=float)
    if t[0] > 0.0:
        t = np.concatenate([[0.0], t])
    if t[-1] < T:
        t = np.concatenate([t, [T]])
    return t


def sample_meander_bessel(T: float, grid, rng) -> PathRealization:
    """Exact 3-d Bessel path on ``grid`` (0 and T added), weighted by the Imhof density."""
    gen = as_generator(rng)
    times = _full_times(grid.times if isinstance(grid, TimeGrid) else grid, T)
    incr = gen.standard_normal((len(times) - 1, 3)) * np.sqrt(np.diff(times))[:, None]
    w = np.vstack([np.zeros(3), np.cumsum(incr, axis=0)])
    z = np.sqrt(np.einsum("ij,ij->i", w, w))
    meta = {"sampler": "meander-bessel", **_label(rng)}
    return PathRealization(times, z, imhof_weight(T, z[-1]), meta,
                           grid if isinstance(grid, TimeGrid) else None)


def sample_meander_rejection(T: float, y0: float | None, grid, rng,
                             max_attempts: int = 10 ** 7, backend=None) -> PathRealization:
    """Driftless BM from ``y0`` conditioned (by rejection) to stay positive at grid times."""
    y0 = 1e-3 * math.sqrt(T) if y0 is None else float(y0)
    if not y0 > 0:
        raise ValueError("rejection sampler needs y0 > 0")
    gen = as_generator(rng)
    times = _full_times(grid.times if isinstance(grid, TimeGrid) else grid, T)
    vals, attempts, status = kernels.get_backend(backend).reject_halfline(times, y0, max_attempts, gen)
    if status != kernels.OK:
        seed, index = stream_label(rng)
        raise AttemptsExhausted(f"no path from y0={y0} stayed positive in {max_attempts} attempts",
                                attempts=attempts, seed=seed, index=index)
    meta = {"sampler": "meander-rejection", "attempts": attempts, "y0": y0, **_label(rng)}
    return PathRealization(times, vals, 1.0, meta, grid if isinstance(grid, TimeGrid) else None)


def meander_mean(T: float, t: float) -> float:
    """sqrt(T) int_0^inf y^2 gamma_{R+}(T - t, sqrt(t) y) exp(-y^2/2) dy, i.e. E[Y(t)].

    gamma(0+, .) is taken as 1 at t = T.
    """
    T, t = float(T), float(t)
    if not 0.0 <= t <= T:
        raise ValueError(f"need 0 <= t <= T, got t={t}")
    if t == 0.0:
        return 0.0
    if t == T:
        return math.sqrt(T) * math.sqrt(math.pi / 2.0)
    c = math.sqrt(t / (2.0 * (T - t)))

    def f(y):
        return y * y * special.erf(c * y) * math.exp(-0.5 * y * y)

    val, _ = integrate.quad(f, 0.0, math.inf, epsabs=1e-11, epsrel=1e-12, limit=200)
    return math.sqrt(T) * val


# --------------------------------------------------------------------------
# ensembles

@dataclass
class MeanderEnsemble:
    """Observations of N meander paths.

    ``values[i, j]`` is path i at ``observe[j]`` (linear interpolation between
    recorded points); ``functionals`` holds the minimum over [T/2, T] and the
    time average of each path.
    """

    T: float
    sampler: str
    observe: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    functionals: dict = field(default_factory=dict)
    attempts: int = 0
    retries: int = 0
    steps: int = 0
    y0: float | None = None
    paths: list | None = None
    seed: int | None = None

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def endpoint(self) -> np.ndarray:
        return self.values[:, -1]

    def at(self, t: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.observe - t)))
        if abs(self.observe[j] - t) > 1e-12:
            raise KeyError(f"time {t} was not observed")
        return self.values[:, j]

    @property
    def acceptance_rate(self) -> float | None:
        if self.sampler != "rejection" or not self.attempts:
            return None
        return self.n / self.attempts

    @property
    def retry_rate(self) -> float:
        return self.retries / self.steps if self.steps else 0.0


def _one_path(method, T, grid, rng, y0, max_attempts, backend):
    if method == "sde":
        return sample_meander_sde(T, grid, rng, backend=backend)
    if method == "bessel":
        return sample_meander_bessel(T, grid, rng)
    if method == "rejection":
        return sample_meander_rejection(T, y0, grid, rng, max_attempts, backend=backend)
    raise ValueError(f"unknown meander method {method!r}; choose from {METHODS}")


def path_functionals(path: PathRealization, T: float, observe) -> tuple[np.ndarray, float, float]:
    t, v = path.times, path.values[:, 0]
    obs = np.interp(observe, t, v)
    late = t >= 0.5 * T
    return obs, float(v[late].min()), float(integrate.trapezoid(v, t) / (t[-1] - t[0]))


def run_ensemble(method: str, n: int, T: float = 1.0, seed: int = 0, grid=None, observe=None,
                 y0: float | None = None, max_attempts: int = 10 ** 7, threads: int = 1,
                 keep_paths: bool = False, backend=None, start_index: int = 0) -> MeanderEnsemble:
    """Sample ``n`` paths; path i uses stream (seed, start_index + i)."""
    if method not in METHODS:
        raise ValueError(f"unknown meander method {method!r}; choose from {METHODS}")
    if n < 1:
        raise ValueError("ensemble size must be positive")
    if grid is None:
        grid = meander_grid(T) if method == "sde" else TimeGrid.uniform(0.0, T, 1000)
    observe = np.asarray([0.5 * T, T] if observe is None else observe, dtype=float)
    vals = np.empty((n, len(observe)))
    weights = np.empty(n)
    mins = np.empty(n)
    avgs = np.empty(n)
    counts = np.zeros((n, 3), dtype=np.int64)   # attempts, retries, steps
    kept = [None] * n if keep_paths else None
    if method == "rejection" and y0 is None:
        y0 = 1e-3 * math.sqrt(T)

    def work(lo, hi):
        for i in range(lo, hi):
            p = _one_path(method, T, grid, RngStream(seed, start_index + i), y0, max_attempts, backend)
            vals[i], mins[i], avgs[i] = path_functionals(p, T, observe)
            weights[i] = p.weight
            counts[i] = (p.meta.get("attempts", 1), p.meta.get("retries", 0), len(p.times) - 1)
            if keep_paths:
                kept[i] = p

    _parallel(work, n, threads)
    return MeanderEnsemble(T, method, observe, vals, weights, {"min_late": mins, "time_avg": avgs},
                           int(counts[:, 0].sum()), int(counts[:, 1].sum()), int(counts[:, 2].sum()),
                           y0, kept, seed)


def _parallel(work, n, threads):
    """Run ``work(lo, hi)`` over index chunks; results land by index, so order is fixed."""
    if threads <= 1 or n < 2:
        work(0, n)
        return
    chunk = max(1, -(-n // (4 * threads)))
    bounds = [(lo, min(n, lo + chunk)) for lo in range(0, n, chunk)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for f in [pool.submit(work, lo, hi) for lo, hi in bounds]:
            f.result()
