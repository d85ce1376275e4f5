"""Time grids and an Euler-Maruyama driver for conditioned diffusions.

The drifts of interest blow up at the terminal time and at the domain
boundary. Grids therefore stop short of the singular endpoints and shrink
geometrically towards them, and the driver treats a step that leaves the
domain as a discretisation artefact: the Gaussian increment is redrawn, and if
that keeps failing the step is halved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .analytic import (Domain, HalfLine, Wedge2, DriftSpec, grad_log_exit_prob)
from .errors import ExitFailure, NonFiniteDrift
from .rng import as_generator, stream_label

MAX_RETRIES = 32
MAX_HALVINGS = 10
MAX_DRIFT_HALVINGS = 60
KAPPA = 0.5   # step control: |drift| * sqrt(dt) <= KAPPA


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing times covering [eps_start, T - eps_end]."""

    times: np.ndarray
    T: float
    eps_start: float = 0.0
    eps_end: float = 0.0
    dt_max: float = math.inf
    ratio: float = 0.5

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        t.setflags(write=False)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("a time grid needs at least two points")
        if not np.all(np.diff(t) > 0):
            raise ValueError("grid times must be strictly increasing")
        if np.max(np.diff(t)) > self.dt_max * (1 + 1e-12):
            raise ValueError("grid step exceeds dt_max")

    def __len__(self):
        return len(self.times)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    @classmethod
    def uniform(cls, t0: float, t1: float, n: int, T: float | None = None) -> "TimeGrid":
        T = t1 if T is None else T
        times = np.linspace(t0, t1, n + 1)
        return cls(times, T, t0, T - t1, (t1 - t0) / n)

    @classmethod
    def from_times(cls, times, T: float | None = None) -> "TimeGrid":
        times = np.asarray(times, dtype=float)
        T = float(times[-1]) if T is None else float(T)
        return cls(times, T, float(times[0]), T - float(times[-1]), float(np.max(np.diff(times))))


def make_grid(T: float, n_uniform: int, epsilon_start: float = 0.0, epsilon_end: float = 0.0,
              refine_levels: int = 0) -> TimeGrid:
    """Uniform grid on [eps0, T - eps1] with geometric refinement at offset endpoints.

    At each endpoint with a positive offset the outermost uniform step ``h`` is
    replaced by steps h/2, h/4, ..., h/2**L, h/2**L, so every refined endpoint
    adds ``refine_levels`` steps.
    """
    T = float(T)
    if not (T > 0 and math.isfinite(T)):
        raise ValueError(f"horizon must be positive, got {T}")
    if n_uniform < 1:
        raise ValueError("n_uniform must be at least 1")
    if epsilon_start < 0 or epsilon_end < 0 or epsilon_start + epsilon_end >= T:
        raise ValueError("need epsilon_start, epsilon_end >= 0 and epsilon_start + epsilon_end < T")
    if refine_levels < 0:
        raise ValueError("refine_levels must be nonnegative")
    t0, t1 = float(epsilon_start), T - float(epsilon_end)
    h = (t1 - t0) / n_uniform
    times = t0 + h * np.arange(n_uniform + 1)
    times[-1] = t1
    L = refine_levels
    if L and n_uniform >= 2:
        geo = h * 0.5 ** np.arange(1, L + 1)
        if epsilon_end > 0:
            times = np.concatenate([times[:-1], t1 - geo, [t1]])
        if epsilon_start > 0:
            times = np.concatenate([[t0], (t0 + geo)[::-1], times[1:]])
    return TimeGrid(times, T, t0, float(epsilon_end), h)


def meander_grid(T: float = 1.0, dt_max: float = 1e-3, eps_start: float | None = None,
                 eps_end: float | None = None, refine_levels: int = 10) -> TimeGrid:
    """Default grid for the singular samplers: eps0 = 1e-4 T, eps1 = 1e-6 T."""
    eps0 = 1e-4 * T if eps_start is None else eps_start
    eps1 = 1e-6 * T if eps_end is None else eps_end
    n = max(2, int(math.ceil((T - eps0 - eps1) / dt_max - 1e-9)))
    return make_grid(T, n, eps0, eps1, refine_levels)


@dataclass(eq=False)
class PathRealization:
    """A sampled path. ``times`` may contain points inserted by step halving."""

    times: np.ndarray
    values: np.ndarray
    weight: float = 1.0
    meta: dict = field(default_factory=dict)
    grid: TimeGrid | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        self.values = v.reshape(len(v), -1) if v.ndim == 1 else v
        if len(self.values) != len(self.times):
            raise ValueError("values and times differ in length")
        if not self.weight > 0:
            raise ValueError("path weight must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("path values must be finite")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def endpoint(self) -> np.ndarray:
        return self.values[-1]

    def at(self, t: float) -> np.ndarray:
        """Value at time ``t`` by linear interpolation between recorded points."""
        return np.array([np.interp(t, self.times, self.values[:, j]) for j in range(self.dim)])

    def component(self, j: int = 0) -> np.ndarray:
        return self.values[:, j]


# --------------------------------------------------------------------------
# drifts

class ConditionedDrift:
    """grad_y log gamma_G(T - t, y): BM conditioned to stay in ``domain`` up to ``T``."""

    def __init__(self, domain: Domain, T: float):
        self.domain = domain
        self.T = float(T)

    def __call__(self, t, y):
        return grad_log_exit_prob(self.domain, self.T - t, y)

    @property
    def kernel(self):
        d = self.domain
        if isinstance(d, HalfLine) and d.origin == 0.0 and d.direction == 1:
            return "halfline"
        if isinstance(d, Wedge2):
            return "wedge"
        return None


class ThetaDrift:
    """Pair drift (-a(y1) + d1 log theta, -a(y2) + d2 log theta) in the wedge."""

    def __init__(self, drift: DriftSpec):
        self.drift = drift
        self.table = drift.table

    def __call__(self, t, y):
        y1, y2 = float(y[0]), float(y[1])
        th = self.table.theta_scalar(y1, y2)
        return np.array([-self.drift.scalar(y1) - self.table.pdf_scalar(y1) / th,
                         -self.drift.scalar(y2) + self.table.pdf_scalar(y2) / th])

    kernel = "theta"


def _raise_for(status, t_fail, retries, rng, sampler):
    seed, index = stream_label(rng)
    if status == kernels.EXIT_FAIL:
        raise ExitFailure(f"{sampler}: could not keep the path inside the domain at t={t_fail:.6g} "
                          f"after {MAX_HALVINGS} step halvings; use a finer grid",
                          t=t_fail, retries=retries, seed=seed, index=index)
    if status == kernels.NONFINITE:
        raise NonFiniteDrift(f"{sampler}: drift is not finite at t={t_fail:.6g}",
                             t=t_fail, seed=seed, index=index)


def euler_maruyama(drift_field: Callable, domain: Domain | None, x0, grid: TimeGrid, rng,
                   max_retries: int = MAX_RETRIES, tail: float = 0.0, backend=None,
                   sampler: str = "em", kappa: float = KAPPA) -> PathRealization:
    """Euler-Maruyama with redraw-then-halve domain enforcement.

    A step ``Y + b dt + sqrt(dt) xi`` that leaves the domain is redrawn up to
    ``max_retries`` times; after that ``dt`` is halved (inserting a grid point)
    up to 10 times before :class:`ExitFailure` is raised. Independently, a step
    is halved while ``|drift| * sqrt(dt) > kappa``, so that a drift of order
    1/distance cannot throw the path far past where the noise would take it.
    ``tail > 0`` appends an undrifted final step of that length, ending at
    ``grid.T``.
    """
    gen = as_generator(rng)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if domain is not None and not domain.contains(x0):
        raise ValueError(f"start point {x0.tolist()} is not inside the domain")
    kind = getattr(drift_field, "kernel", None)
    if kind is not None and domain is not None:
        if kind == "theta" and not isinstance(domain, Wedge2):
            kind = None
        elif kind in ("halfline", "wedge") and domain != drift_field.domain:
            kind = None
    k = kernels.get_backend(backend)
    times = grid.times
    if kind == "halfline":
        res = k.em_halfline(times, float(x0[0]), drift_field.T, tail, max_retries, gen, kappa)
    elif kind == "wedge":
        res = k.em_wedge(times, float(x0[0]), float(x0[1]), drift_field.T, tail, max_retries, gen,
                          kappa)
    elif kind == "theta":
        res = k.em_theta(times, float(x0[0]), float(x0[1]), drift_field.table,
                         drift_field.drift.program, max_retries, gen, kappa)
    else:
        res = _em_generic(drift_field, domain, x0, times, grid.T, tail, max_retries, gen, kappa)
    t_out, y_out, retries, status, t_fail = res
    if status != kernels.OK:
        _raise_for(status, t_fail, retries, rng, sampler)
    seed, index = stream_label(rng)
    return PathRealization(t_out, y_out, 1.0,
                           {"sampler": sampler, "seed": seed, "index": index, "retries": retries},
                           grid)


def _em_generic(drift_field, domain, x0, times, T, tail, max_retries, gen, kappa):
    normal = gen.standard_normal
    d = len(x0)
    y = x0.copy()
    t = float(times[0])
    t_out, y_out = [t], [y.copy()]
    retries = 0

    def inside(v):
        return domain is None or domain.contains(v)

    for k in range(1, len(times)):
        t_next = float(times[k])
        while t < t_next:
            b = np.asarray(drift_field(t, y), dtype=float).reshape(d)
            if not np.all(np.isfinite(b)):
                return t_out, y_out, retries, kernels.NONFINITE, t
            dt = t_next - t
            full = True
            bmax = float(np.max(np.abs(b))) if d else 0.0
            for _ in range(MAX_DRIFT_HALVINGS):
                if bmax * math.sqrt(dt) <= kappa:
                    break
                dt = 0.5 * dt
                full = False
            new = None
            for _ in range(MAX_HALVINGS + 1):
                sdt = math.sqrt(dt)
                for _ in range(max_retries + 1):
                    cand = np.array([y[j] + b[j] * dt + sdt * normal() for j in range(d)])
                    if inside(cand):
                        new = cand
                        break
                    retries += 1
                if new is not None:
                    break
                dt = 0.5 * dt
                full = False
            if new is None:
                return t_out, y_out, retries, kernels.EXIT_FAIL, t
            t = t_next if full else t + dt
            y = new
            t_out.append(t)
            y_out.append(y.copy())
    if tail > 0.0:
        st = math.sqrt(tail)
        for _ in range(max_retries + 1):
            cand = np.array([y[j] + st * normal() for j in range(d)])
            if inside(cand):
                t_out.append(T)
                y_out.append(cand)
                break
            retries += 1
        else:
            return t_out, y_out, retries, kernels.EXIT_FAIL, t
    return np.array(t_out), np.array(y_out), retries, kernels.OK, t


def first_exit_time(path: PathRealization, domain: Domain) -> float | None:
    """First recorded time at which the path lies outside the closure of ``domain``."""
    for t, v in zip(path.times, path.values):
        if not domain.in_closure(v):
            return float(t)
    return None
