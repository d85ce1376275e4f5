"""Coalescing Brownian flows, their clusters and cluster boundaries.

An n-point motion of the Arratia flow is simulated with independent Euler
steps; after every step, neighbours that touched or crossed are merged at the
midpoint of their positions. The boundaries of the cluster that ends at a
vertex ``x`` are sampled two ways: as the pair diffusion conditioned to stay
in the wedge {y1 < y2}, and as two dual trajectories started at x -/+ eps,
kept only if they do not meet. For a flow with a contracting drift the same
two routes give the boundaries of the cluster around the stationary point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .analytic import DriftSpec, Wedge2, entrance_table
from .errors import AttemptsExhausted, NotCoalesced
from .meander import _parallel
from .rng import RngStream, as_generator, stream_label
from .sde import (KAPPA, ConditionedDrift, PathRealization, ThetaDrift, TimeGrid,
                  euler_maruyama, make_grid, meander_grid)


# --------------------------------------------------------------------------
# coalescing particle systems

@dataclass(eq=False)
class ParticleSystem:
    """n-point motion with merges.

    ``positions[k, i]`` is the position at ``times[k]`` of the particle that
    initial particle ``i`` has merged into; ``owners[k, i]`` is that particle's
    label, the smallest initial index in its block. Only the final state is
    kept when the system was simulated without recording.
    """

    initial: np.ndarray
    times: np.ndarray
    positions: np.ndarray | None
    owners: np.ndarray | None
    live_positions: np.ndarray
    live_labels: np.ndarray
    owner: np.ndarray
    drift: DriftSpec | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.initial)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def survivors(self) -> int:
        return len(self.live_labels)

    def check_invariants(self):
        """Order preservation and monotone, coarsening merge map (exact)."""
        if self.positions is None:
            assert np.all(np.diff(self.live_positions) > 0)
            assert np.all(np.diff(self.owner) >= 0)
            return
        assert np.all(np.diff(self.positions, axis=1) >= 0), "order violated"
        assert np.all(np.diff(self.owners, axis=1) >= 0), "merge map not monotone"
        for k in range(1, len(self.owners)):
            prev, cur = self.owners[k - 1], self.owners[k]
            # a block at step k-1 stays inside one block at step k
            same = prev[1:] == prev[:-1]
            assert np.all(cur[1:][same] == cur[:-1][same]), "merge map refined"


def parse_points(spec: str) -> np.ndarray:
    """``"a:b:step"`` or a comma-separated list."""
    if ":" in spec:
        a, b, step = (float(v) for v in spec.split(":"))
        if step <= 0 or b < a:
            raise ValueError(f"bad point range {spec!r}")
        n = int(math.floor((b - a) / step + 1e-9))
        return a + step * np.arange(n + 1)
    return np.array([float(v) for v in spec.split(",") if v.strip()])


def _n_steps(horizon, dt):
    if not (horizon > 0 and dt > 0):
        raise ValueError("horizon and dt must be positive")
    if dt > horizon * (1 + 1e-12):
        raise ValueError("dt must not exceed the horizon")
    n = int(math.ceil(horizon / dt - 1e-9))
    return n, horizon / n


def simulate_coalescing(points, horizon: float, dt: float, rng, drift: DriftSpec | None = None,
                        record: bool = True, substeps: int = 1, stop_on_single: bool = False,
                        start: ParticleSystem | None = None, backend=None) -> ParticleSystem:
    """Advance the n-point motion from ``points`` (or from the end of ``start``) by ``horizon``.

    Each step is ``x + a(x) dt + sqrt(dt) xi`` per live particle; ``substeps > 1``
    builds each increment from that many finer normals, which couples runs at
    different dt on one random stream. To continue a simulation bit-identically
    pass the previous system as ``start`` and the same ``Generator``.
    """
    gen = as_generator(rng)
    n_steps, h = _n_steps(float(horizon), float(dt))
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    if start is None:
        x = np.asarray(points, dtype=float).ravel()
        if x.size == 0 or not np.all(np.isfinite(x)):
            raise ValueError("need finite starting points")
        if not np.all(np.diff(x) > 0):
            raise ValueError("starting points must be strictly increasing")
        pos, labels, owner, t0 = x, np.arange(x.size), np.arange(x.size), 0.0
        if drift is not None and not isinstance(drift, DriftSpec):
            raise TypeError("drift must be a DriftSpec")
    else:
        x = start.initial
        pos, labels, owner, t0 = start.live_positions, start.live_labels, start.owner, start.horizon
        drift = start.drift if drift is None else drift
    prog = drift.program if drift is not None else None
    k = kernels.get_backend(backend)
    pos, labels, owner, traj, owners, steps = k.coalesce(
        h, n_steps, substeps, pos, labels, owner, gen, prog, record, stop_on_single)
    prior = 0 if start is None else start.meta.get("total_steps", 0)
    if start is not None and start.meta.get("dt") == h:
        times = h * np.arange(prior, prior + steps + 1)     # same stamps as a single run
    else:
        times = t0 + h * np.arange(steps + 1)
    if start is not None and record and start.positions is not None:
        traj = np.vstack([start.positions, traj[1:]])
        owners = np.vstack([start.owners, owners[1:]])
        times = np.concatenate([start.times, times[1:]])
    seed, index = stream_label(rng)
    meta = {"seed": seed, "index": index, "dt": h, "steps": steps, "substeps": substeps,
            "total_steps": prior + steps}
    return ParticleSystem(x, times, traj, owners, np.asarray(pos), np.asarray(labels),
                          np.asarray(owner), drift, meta)


@dataclass(frozen=True)
class ClusterSnapshot:
    """Clusters at the horizon: vertex positions and the initial-index block of each."""

    horizon: float
    vertices: np.ndarray
    blocks: tuple          # (first, last) initial indices, inclusive
    labels: np.ndarray

    @property
    def sizes(self) -> np.ndarray:
        return np.array([b - a + 1 for a, b in self.blocks])

    def count_in(self, initial: np.ndarray, a: float, b: float) -> int:
        """Empirical number of clusters among starting points in [a, b]."""
        sel = (initial >= a) & (initial <= b)
        return int(len(np.unique(self._owner[sel]))) if sel.any() else 0

    _owner: np.ndarray = field(default=None, repr=False, compare=False)


def cluster_partition(system: ParticleSystem) -> ClusterSnapshot:
    owner = system.owner
    change = np.flatnonzero(np.r_[True, owner[1:] != owner[:-1]])
    ends = np.r_[change[1:] - 1, len(owner) - 1]
    blocks = tuple((int(a), int(b)) for a, b in zip(change, ends))
    where = {int(l): i for i, l in enumerate(system.live_labels)}
    vertices = np.array([system.live_positions[where[int(owner[a])]] for a, _ in blocks])
    return ClusterSnapshot(system.horizon, vertices, blocks, owner[change].copy(), owner.copy())


# --------------------------------------------------------------------------
# cluster boundaries

@dataclass(eq=False)
class BoundaryPair:
    """Left and right boundary (alpha, beta) of one cluster, alpha <= beta."""

    path: PathRealization
    x: float
    T: float

    def __post_init__(self):
        v = self.path.values
        if v.shape[1] != 2 or np.any(v[:, 0] > v[:, 1]):
            raise ValueError("boundary pair must satisfy alpha <= beta")

    @property
    def times(self):
        return self.path.times

    @property
    def alpha(self):
        return self.path.values[:, 0]

    @property
    def beta(self):
        return self.path.values[:, 1]

    @property
    def gap(self):
        return self.beta - self.alpha

    @property
    def center(self):
        return 0.5 * (self.alpha + self.beta)


def _pair_start(gen, x, eps0, gap_over_sqrt2):
    g = math.sqrt(2.0) * gap_over_sqrt2
    c = x + math.sqrt(0.5 * eps0) * gen.standard_normal()
    return c - 0.5 * g, c + 0.5 * g


def sample_boundary_sde(x: float, T: float, grid: TimeGrid, rng, max_retries: int = 32,
                        backend=None, kappa: float = KAPPA) -> BoundaryPair:
    """Boundaries from the pair SDE with drift -/+ d/dD log gamma_{R+}(2(T - t), D), D = y2 - y1.

    At the first grid time the gap over sqrt 2 is drawn from the meander
    entrance law and the centre from x + N(0, eps0 / 2).
    """
    eps0 = grid.eps_start
    if not eps0 > 0:
        raise ValueError("the boundary SDE needs a grid starting at a positive time")
    gen = as_generator(rng)
    y1, y2 = _pair_start(gen, float(x), eps0, entrance_table(T, eps0).sample(gen))
    wedge = Wedge2()
    path = euler_maruyama(ConditionedDrift(wedge, T), wedge, (y1, y2), grid, gen,
                          max_retries=max_retries, tail=grid.eps_end, backend=backend,
                          sampler="boundary-sde", kappa=kappa)
    seed, index = stream_label(rng)
    times = np.concatenate([[0.0], path.times])
    values = np.vstack([[x, x], path.values])
    return BoundaryPair(PathRealization(times, values, 1.0, dict(path.meta, seed=seed, index=index), grid),
                        float(x), float(T))


def _oracle_times(grid, T):
    t = np.asarray(grid.times if isinstance(grid, TimeGrid) else grid, dtype=float)
    if t[0] > 0:
        t = np.r_[0.0, t]
    if t[-1] < T:
        t = np.r_[t, T]
    return t


def sample_boundary_oracle(x: float, epsilon: float | None, T: float, grid, rng,
                           max_attempts: int = 10 ** 7, backend=None) -> BoundaryPair:
    """Two independent BMs from x -/+ eps, accepted only if they never meet at grid times."""
    eps = 1e-3 * math.sqrt(T) if epsilon is None else float(epsilon)
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    gen = as_generator(rng)
    times = _oracle_times(grid, T)
    vals, attempts, status = kernels.get_backend(backend).reject_pair(
        times, x - eps, x + eps, max_attempts, gen)
    seed, index = stream_label(rng)
    if status != kernels.OK:
        raise AttemptsExhausted(f"no pair from x -/+ {eps} avoided meeting in {max_attempts} attempts",
                                attempts=attempts, seed=seed, index=index)
    meta = {"sampler": "boundary-oracle", "attempts": attempts, "epsilon": eps,
            "seed": seed, "index": index}
    return BoundaryPair(PathRealization(times, vals, 1.0, meta), float(x), float(T))


# --------------------------------------------------------------------------
# flows with a contracting drift

def stationary_point_estimate(drift: DriftSpec, lookback: float = 10.0, span: float = 5.0,
                              n_particles: int = 200, dt: float = 1e-2, rng=0,
                              backend=None) -> tuple[float, dict]:
    """Run the flow from ``n_particles`` points on [-span, span] at time -lookback up to 0.

    Returns the single surviving position, which approximates the stationary
    point at time 0, plus diagnostics; raises :class:`NotCoalesced` otherwise.
    """
    if n_particles < 2:
        raise ValueError("need at least two particles")
    pts = np.linspace(-span, span, n_particles)
    sys = simulate_coalescing(pts, lookback, dt, rng, drift, record=False, backend=backend)
    diag = {"survivors": sys.survivors, "steps": sys.meta["steps"]}
    if sys.survivors != 1:
        seed, index = stream_label(rng)
        raise NotCoalesced(f"{sys.survivors} particles survived; increase lookback or span",
                           survivors=sys.survivors, seed=seed, index=index)
    return float(sys.live_positions[0]), diag


def run_stationary(drift: DriftSpec, runs: int, seed: int = 0, lookback: float = 10.0,
                   span: float = 5.0, n_particles: int = 200, dt: float = 1e-2,
                   threads: int = 1, backend=None) -> dict:
    """Repeat :func:`stationary_point_estimate`; run i uses stream (seed, i).

    Runs that did not fully coalesce are counted, not averaged in.
    """
    est = np.full(runs, np.nan)
    survivors = np.zeros(runs, dtype=np.int64)
    pts = np.linspace(-span, span, n_particles)

    def work(lo, hi):
        for i in range(lo, hi):
            sys = simulate_coalescing(pts, lookback, dt, RngStream(seed, i), drift, record=False,
                                      backend=backend)
            survivors[i] = sys.survivors
            if sys.survivors == 1:
                est[i] = sys.live_positions[0]

    _parallel(work, runs, threads)
    ok = survivors == 1
    return {"estimates": est[ok], "coalesced_rate": float(ok.mean()), "survivors": survivors,
            "all": est}


def _infinite_start_check(drift, y1, y2):
    if not drift.table.theta_scalar(y1, y2) > 0.0:
        raise ValueError("stationary probability of the starting gap underflows; "
                         "x lies too far in the tail of the stationary law")


def infinite_cluster_grid(horizon: float, dt_max: float = 1e-3, eps_start: float = 1e-4,
                          refine_levels: int = 10) -> TimeGrid:
    n = max(2, int(math.ceil((horizon - eps_start) / dt_max - 1e-9)))
    return make_grid(horizon, n, eps_start, 0.0, refine_levels)


def sample_infinite_cluster_sde(drift: DriftSpec, x: float, horizon: float, grid: TimeGrid | None,
                                rng, max_retries: int = 32, backend=None,
                                kappa: float = KAPPA) -> BoundaryPair:
    """Boundaries of the cluster of the stationary point, conditioned on it lying near ``x``.

    Drift components -a(y_i) + d_i log theta(y1, y2). The gap at eps0 is drawn
    from the small-time law of the driftless wedge with an infinitely distant
    horizon, gap / sqrt 2 = sqrt(eps0) chi_3; the centre is x + N(0, eps0 / 2).
    """
    grid = infinite_cluster_grid(horizon) if grid is None else grid
    eps0 = grid.eps_start
    if not eps0 > 0:
        raise ValueError("the boundary SDE needs a grid starting at a positive time")
    gen = as_generator(rng)
    chi = math.sqrt(sum(gen.standard_normal() ** 2 for _ in range(3)))
    y1, y2 = _pair_start(gen, float(x), eps0, math.sqrt(eps0) * chi)
    _infinite_start_check(drift, y1, y2)
    path = euler_maruyama(ThetaDrift(drift), Wedge2(), (y1, y2), grid, gen,
                          max_retries=max_retries, backend=backend,
                          sampler="infinite-cluster-sde", kappa=kappa)
    seed, index = stream_label(rng)
    times = np.concatenate([[0.0], path.times])
    values = np.vstack([[x, x], path.values])
    return BoundaryPair(PathRealization(times, values, 1.0, dict(path.meta, seed=seed, index=index), grid),
                        float(x), float(horizon))


def oracle_horizon(drift: DriftSpec) -> float:
    return max(1.0, 8.0 / drift.lam)


def sample_infinite_cluster_oracle(drift: DriftSpec, x: float, epsilon: float, times, rng,
                                   max_attempts: int = 10 ** 7, backend=None) -> BoundaryPair:
    """Dual pair dX = -a(X) dt + dW from x -/+ eps, kept if it never meets on the grid
    and ends with the root of ``a`` between its two members."""
    times = np.asarray(times, dtype=float)
    gen = as_generator(rng)
    vals, attempts, status = kernels.get_backend(backend).reject_pair(
        times, x - epsilon, x + epsilon, max_attempts, gen, drift.program.negated(),
        drift.table.mode)
    seed, index = stream_label(rng)
    if status != kernels.OK:
        raise AttemptsExhausted(f"no dual pair from x -/+ {epsilon} stayed apart in {max_attempts} attempts",
                                attempts=attempts, seed=seed, index=index)
    meta = {"sampler": "infinite-cluster-oracle", "attempts": attempts, "epsilon": epsilon,
            "seed": seed, "index": index}
    return BoundaryPair(PathRealization(times, vals, 1.0, meta), float(x), float(times[-1]))


def oracle_times(horizon: float, fine_until: float = 1.0, fine_dt: float = 1e-4,
                 coarse_dt: float = 1e-2) -> np.ndarray:
    """Fine steps up to ``fine_until``, coarse steps after; meetings late are rare."""
    fine_until = min(fine_until, horizon)
    nf = int(round(fine_until / fine_dt))
    fine = np.linspace(0.0, fine_until, nf + 1)
    if horizon <= fine_until:
        return fine
    nc = max(1, int(math.ceil((horizon - fine_until) / coarse_dt - 1e-9)))
    return np.concatenate([fine, np.linspace(fine_until, horizon, nc + 1)[1:]])


# --------------------------------------------------------------------------
# ensembles of boundary pairs

BOUNDARY_MODES = ("sde", "oracle", "infinite-sde", "infinite-oracle")


@dataclass
class BoundaryEnsemble:
    mode: str
    x: float
    T: float
    observe: np.ndarray
    alpha: np.ndarray     # (n, len(observe))
    beta: np.ndarray
    attempts: int = 0
    retries: int = 0
    min_gap: np.ndarray | None = None
    paths: list | None = None
    seed: int | None = None

    @property
    def n(self):
        return len(self.alpha)

    @property
    def gap(self):
        return self.beta - self.alpha

    @property
    def center(self):
        return 0.5 * (self.alpha + self.beta)

    @property
    def acceptance_rate(self):
        return self.n / self.attempts if self.mode.endswith("oracle") and self.attempts else None


def run_boundary_ensemble(mode: str, n: int, x: float = 0.0, T: float = 1.0, seed: int = 0,
                          grid=None, observe=None, epsilon: float | None = None,
                          drift: DriftSpec | None = None, max_attempts: int = 10 ** 7,
                          threads: int = 1, keep_paths: bool = False,
                          backend=None) -> BoundaryEnsemble:
    """Sample ``n`` boundary pairs; pair i uses stream (seed, i).

    ``T`` is the horizon for ``sde``/``oracle`` and the observation horizon for
    the infinite-cluster modes.
    """
    if mode not in BOUNDARY_MODES:
        raise ValueError(f"unknown boundary mode {mode!r}; choose from {BOUNDARY_MODES}")
    if mode.startswith("infinite") and drift is None:
        raise ValueError("infinite-cluster modes need a drift")
    observe = np.asarray([T] if observe is None else observe, dtype=float)
    if mode == "sde":
        grid = meander_grid(T) if grid is None else grid
    elif mode == "oracle":
        grid = TimeGrid.uniform(0.0, T, int(round(T / 1e-4))) if grid is None else grid
        epsilon = 1e-3 * math.sqrt(T) if epsilon is None else epsilon
    elif mode == "infinite-sde":
        grid = infinite_cluster_grid(T) if grid is None else grid
    else:
        epsilon = 1e-3 if epsilon is None else epsilon
        H = max(oracle_horizon(drift), T)
        grid = oracle_times(H, fine_until=T) if grid is None else grid
    alpha = np.empty((n, len(observe)))
    beta = np.empty((n, len(observe)))
    min_gap = np.empty(n)
    counts = np.zeros((n, 2), dtype=np.int64)
    kept = [None] * n if keep_paths else None

    def one(i):
        rs = RngStream(seed, i)
        if mode == "sde":
            return sample_boundary_sde(x, T, grid, rs, backend=backend)
        if mode == "oracle":
            return sample_boundary_oracle(x, epsilon, T, grid, rs, max_attempts, backend=backend)
        if mode == "infinite-sde":
            return sample_infinite_cluster_sde(drift, x, T, grid, rs, backend=backend)
        return sample_infinite_cluster_oracle(drift, x, epsilon, grid, rs, max_attempts, backend=backend)

    def work(lo, hi):
        for i in range(lo, hi):
            bp = one(i)
            t = bp.times
            alpha[i] = np.interp(observe, t, bp.alpha)
            beta[i] = np.interp(observe, t, bp.beta)
            min_gap[i] = float(np.min(bp.gap[1:]))
            counts[i] = (bp.path.meta.get("attempts", 1), bp.path.meta.get("retries", 0))
            if keep_paths:
                kept[i] = bp

    _parallel(work, n, threads)
    return BoundaryEnsemble(mode, float(x), float(T), observe, alpha, beta,
                            int(counts[:, 0].sum()), int(counts[:, 1].sum()), min_gap, kept, seed)
