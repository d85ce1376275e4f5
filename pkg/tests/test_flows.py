import math

import numpy as np
import pytest

from condbm import analytic as an
from condbm.errors import NotCoalesced
from condbm.flows import (cluster_partition, parse_points, run_boundary_ensemble, run_stationary,
                          sample_boundary_oracle, sample_boundary_sde, sample_infinite_cluster_sde,
                          simulate_coalescing, stationary_point_estimate)
from condbm.rng import RngStream
from condbm.sde import TimeGrid, meander_grid
from condbm.stats import ks_one_sample, ks_two_sample, summarize

from conftest import rayleigh_cdf


def test_parse_points():
    assert np.allclose(parse_points("-1:1:0.5"), [-1, -0.5, 0, 0.5, 1])
    assert len(parse_points("-5:5:0.01")) == 1001
    assert np.allclose(parse_points("0, 2,3"), [0, 2, 3])
    with pytest.raises(ValueError):
        parse_points("1:0:0.1")


def test_invariants_hold_and_partition_is_contiguous():
    pts = parse_points("-2:2:0.05")
    sys_ = simulate_coalescing(pts, 1.0, 1e-3, RngStream(1))
    sys_.check_invariants()
    snap = cluster_partition(sys_)
    assert snap.sizes.sum() == len(pts)
    assert snap.blocks[0][0] == 0 and snap.blocks[-1][1] == len(pts) - 1
    assert all(b[0] == a[1] + 1 for a, b in zip(snap.blocks, snap.blocks[1:]))
    assert len(snap.vertices) == sys_.survivors
    assert np.all(np.diff(snap.vertices) > 0)
    assert snap.count_in(sys_.initial, -2, 2) == sys_.survivors


def test_single_particle_is_brownian():
    sys_ = simulate_coalescing([0.0], 1.0, 1e-3, RngStream(2))
    inc = np.diff(sys_.positions[:, 0]) / math.sqrt(1e-3)
    assert ks_one_sample(inc, lambda z: 0.5 * (1 + np.vectorize(math.erf)(z / math.sqrt(2))))[1] > 1e-3


def test_no_merge_and_full_merge_snapshots():
    far = simulate_coalescing([0.0, 100.0], 0.01, 1e-3, RngStream(3))
    assert cluster_partition(far).sizes.tolist() == [1, 1]
    near = simulate_coalescing([0.0, 1e-9], 1.0, 1e-3, RngStream(3))
    assert cluster_partition(near).blocks == ((0, 1),)


def test_close_pair_coalesces():
    # grid-time crossing detection misses meetings between steps; at dt = 1e-4 the
    # effective starting gap 1e-3 + 0.5826 sqrt(2 dt) still merges > 99%
    merged = sum(simulate_coalescing([0.0, 1e-3], 1.0, 1e-4, RngStream(4, i), record=False,
                                     stop_on_single=True).survivors == 1 for i in range(500))
    assert merged / 500 >= 0.99


def test_pre_meeting_increments_uncorrelated():
    xs, ys = [], []
    for i in range(300):
        s = simulate_coalescing([0.0, 1.0], 0.2, 1e-2, RngStream(5, i))
        alive = s.owners[1:, 1] == 1
        d = np.diff(s.positions, axis=0)[alive]
        xs.append(d[:, 0])
        ys.append(d[:, 1])
    x, y = np.concatenate(xs), np.concatenate(ys)
    assert abs(np.corrcoef(x, y)[0, 1]) < 3 / math.sqrt(len(x))


def test_composition_is_identical():
    pts = parse_points("-1:1:0.1")
    d = an.DriftSpec("-x - 0.3*tanh(x)", 1.0)
    one = simulate_coalescing(pts, 1.0, 1e-3, RngStream(6).generator(), d)
    gen = RngStream(6).generator()
    half = simulate_coalescing(pts, 0.5, 1e-3, gen, d)
    two = simulate_coalescing(None, 0.5, 1e-3, gen, start=half)
    assert np.array_equal(one.positions, two.positions)
    assert np.array_equal(one.owners, two.owners)
    assert np.array_equal(one.times, two.times)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        simulate_coalescing([1.0, 0.0], 1.0, 1e-2, 0)
    with pytest.raises(ValueError):
        simulate_coalescing([0.0, 1.0], 1.0, 2.0, 0)


def test_boundary_sde_pair():
    bp = sample_boundary_sde(0.5, 1.0, meander_grid(1.0, 1e-2), RngStream(7))
    assert bp.alpha[0] == bp.beta[0] == 0.5
    assert np.all(bp.gap[1:] > 0)


def test_boundary_oracle_pair():
    bp = sample_boundary_oracle(0.0, 0.05, 1.0, TimeGrid.uniform(0, 1, 1000), RngStream(8))
    assert np.all(bp.gap >= 0)


def test_boundary_gap_rayleigh_and_center_variance():
    ens = run_boundary_ensemble("sde", 4000, 0.0, 1.0, seed=9, grid=meander_grid(1.0, 2e-3),
                                observe=[0.5, 1.0])
    assert ks_one_sample(ens.gap[:, -1] / math.sqrt(2), rayleigh_cdf())[1] > 1e-3
    c = ens.center[:, 0]
    s = summarize((c - c.mean()) ** 2)
    assert abs(s.mean - 0.25) < 3 * s.se


def test_oracle_reflection_symmetry():
    ens = run_boundary_ensemble("oracle", 1000, 0.0, 1.0, seed=10, epsilon=0.05,
                                grid=TimeGrid.uniform(0, 1, 500))
    assert ks_two_sample(ens.center[:, -1], -ens.center[:, -1])[1] > 1e-3


def test_stationary_point_and_not_coalesced():
    d = an.DriftSpec.linear(1.0)
    eta, diag = stationary_point_estimate(d, 10.0, 5.0, 50, 1e-2, RngStream(11))
    assert diag["survivors"] == 1 and abs(eta) < 5
    with pytest.raises(NotCoalesced) as exc:
        stationary_point_estimate(d, 0.01, 5.0, 50, 1e-3, RngStream(11))
    assert exc.value.diagnostics["survivors"] > 1


def test_stationary_shift_equivariance():
    a = run_stationary(an.DriftSpec.linear(1.0), 400, seed=12, n_particles=50)
    b = run_stationary(an.DriftSpec.linear(1.0, center=1.0), 400, seed=13, n_particles=50, span=6.0)
    assert ks_two_sample(a["estimates"], b["estimates"] - 1.0)[1] > 1e-3


def test_infinite_cluster_gap_positive():
    d = an.DriftSpec.linear(1.0)
    bp = sample_infinite_cluster_sde(d, 0.0, 1.0, None, RngStream(14))
    assert np.all(bp.gap[1:] > 0)


@pytest.mark.slow
def test_infinite_cluster_boundaries_diverge():
    d = an.DriftSpec.linear(1.0)
    ens = run_boundary_ensemble("infinite-sde", 400, 0.0, 5.0, seed=15, drift=d)
    assert np.mean(ens.gap[:, -1] > 2.0) >= 0.95


@pytest.mark.slow
def test_boundary_gap_scaling_in_T():
    gaps = {}
    for T in (0.5, 1.0, 2.0):
        ens = run_boundary_ensemble("sde", 5000, 0.0, T, seed=16, grid=meander_grid(T, 2e-3 * T))
        gaps[T] = ens.gap[:, -1] / math.sqrt(T)
    assert ks_two_sample(gaps[0.5], gaps[1.0])[1] > 1e-3
    assert ks_two_sample(gaps[2.0], gaps[1.0])[1] > 1e-3
