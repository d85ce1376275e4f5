"""Invariants over randomly generated inputs."""

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from condbm import analytic as an
from condbm.flows import simulate_coalescing
from condbm.rng import RngStream
from condbm.stats import ks_one_sample, ks_two_sample

times = st.floats(1e-3, 10.0)
pos = st.floats(1e-6, 10.0)


@given(times, pos, pos)
def test_halfline_bounds_and_monotone(t, y, dy):
    g = an.exit_prob(an.HalfLine(), t, y)
    assert 0.0 < g <= 1.0
    assert an.exit_prob(an.HalfLine(), t, y + dy) >= g - 1e-10
    assert an.exit_prob(an.HalfLine(), t * 1.5, y) <= g + 1e-10


@given(st.floats(1e-8, 10.0), st.floats(1e-8, 10.0))
def test_drift_bound(t, y):
    g = an.grad_log_exit_prob(an.HalfLine(), t, y)[0]
    assert 0.0 < g <= 1.0 / y


@given(times, st.floats(1e-4, 1 - 1e-4), st.floats(1e-4, 1 - 1e-4))
def test_interval_bounds_symmetry_and_monotone(t, x, x2):
    iv = an.Interval(0.0, 1.0)
    g = an.exit_prob(iv, t, x)
    assert 0.0 < g <= 1.0
    assert g == pytest.approx(an.exit_prob(iv, t, 1.0 - x), abs=1e-12)
    # nondecreasing in distance to the nearer end
    near, far = sorted((x, x2), key=lambda v: min(v, 1 - v))
    assert an.exit_prob(iv, t, far) >= an.exit_prob(iv, t, near) - 1e-10
    assert an.exit_prob(iv, t, x) <= an.exit_prob(an.HalfLine(), t, x) + 1e-12


@given(times, st.floats(-5, 5), st.floats(1e-6, 5))
def test_wedge_reduction(t, y1, gap):
    y2 = y1 + gap
    assume(y2 > y1)
    g = an.grad_log_exit_prob(an.Wedge2(), t, (y1, y2))
    assert g[0] == -g[1]
    g0 = an.grad_log_exit_prob(an.Wedge2(), t, (0.0, y2 - y1))
    assert g[1] == pytest.approx(g0[1], rel=1e-12)


@given(times, pos, pos)
def test_box_product(t, a, b):
    box = an.Box((an.HalfLine(), an.HalfLine()))
    assert an.exit_prob(box, t, (a, b)) == pytest.approx(
        an.exit_prob(an.HalfLine(), t, a) * an.exit_prob(an.HalfLine(), t, b), rel=1e-15, abs=1e-300)


@given(st.floats(-3, 3), st.floats(1e-3, 4))
def test_theta_in_unit_interval(y1, gap):
    d = an.DriftSpec.linear(1.0)
    th = an.theta(d, y1, y1 + gap)
    assert 0.0 < th < 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(2, 30))
def test_flow_invariants(seed, n):
    pts = np.sort(np.random.default_rng(seed).uniform(-2, 2, n))
    assume(np.all(np.diff(pts) > 0))
    s = simulate_coalescing(pts, 0.3, 1e-2, RngStream(seed))
    s.check_invariants()
    assert np.all(np.isin(s.owner, s.live_labels))


@settings(max_examples=30)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=50))
def test_ks_invariant_under_monotone_transform(xs):
    x = np.array(xs)
    def cdf(z):
        return 1.0 / (1.0 + np.exp(-np.asarray(z) / 100.0))
    d1, _ = ks_one_sample(x, cdf)
    d2, _ = ks_one_sample(np.exp(x / 1000.0), lambda z: cdf(1000.0 * np.log(z)))
    assert d1 == pytest.approx(d2, abs=1e-12)


@settings(max_examples=30)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=40), st.floats(-10, 10))
def test_zero_weight_points_do_not_matter(xs, extra):
    x = np.array(xs)
    w = np.linspace(1.0, 2.0, len(x))
    base = ks_one_sample(x, lambda z: 0.5 * (1 + np.tanh(z)), w)
    more = ks_one_sample(np.r_[x, extra], lambda z: 0.5 * (1 + np.tanh(z)), np.r_[w, 0.0])
    assert base == more


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30))
def test_two_sample_self_is_zero(xs):
    assert ks_two_sample(xs, xs)[0] == 0.0


def test_constant_sample_distance():
    d, _ = ks_one_sample(np.full(10, 0.3), lambda z: z)
    assert d == pytest.approx(max(0.3, 0.7))
