import math

import numpy as np
import pytest
from scipy import integrate, stats

from condbm import analytic as an

# Frozen from independent evaluations (mpmath, 30 digits) of erf(1/sqrt 2),
# erf(1) and the sine series for the interval.
ERF_1_OVER_SQRT2 = 0.68268949213708589717
ERF_1 = 0.84270079294971486934


def test_halfline_known_value():
    assert an.exit_prob(an.HalfLine(), 1.0, 1.0) == pytest.approx(ERF_1_OVER_SQRT2, abs=1e-15)


def test_halfline_reflected_and_shifted():
    assert an.exit_prob(an.HalfLine(2.0, -1), 4.0, 0.0) == pytest.approx(ERF_1_OVER_SQRT2, abs=1e-15)


def test_wedge_equals_scaled_halfline():
    assert an.exit_prob(an.Wedge2(), 1.0, (0.0, math.sqrt(2.0))) == pytest.approx(ERF_1_OVER_SQRT2, abs=1e-14)
    assert an.exit_prob(an.Wedge2(), 0.25, (-0.5, 0.5)) == pytest.approx(ERF_1, abs=1e-15)


def test_halfspace_reduces_to_halfline():
    n = np.array([3.0, 4.0]) / 5.0
    hs = an.HalfSpace((1.0, 1.0), tuple(n))
    y = np.array([1.0, 1.0]) + 0.7 * n + 0.3 * np.array([-4.0, 3.0]) / 5.0
    assert an.exit_prob(hs, 2.0, y) == pytest.approx(an.exit_prob(an.HalfLine(), 2.0, 0.7), abs=1e-15)


def test_halfspace_rejects_unnormalised_normal():
    with pytest.raises(ValueError, match="unit"):
        an.HalfSpace((0.0, 0.0), (1.0, 1.0))


def _interval_mc_free(t, x, L, terms=400):
    k = np.arange(terms)
    m = 2 * k + 1
    return float(np.sum(4.0 / (math.pi * m) * np.sin(m * math.pi * x / L)
                        * np.exp(-m * m * math.pi ** 2 * t / (2 * L * L))))


@pytest.mark.parametrize("t", [1e-4, 1e-3, 0.01, 0.049, 0.051, 0.2, 1.0, 5.0])
@pytest.mark.parametrize("x", [1e-3, 0.1, 0.37, 0.5, 0.9])
def test_interval_against_independent_series(t, x):
    # the full series converges for every t > 0 with enough terms
    terms = 20000 if t < 0.01 else 400
    ref = _interval_mc_free(t, x, 1.0, terms)
    assert an.exit_prob(an.Interval(0.0, 1.0), t, x) == pytest.approx(ref, abs=1e-10)


def test_interval_branch_seam_is_continuous():
    L = 2.0
    tc = 0.05 * L * L
    lo = an.exit_prob(an.Interval(0.0, L), tc * (1 - 1e-12), 0.3)
    hi = an.exit_prob(an.Interval(0.0, L), tc * (1 + 1e-12), 0.3)
    assert abs(lo - hi) < 1e-11


def test_box_is_product_of_factors():
    box = an.Box((an.HalfLine(), an.Interval(-1.0, 1.0)))
    p = an.exit_prob(an.HalfLine(), 0.7, 0.4) * an.exit_prob(an.Interval(-1.0, 1.0), 0.7, 0.2)
    assert an.exit_prob(box, 0.7, (0.4, 0.2)) == pytest.approx(p, abs=1e-15)


def test_halfline_against_quadrature_grid():
    worst = 0.0
    for t in (0.01, 0.5, 3.0, 10.0):
        for y in (1e-3, 0.2, 1.0, 4.0, 8.0):
            ref, _ = integrate.quad(lambda z: math.exp(-0.5 * z * z), 0, y / math.sqrt(t), epsabs=1e-14)
            worst = max(worst, abs(an.exit_prob(an.HalfLine(), t, y) - math.sqrt(2 / math.pi) * ref))
    assert worst < 1e-12


def test_log_exit_prob_accurate_in_both_tails():
    # near 1: log1p of the complement; near 0: no underflow to -inf
    y = 40.0
    assert an.log_exit_prob(an.HalfLine(), 1.0, y) == pytest.approx(-math.erfc(y / math.sqrt(2)), rel=1e-12)
    small = an.log_exit_prob(an.HalfLine(), 1.0, 1e-200)
    assert math.isfinite(small) and small == pytest.approx(math.log(math.sqrt(2 / math.pi) * 1e-200), rel=1e-12)


@pytest.mark.parametrize("dom,t,y", [
    (an.HalfLine(), 0.3, [0.2]),
    (an.HalfLine(1.0, -1), 2.0, [-0.5]),
    (an.Interval(0.0, 1.0), 0.01, [0.3]),
    (an.Interval(0.0, 1.0), 0.5, [0.8]),
    (an.HalfSpace((0.0, 0.0), (0.6, 0.8)), 1.0, [0.5, 0.4]),
    (an.Box((an.HalfLine(), an.Interval(0.0, 2.0))), 0.4, [0.3, 1.7]),
    (an.Wedge2(), 0.5, [-0.2, 0.3]),
])
def test_gradient_matches_finite_differences(dom, t, y):
    y = np.asarray(y, dtype=float)
    g = an.grad_log_exit_prob(dom, t, y)
    h = 1e-6
    for j in range(len(y)):
        e = np.zeros_like(y)
        e[j] = h
        fd = (an.log_exit_prob(dom, t, y + e) - an.log_exit_prob(dom, t, y - e)) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_halfline_gradient_known_value():
    # exp(-4.5) / int_0^3 exp(-u^2/2) du, mpmath at 30 digits
    assert an.grad_log_exit_prob(an.HalfLine(), 1.0, 3.0)[0] == pytest.approx(0.0088876917791528411, rel=1e-13)


def test_wedge_non_meeting_value():
    # two BMs from 0 and 1 do not meet by time 1: erf(1/2)
    assert an.exit_prob(an.Wedge2(), 1.0, (0.0, 1.0)) == pytest.approx(0.52049987781304653768, abs=1e-15)


def test_gradient_asymptote_near_boundary():
    g = an.grad_log_exit_prob(an.HalfLine(), 1.0, 1e-12)[0]
    assert g == pytest.approx(1e12, rel=1e-9)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_rejects_bad_time(bad):
    with pytest.raises(ValueError):
        an.exit_prob(an.HalfLine(), bad, 1.0)


def test_rejects_points_outside_and_wrong_dimension():
    with pytest.raises(ValueError):
        an.exit_prob(an.HalfLine(), 1.0, -0.1)
    with pytest.raises(ValueError):
        an.grad_log_exit_prob(an.HalfLine(), 1.0, 0.0)
    with pytest.raises(ValueError):
        an.exit_prob(an.Wedge2(), 1.0, 1.0)


def test_boundary_point_is_not_interior():
    with pytest.raises(ValueError, match="interior"):
        an.exit_prob(an.HalfLine(), 1.0, 0.0)
    assert an.HalfLine().in_closure(0.0) and not an.HalfLine().contains(0.0)


def test_entrance_density_normalised_and_sampler_matches():
    T, s = 1.0, 1e-2
    assert an.entrance_normalizer(T, s) == pytest.approx(1.0, abs=1e-9)
    tab = an.entrance_table(T, s)
    z = np.array([0.02, 0.1, 0.2, 0.3])
    ref = [integrate.quad(lambda u: an.meander_entrance_density(T, s, u), 0, zi, epsabs=1e-13)[0] for zi in z]
    assert np.allclose(tab.cdf(z), ref, atol=1e-9)
    for u in (1e-6, 0.1, 0.5, 0.9, 1 - 1e-6):
        assert float(tab.cdf(tab.quantile(u))) == pytest.approx(u, abs=1e-7)


def test_entrance_table_is_cached():
    assert an.entrance_table(1.0, 1e-3) is an.entrance_table(1.0, 1e-3)


def test_small_time_entrance_is_maxwell():
    # for s << T the erf factor is linear in z, leaving a chi_3 law of scale sqrt(s)
    s = 1e-6
    z = np.array([0.5e-3, 1e-3, 2e-3])
    f = an.meander_entrance_density(1.0, s, z)
    assert np.allclose(f, stats.chi(3, scale=math.sqrt(s)).pdf(z), rtol=1e-5)


def test_imhof_weight_has_unit_mean_under_bessel():
    # E[sqrt(pi/2)/R] for R ~ chi_3 equals 1
    val, _ = integrate.quad(lambda r: an.imhof_weight(1.0, r) * stats.chi(3).pdf(r), 0, np.inf)
    assert val == pytest.approx(1.0, abs=1e-10)


class TestStationary:
    def test_linear_drift_gives_gaussian(self):
        d = an.DriftSpec.linear(1.0)
        x = np.linspace(-3, 3, 13)
        assert np.allclose(an.stationary_density(d, x), stats.norm(scale=math.sqrt(0.5)).pdf(x), atol=1e-9)
        assert np.allclose(an.stationary_cdf(d, x), stats.norm(scale=math.sqrt(0.5)).cdf(x), atol=1e-9)

    def test_theta_known_values(self):
        d = an.DriftSpec.linear(1.0)
        assert an.theta(d, -1.0, 1.0) == pytest.approx(ERF_1, abs=1e-9)
        assert an.theta(d, -math.inf, math.inf) == pytest.approx(1.0, abs=1e-12)
        assert an.theta(d, 0.3, 0.3 + 1e-9) == pytest.approx(1e-9 / math.sqrt(math.pi) * math.exp(-0.09), rel=1e-6)

    def test_theta_gradient(self):
        d = an.DriftSpec("-x - 0.3*tanh(x)", 1.0)
        y1, y2, h = -0.4, 0.7, 1e-6
        g = an.grad_log_theta(d, y1, y2)
        fd1 = (math.log(an.theta(d, y1 + h, y2)) - math.log(an.theta(d, y1 - h, y2))) / (2 * h)
        fd2 = (math.log(an.theta(d, y1, y2 + h)) - math.log(an.theta(d, y1, y2 - h))) / (2 * h)
        assert g == pytest.approx([fd1, fd2], rel=1e-6)

    def test_nonlinear_density_normalised(self):
        d = an.DriftSpec("-x - 0.3*tanh(x)", 1.0)
        val, _ = integrate.quad(lambda x: an.stationary_density(d, x), -np.inf, np.inf)
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_rejects_non_contracting_drift(self):
        with pytest.raises(ValueError, match="monotonicity"):
            an.DriftSpec("x", 1.0)
        with pytest.raises(ValueError):
            an.DriftSpec("-x", 0.0)


def test_interval_against_monte_carlo():
    # discrete monitoring at step dt behaves like continuous monitoring of an interval
    # widened by 0.5826 sqrt(dt) at each end
    n, dt, t = 20000, 1e-3, 0.1
    gen = np.random.default_rng(12)
    x = np.full(n, 0.5)
    alive = np.ones(n, dtype=bool)
    for _ in range(int(round(t / dt))):
        x += math.sqrt(dt) * gen.standard_normal(n)
        alive &= (x > 0.0) & (x < 1.0)
    p = alive.mean()
    shift = 0.5826 * math.sqrt(dt)
    ref = an.exit_prob(an.Interval(-shift, 1.0 + shift), t, 0.5)
    assert abs(p - ref) < 3 * math.sqrt(ref * (1 - ref) / n) + 2e-3
