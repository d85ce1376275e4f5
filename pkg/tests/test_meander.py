import math

import numpy as np
import pytest
from scipy import integrate

from condbm import analytic as an
from condbm.errors import AttemptsExhausted
from condbm.meander import (meander_mean, run_ensemble, sample_meander_rejection,
                            sample_meander_sde)
from condbm.rng import RngStream
from condbm.sde import TimeGrid, make_grid, meander_grid
from condbm.stats import ks_one_sample, ks_two_sample, summarize

from conftest import rayleigh_cdf


class TestMeanderMean:
    def test_endpoint_value(self):
        assert meander_mean(2.0, 2.0) == pytest.approx(math.sqrt(math.pi))

    def test_small_t_vanishes(self):
        assert meander_mean(1.0, 1e-9) < 1e-3
        assert meander_mean(1.0, 0.0) == 0.0

    def test_continuous_at_T(self):
        assert meander_mean(1.0, 1 - 1e-10) == pytest.approx(meander_mean(1.0, 1.0), abs=1e-4)

    def test_against_marginal_density(self):
        # E[Y(t)] from the entrance (marginal) density, an independent route
        t = 0.3
        m, _ = integrate.quad(lambda z: z * an.meander_entrance_density(1.0, t, z), 0, np.inf)
        assert meander_mean(1.0, t) == pytest.approx(m, abs=1e-9)

    def test_domain(self):
        with pytest.raises(ValueError):
            meander_mean(1.0, 1.5)


def test_sde_path_is_positive_and_starts_at_zero():
    p = sample_meander_sde(1.0, meander_grid(1.0, 1e-2), RngStream(1, 2))
    assert p.times[0] == 0.0 and p.values[0, 0] == 0.0
    assert np.all(p.values[1:, 0] > 0) and p.times[-1] == 1.0
    assert p.meta["seed"] == 1 and p.meta["index"] == 2


def test_sde_needs_offset_grid():
    with pytest.raises(ValueError):
        sample_meander_sde(1.0, TimeGrid.uniform(0.0, 1.0, 10), 0)


def test_bessel_second_moment():
    # E[Z(T)^2] = 3T unweighted
    ens = run_ensemble("bessel", 20000, 2.0, seed=3, grid=np.array([0.0, 2.0]), observe=[2.0])
    s = summarize(ens.endpoint ** 2)
    assert abs(s.mean - 6.0) < 3 * s.se


def test_bessel_weighted_endpoint_is_rayleigh():
    ens = run_ensemble("bessel", 20000, 1.0, seed=4, grid=np.array([0.0, 1.0]), observe=[1.0])
    w = summarize(ens.weights)
    assert abs(w.mean - 1.0) < 3 * w.se
    assert ks_one_sample(ens.endpoint, rayleigh_cdf(), ens.weights)[1] > 1e-3


def test_rejection_acceptance_matches_exit_prob():
    y0 = 0.25
    ens = run_ensemble("rejection", 2000, 1.0, seed=5, grid=TimeGrid.uniform(0.0, 1.0, 1000), y0=y0)
    g = an.exit_prob(an.HalfLine(), 1.0, y0)
    rate = ens.acceptance_rate
    se = math.sqrt(g * (1 - g) / ens.attempts)
    # discrete monitoring only ever accepts more paths than continuous monitoring
    assert g - 3 * se < rate < g + 3 * se + 0.5826 * math.sqrt(1e-3) * 2 * math.sqrt(2 / math.pi)


def test_rejection_exhausts():
    with pytest.raises(AttemptsExhausted) as exc:
        sample_meander_rejection(1.0, 1e-6, TimeGrid.uniform(0, 1, 100), RngStream(0, 4), max_attempts=5)
    assert exc.value.diagnostics["attempts"] == 5


def test_rejection_with_large_start_is_not_rayleigh():
    # negative control: started at sqrt(T) the conditioned endpoint is far from Rayleigh
    ens = run_ensemble("rejection", 3000, 1.0, seed=6, grid=TimeGrid.uniform(0, 1, 200), y0=1.0)
    assert ks_one_sample(ens.endpoint, rayleigh_cdf())[1] < 1e-6


def test_ensemble_reproducible_and_thread_independent():
    a = run_ensemble("sde", 40, 1.0, seed=8, grid=meander_grid(1.0, 1e-2))
    b = run_ensemble("sde", 40, 1.0, seed=8, grid=meander_grid(1.0, 1e-2), threads=4)
    assert np.array_equal(a.values, b.values)
    c = run_ensemble("sde", 20, 1.0, seed=8, grid=meander_grid(1.0, 1e-2), start_index=20)
    assert np.array_equal(a.values[20:], c.values)


def test_ensemble_argument_checks():
    with pytest.raises(ValueError):
        run_ensemble("exact", 10)
    with pytest.raises(ValueError):
        run_ensemble("sde", 0)


@pytest.mark.slow
def test_sde_endpoint_scaling_in_T():
    grid2 = meander_grid(2.0, 2e-3)
    a = run_ensemble("sde", 10000, 2.0, seed=9, grid=grid2, observe=[2.0])
    b = run_ensemble("sde", 10000, 1.0, seed=10, observe=[1.0])
    assert ks_two_sample(a.endpoint / math.sqrt(2.0), b.endpoint)[1] > 1e-3
    s = summarize(a.endpoint)
    assert abs(s.mean - math.sqrt(math.pi)) < 3 * s.se + 0.01


@pytest.mark.slow
def test_functionals_agree_between_sde_and_bessel():
    grid = make_grid(1.0, 200, 1e-4, 1e-6, 10)
    sde = run_ensemble("sde", 10000, 1.0, seed=11, grid=grid)
    bes = run_ensemble("bessel", 10000, 1.0, seed=12, grid=TimeGrid.uniform(0.0, 1.0, 200))
    for key in ("min_late", "time_avg"):
        p = ks_two_sample(sde.functionals[key], bes.functionals[key], None, bes.weights)[1]
        assert p > 1e-3, key


def test_wrong_reweighting_is_detected(monkeypatch):
    # mutation check: without the Imhof density the weighted endpoint is chi_3, not Rayleigh
    import condbm.meander as m
    monkeypatch.setattr(m, "imhof_weight", lambda T, z: 1.0)
    ens = run_ensemble("bessel", 20000, 1.0, seed=4, grid=np.array([0.0, 1.0]), observe=[1.0])
    assert ks_one_sample(ens.endpoint, rayleigh_cdf(), ens.weights)[1] < 1e-6
