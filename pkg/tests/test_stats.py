import math

import numpy as np
import pytest
from scipy import stats as st

from condbm.stats import (bootstrap_ci, effective_size, ks_critical, ks_one_sample, ks_two_sample,
                          summarize)


def test_one_sample_matches_scipy():
    x = np.random.default_rng(1).normal(size=500)
    d, p = ks_one_sample(x, st.norm.cdf)
    ref = st.kstest(x, "norm", method="asymp")
    assert d == pytest.approx(ref.statistic, abs=1e-14)
    assert p == pytest.approx(ref.pvalue, rel=1e-6)


def test_two_sample_matches_scipy():
    g = np.random.default_rng(2)
    a, b = g.normal(size=300), g.normal(0.1, 1.0, size=450)
    d, p = ks_two_sample(a, b)
    ref = st.ks_2samp(a, b, method="asymp")
    assert d == pytest.approx(ref.statistic, abs=1e-14)
    # plain asymptotic law at n1 n2 / (n1 + n2); scipy adds a finite-size correction
    from scipy.special import kolmogorov
    assert p == pytest.approx(kolmogorov(math.sqrt(300 * 450 / 750) * d), rel=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=0.1)


def test_two_sample_with_ties():
    a = np.array([0.0, 0.0, 1.0, 1.0])
    b = np.array([0.0, 1.0, 1.0, 1.0])
    assert ks_two_sample(a, b)[0] == pytest.approx(0.25)


def test_unit_weights_equal_unweighted():
    x = np.random.default_rng(3).exponential(size=200)
    assert ks_one_sample(x, st.expon.cdf, np.ones(200)) == pytest.approx(ks_one_sample(x, st.expon.cdf))


def test_integer_weights_equal_repetition():
    x = np.array([0.1, 0.5, 0.9])
    w = np.array([1.0, 3.0, 2.0])
    rep = np.repeat(x, w.astype(int))
    assert ks_one_sample(x, lambda z: z, w)[0] == pytest.approx(ks_one_sample(rep, lambda z: z)[0])


def test_zero_weights_are_dropped_and_negative_rejected():
    x = np.array([0.1, 0.5, 0.9, 5.0])
    w = np.array([1.0, 1.0, 1.0, 0.0])
    assert ks_one_sample(x, lambda z: np.clip(z, 0, 1), w)[0] == pytest.approx(
        ks_one_sample(x[:3], lambda z: z)[0])
    with pytest.raises(ValueError):
        ks_one_sample(x, lambda z: z, -w)
    with pytest.raises(ValueError):
        ks_one_sample(x, lambda z: z, np.zeros(4))


def test_effective_size_and_summary():
    assert effective_size(np.ones(10)) == pytest.approx(10.0)
    assert effective_size([1.0, 0.0, 0.0]) == pytest.approx(1.0)
    s = summarize([1.0, 2.0, 3.0])
    assert s.mean == 2.0 and s.se == pytest.approx(1 / math.sqrt(3))
    sw = summarize([1.0, 3.0], [1.0, 3.0])
    assert sw.mean == pytest.approx(2.5) and sw.n_eff == pytest.approx(1.6)


def test_critical_value():
    assert ks_critical(10_000, 1e-3) == pytest.approx(1.94947 / 100, rel=1e-4)


def test_bootstrap_deterministic_and_covers_mean():
    x = np.random.default_rng(4).normal(3.0, 1.0, 400)
    lo, hi = bootstrap_ci(x, rng=7)
    assert (lo, hi) == bootstrap_ci(x, rng=7)
    assert lo < x.mean() < hi and hi - lo == pytest.approx(2 * 1.96 / 20, rel=0.2)
    with pytest.raises(ValueError):
        bootstrap_ci(x, n_resamples=10)


@pytest.mark.parametrize("bad", [[], [1.0, math.nan]])
def test_bad_samples(bad):
    with pytest.raises(ValueError):
        summarize(bad)
