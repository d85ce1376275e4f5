"""Kolmogorov-Smirnov tests (optionally weighted), moment summaries and bootstrap intervals.

Weighted samples enter through the normalised-weight empirical CDF; p-values
use the asymptotic Kolmogorov law at the effective sample size
``N_eff = (sum w)**2 / sum w**2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .rng import as_generator


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    se: float
    min: float
    max: float
    n_eff: float
    std: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("n", "mean", "se", "std", "min", "max", "n_eff")}


def _prepare(sample, weights):
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    if np.any(~np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    if weights is None:
        return x, None
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != x.shape:
        raise ValueError("weights and sample differ in length")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    keep = w > 0
    if not keep.any():
        raise ValueError("all weights are zero")
    return x[keep], w[keep]


def effective_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(w.sum() ** 2 / np.dot(w, w))


def summarize(sample, weights=None) -> SampleSummary:
    """Mean with standard error. For weights, the self-normalised estimator and its delta-method SE."""
    x, w = _prepare(sample, weights)
    n = x.size
    if w is None:
        mean = float(x.mean())
        std = float(x.std(ddof=1)) if n > 1 else 0.0
        return SampleSummary(n, mean, std / math.sqrt(n), float(x.min()), float(x.max()), float(n), std)
    wn = w / w.sum()
    mean = float(np.dot(wn, x))
    var = float(np.dot(wn, (x - mean) ** 2))
    se = math.sqrt(float(np.dot(wn * wn, (x - mean) ** 2)))
    return SampleSummary(n, mean, se, float(x.min()), float(x.max()), effective_size(w), math.sqrt(var))


def _ecdf(x, w):
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    if w is None:
        cum = np.arange(1, xs.size + 1) / xs.size
    else:
        ws = w[order]
        cum = np.cumsum(ws) / ws.sum()
    # collapse ties to the last cumulative value
    last = np.r_[xs[1:] != xs[:-1], True]
    return xs[last], cum[last]


def kolmogorov_pvalue(d: float, n_eff: float) -> float:
    return float(special.kolmogorov(math.sqrt(n_eff) * d))


def ks_critical(n_eff: float, level: float = 1e-3) -> float:
    """Asymptotic critical distance: P(D > crit) = level at effective size n_eff."""
    return float(special.kolmogi(level) / math.sqrt(n_eff))


def ks_one_sample(sample, cdf: Callable, weights=None) -> tuple[float, float]:
    """sup |F_hat - F| and its asymptotic p-value."""
    x, w = _prepare(sample, weights)
    xs, cum = _ecdf(x, w)
    F = np.clip(np.asarray(cdf(xs), dtype=float), 0.0, 1.0)
    before = np.r_[0.0, cum[:-1]]
    d = float(max(np.max(cum - F), np.max(F - before)))
    n_eff = float(x.size) if w is None else effective_size(w)
    return d, kolmogorov_pvalue(d, n_eff)


def ks_two_sample(a, b, weights_a=None, weights_b=None) -> tuple[float, float]:
    """Two-sample KS; effective sizes combine as n1 n2 / (n1 + n2)."""
    xa, wa = _prepare(a, weights_a)
    xb, wb = _prepare(b, weights_b)
    sa, ca = _ecdf(xa, wa)
    sb, cb = _ecdf(xb, wb)
    grid = np.union1d(sa, sb)
    Fa = np.r_[0.0, ca][np.searchsorted(sa, grid, side="right")]
    Fb = np.r_[0.0, cb][np.searchsorted(sb, grid, side="right")]
    d = float(np.max(np.abs(Fa - Fb)))
    na = float(xa.size) if wa is None else effective_size(wa)
    nb = float(xb.size) if wb is None else effective_size(wb)
    return d, kolmogorov_pvalue(d, na * nb / (na + nb))


def bootstrap_ci(sample, functional: Callable = np.mean, n_resamples: int = 1000,
                 level: float = 0.95, rng=0) -> tuple[float, float]:
    """Percentile bootstrap interval, deterministic given ``rng``."""
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    if n_resamples < 100:
        raise ValueError("n_resamples must be at least 100")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    gen = as_generator(rng)
    stats = np.empty(n_resamples)
    for i in range(n_resamples):
        stats[i] = functional(x[gen.integers(0, x.size, x.size)])
    alpha = 0.5 * (1.0 - level)
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha])
    return float(lo), float(hi)
