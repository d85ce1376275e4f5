"""Exit probabilities of Brownian motion from simple open sets and derived quantities.

For an open set ``G`` the survival probability ``gamma_G(t, y) = P(B stays in G
up to time t | B(0) = y)`` is available in closed form for the domains below.
Its log-gradient ``grad_y log gamma_G(T - t, y)`` is the drift that turns
Brownian motion into Brownian motion conditioned to stay in ``G`` until ``T``.

Also here: the entrance law of the meander at a small positive time, the
Imhof density of the meander against the 3-d Bessel process, and stationary
densities of one-dimensional diffusions with contracting drift.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Union

import numpy as np
from scipy import integrate, optimize, special
from scipy.interpolate import PchipInterpolator

from .expr import Program, compile_expr, eval_array, eval_scalar

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
INV_SQRT2 = 1.0 / math.sqrt(2.0)
ASYMPTOTE_CUTOFF = 1e-8   # d / sqrt(t) below this: drift := 1 / d
PROB_FLOOR = 1e-300
DRIFT_FLOOR = 5e-324       # smallest positive subnormal
SERIES_TOL = 1e-14
IMAGE_CROSSOVER = 0.05    # interval: image sum for t < 0.05 L**2

_GL5_X, _GL5_W = np.polynomial.legendre.leggauss(5)
_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)
GL8_NODES = tuple(float(v) for v in _GL8_X)
GL8_WEIGHTS = tuple(float(v) for v in _GL8_W)


def gauss_integral(x):
    """``E(x) = int_0^x exp(-u**2/2) du``, odd and bounded by sqrt(pi/2)."""
    return SQRT_HALF_PI * special.erf(np.asarray(x, dtype=float) * INV_SQRT2) \
        if np.ndim(x) else SQRT_HALF_PI * math.erf(float(x) * INV_SQRT2)


def halfline_log_grad(s: float, d: float) -> float:
    """d/dd log gamma_{R+}(s, d) for s, d > 0.

    Scalar version shared with the Python kernels; the compiled kernels repeat
    the same operations in the same order.
    """
    rs = math.sqrt(s)
    u = d / rs
    if u < ASYMPTOTE_CUTOFF:
        return 1.0 / d
    e = SQRT_HALF_PI * math.erf(u * INV_SQRT2)
    g = math.exp(-0.5 * u * u) / (rs * e)
    # the true value is positive; past u ~ 38.6 it lies below every double but this one
    if g < DRIFT_FLOOR:
        g = DRIFT_FLOOR
    inv = 1.0 / d
    # exact bound g < 1/d; rounding can otherwise overshoot it by an ulp
    return g if g < inv else inv


def _log_from(gamma: float, q: float) -> float:
    # q = 1 - gamma computed without cancellation
    if q < 0.5:
        return math.log1p(-q)
    return math.log(min(max(gamma, PROB_FLOOR), 1.0))


def _check_time(t):
    t = float(t)
    if not (t > 0.0 and math.isfinite(t)):
        raise ValueError(f"time must be positive and finite, got {t}")
    return t


# --------------------------------------------------------------------------
# domains

class Domain:
    """Base class. Subclasses provide the closed forms for one domain family."""

    dim = 1

    def _point(self, y) -> np.ndarray:
        p = np.atleast_1d(np.asarray(y, dtype=float)).ravel()
        if p.shape != (self.dim,):
            raise ValueError(f"{type(self).__name__} expects a point of dimension {self.dim}, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("point must be finite")
        return p

    def contains(self, y) -> bool:
        return self.boundary_distance(y) > 0.0

    def signed_distance(self, y) -> float:
        """Distance to the boundary, negative outside the closure."""
        raise NotImplementedError

    def boundary_distance(self, y) -> float:
        return max(self.signed_distance(y), 0.0)

    def in_closure(self, y) -> bool:
        return self.signed_distance(y) >= 0.0

    def require_interior(self, y):
        p = self._point(y)
        if not self.boundary_distance(p) > 0.0:
            raise ValueError(f"point {p.tolist()} is not in the interior of {self!r}")
        return p

    # the three closed forms; t and y already validated
    def _survival(self, t: float, p: np.ndarray) -> tuple[float, float]:
        """Return (gamma, 1 - gamma)."""
        raise NotImplementedError

    def _grad(self, t: float, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class HalfLine(Domain):
    """``{y : direction * (y - origin) > 0}``."""

    origin: float = 0.0
    direction: int = 1

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")

    def signed_distance(self, y) -> float:
        p = self._point(y)
        return float(self.direction * (p[0] - self.origin))

    def _survival(self, t, p):
        u = self.direction * (p[0] - self.origin) / math.sqrt(2.0 * t)
        return math.erf(u), math.erfc(u)

    def _grad(self, t, p):
        d = self.direction * (p[0] - self.origin)
        return np.array([self.direction * halfline_log_grad(t, d)])


@dataclass(frozen=True)
class Interval(Domain):
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"interval needs a < b, got ({self.a}, {self.b})")

    @property
    def length(self) -> float:
        return self.b - self.a

    def signed_distance(self, y) -> float:
        p = self._point(y)[0]
        return float(min(p - self.a, self.b - p))

    def _reduced(self, p):
        # symmetric about the midpoint: work from the nearer end
        L = self.length
        x = p[0] - self.a
        if x > 0.5 * L:
            return L - x, -1.0
        return x, 1.0

    def _survival(self, t, p):
        x, _ = self._reduced(p)
        g, q, _ = _interval_series(t, x, self.length)
        return g, q

    def _grad(self, t, p):
        x, sign = self._reduced(p)
        if x / math.sqrt(t) < ASYMPTOTE_CUTOFF:
            return np.array([sign / x])
        g, _, dg = _interval_series(t, x, self.length)
        return np.array([sign * dg / max(g, PROB_FLOOR)])


def _phi_between(lo: float, hi: float) -> float:
    """P(lo < N < hi) for a standard normal, accurate in both tails."""
    if lo >= 0.0:
        return special.ndtr(-lo) - special.ndtr(-hi)
    return special.ndtr(hi) - special.ndtr(lo)


def _npdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _interval_series(t: float, x: float, L: float) -> tuple[float, float, float]:
    """(gamma, 1 - gamma, d gamma / dx) for the interval (0, L), 0 < x <= L/2."""
    if t >= IMAGE_CROSSOVER * L * L:
        # sine series, truncated once the term bound drops below SERIES_TOL
        rate = math.pi * math.pi * t / (2.0 * L * L)
        nmax = int(math.sqrt(math.log(4.0 / (math.pi * SERIES_TOL)) / rate)) + 3
        n = np.arange(1, nmax + 1, 2, dtype=float)
        damp = np.exp(-n * n * rate)
        arg = n * math.pi * x / L
        g = float(np.sum(4.0 / (n * math.pi) * np.sin(arg) * damp))
        dg = float(np.sum(4.0 / L * np.cos(arg) * damp))
        return g, 1.0 - g, dg
    # method of images; k = 0 term written so that neither gamma nor 1-gamma cancels
    rt = math.sqrt(t)
    u = x / rt
    a0, c0 = (L - x) / rt, (L + x) / rt
    g = math.erf(u * INV_SQRT2) - (special.ndtr(-a0) - special.ndtr(-c0))
    q = math.erfc(u * INV_SQRT2) + special.ndtr(-a0) - special.ndtr(-c0)
    dg = (2.0 * _npdf(u) - _npdf(a0) - _npdf(c0)) / rt
    for k in (-2, -1, 1, 2):
        ak = (L - x - 2 * k * L) / rt
        bk = (-x - 2 * k * L) / rt
        ck = (L + x - 2 * k * L) / rt
        dk = (x - 2 * k * L) / rt
        term = _phi_between(bk, ak) - _phi_between(dk, ck)
        g += term
        q -= term
        dg += (-_npdf(ak) + _npdf(bk) - _npdf(ck) + _npdf(dk)) / rt
    return g, q, dg


@dataclass(frozen=True)
class HalfSpace(Domain):
    """``{y : (y - anchor) . normal > 0}`` in R^d."""

    anchor: tuple = (0.0, 0.0)
    normal: tuple = (1.0, 0.0)

    def __post_init__(self):
        anchor = tuple(float(v) for v in np.ravel(self.anchor))
        normal = tuple(float(v) for v in np.ravel(self.normal))
        if len(anchor) != len(normal) or not anchor:
            raise ValueError("anchor and normal must have the same positive dimension")
        if abs(math.sqrt(sum(v * v for v in normal)) - 1.0) > 1e-12:
            raise ValueError("half-space normal must have unit Euclidean norm (within 1e-12)")
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "normal", normal)

    @property
    def dim(self):
        return len(self.normal)

    def _height(self, p) -> float:
        return float(np.dot(p - np.asarray(self.anchor), np.asarray(self.normal)))

    def signed_distance(self, y) -> float:
        return self._height(self._point(y))

    def _survival(self, t, p):
        u = self._height(p) / math.sqrt(2.0 * t)
        return math.erf(u), math.erfc(u)

    def _grad(self, t, p):
        return halfline_log_grad(t, self._height(p)) * np.asarray(self.normal)


@dataclass(frozen=True)
class Box(Domain):
    """Product of one-dimensional domains (half-lines and intervals)."""

    factors: tuple = ()

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors or not all(isinstance(f, (HalfLine, Interval)) for f in factors):
            raise ValueError("Box needs one or more HalfLine/Interval factors")
        object.__setattr__(self, "factors", factors)

    @property
    def dim(self):
        return len(self.factors)

    def signed_distance(self, y) -> float:
        p = self._point(y)
        return min(f.signed_distance(p[i]) for i, f in enumerate(self.factors))

    def _survival(self, t, p):
        g = 1.0
        for i, f in enumerate(self.factors):
            g *= f._survival(t, p[i:i + 1])[0]
        return g, 1.0 - g

    def _grad(self, t, p):
        return np.concatenate([f._grad(t, p[i:i + 1]) for i, f in enumerate(self.factors)])

    def _log(self, t, p):
        return sum(_log_from(*f._survival(t, p[i:i + 1])) for i, f in enumerate(self.factors))


@dataclass(frozen=True)
class Wedge2(Domain):
    """``{y in R^2 : y1 < y2}``; survival = two independent BMs not meeting."""

    dim = 2

    def signed_distance(self, y) -> float:
        p = self._point(y)
        return float((p[1] - p[0]) * INV_SQRT2)

    def _survival(self, t, p):
        u = (p[1] - p[0]) / (2.0 * math.sqrt(t))
        return math.erf(u), math.erfc(u)

    def _grad(self, t, p):
        g = halfline_log_grad(2.0 * t, p[1] - p[0])
        return np.array([-g, g])


DomainSpec = Union[HalfLine, Interval, HalfSpace, Box, Wedge2]


def exit_prob(domain: Domain, t: float, y) -> float:
    """gamma_G(t, y): probability that BM from ``y`` stays in the domain up to ``t``."""
    t = _check_time(t)
    p = domain.require_interior(y)
    return domain._survival(t, p)[0]


def log_exit_prob(domain: Domain, t: float, y) -> float:
    """log gamma_G(t, y), clamped at log(1e-300) and accurate when gamma is near 1."""
    t = _check_time(t)
    p = domain.require_interior(y)
    if isinstance(domain, Box):
        return domain._log(t, p)
    return _log_from(*domain._survival(t, p))


def grad_log_exit_prob(domain: Domain, t: float, y) -> np.ndarray:
    """grad_y log gamma_G(t, y) from the closed forms (no numerical differentiation)."""
    t = _check_time(t)
    p = domain.require_interior(y)
    return domain._grad(t, p)


# --------------------------------------------------------------------------
# meander entrance law and the Imhof density

def meander_entrance_density(T: float, s: float, z, *, normalized: bool = True):
    """Density of the Brownian meander on [0, T] at time ``s``.

    ``f_s(z) = sqrt(T) s**-1.5 z exp(-z**2 / 2s) gamma_{R+}(T - s, z) / N``.
    """
    T, s = float(T), float(s)
    if not 0.0 < s < T:
        raise ValueError(f"need 0 < s < T, got s={s}, T={T}")
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0.0):
        raise ValueError("entrance density is defined for z > 0")
    f = math.sqrt(T) * s ** -1.5 * z * np.exp(-z * z / (2.0 * s)) \
        * special.erf(z / math.sqrt(2.0 * (T - s)))
    if normalized:
        f = f / entrance_normalizer(T, s)
    return float(f) if f.ndim == 0 else f


@lru_cache(maxsize=256)
def entrance_normalizer(T: float, s: float) -> float:
    # analytically 1; computed so that a wrong formula shows up as a wrong constant
    val, _ = integrate.quad(
        lambda z: meander_entrance_density(T, s, z, normalized=False) if z > 0 else 0.0,
        0.0, math.inf, epsabs=1e-10, epsrel=1e-12, limit=200)
    return val


class EntranceTable:
    """Inverse-CDF sampler for the meander marginal at time ``s``.

    4096 quantile nodes, uniform in the logit of the probability, joined by a
    monotone cubic (PCHIP) interpolant.
    """

    n_nodes = 4096
    u_min = 1e-14

    def __init__(self, T: float, s: float):
        self.T, self.s = float(T), float(s)
        rs = math.sqrt(self.s)
        zmax = 12.0 * rs
        zs = np.linspace(0.0, zmax, 2 ** 15 + 1)
        f = np.zeros_like(zs)
        f[1:] = meander_entrance_density(self.T, self.s, zs[1:])
        cdf = integrate.cumulative_simpson(f, x=zs, initial=0.0)
        self._zs, self._cdf = zs, cdf

        w = np.linspace(special.logit(self.u_min), special.logit(1.0 - self.u_min), self.n_nodes)
        u = special.expit(w)
        z = np.interp(u, cdf, zs)
        for _ in range(4):
            resid = self._cdf_at(z) - u
            dens = meander_entrance_density(self.T, self.s, np.maximum(z, 1e-300 + 1e-12 * rs))
            z = np.clip(z - resid / np.maximum(dens, 1e-300), 1e-12 * rs, zmax)
        self.w_nodes, self.z_nodes = w, z
        pchip = PchipInterpolator(w, z)
        self._coef = pchip.c            # (4, n-1) local cubic coefficients
        self._w0 = float(w[0])
        self._hw = float(w[1] - w[0])
        self._interp = pchip

    def _cdf_at(self, z):
        """CDF from the fine cumulative table plus an 8-point Gauss rule on the last cell."""
        z = np.asarray(z, dtype=float)
        i = np.clip(np.searchsorted(self._zs, z, side="right") - 1, 0, len(self._zs) - 2)
        left = self._zs[i]
        half = 0.5 * (z - left)
        nodes = left[..., None] + half[..., None] * (1.0 + _GL8_X)
        vals = np.where(nodes > 0, meander_entrance_density(self.T, self.s, np.maximum(nodes, 1e-300)), 0.0)
        return self._cdf[i] + half * (vals @ _GL8_W)

    def cdf(self, z):
        return self._cdf_at(z)

    def quantile(self, u: float) -> float:
        w = math.log(u) - math.log1p(-u) if 0.0 < u < 1.0 else (-math.inf if u <= 0.0 else math.inf)
        j = int((w - self._w0) / self._hw) if math.isfinite(w) else (0 if w < 0 else self.n_nodes - 2)
        j = min(max(j, 0), self.n_nodes - 2)
        dx = min(max(w - float(self.w_nodes[j]), 0.0), self._hw) if math.isfinite(w) else (0.0 if w < 0 else self._hw)
        c = self._coef[:, j]
        return float(((c[0] * dx + c[1]) * dx + c[2]) * dx + c[3])

    def sample(self, gen: np.random.Generator) -> float:
        return self.quantile(gen.random())


_table_lock = threading.Lock()
_entrance_tables: dict[tuple[float, float], EntranceTable] = {}


def entrance_table(T: float, s: float) -> EntranceTable:
    key = (float(T), float(s))
    tab = _entrance_tables.get(key)
    if tab is None:
        tab = EntranceTable(*key)         # compute outside the lock, publish once
        with _table_lock:
            tab = _entrance_tables.setdefault(key, tab)
    return tab


def imhof_weight(T: float, z_T: float) -> float:
    """Density of the meander law w.r.t. the 3-d Bessel law on [0, T]: sqrt(pi T) / (sqrt(2) Z(T))."""
    z_T = float(z_T)
    if not z_T > 0.0:
        raise ValueError(f"Bessel endpoint must be positive, got {z_T}")
    return math.sqrt(math.pi * float(T)) / (math.sqrt(2.0) * z_T)


# --------------------------------------------------------------------------
# contracting drifts and the stationary point of the drifted flow

def hermite(x: float, x0: float, h: float, f, d) -> float:
    """Cubic Hermite interpolation on a uniform grid; scalar, kernel operation order."""
    tau = (x - x0) / h
    i = int(math.floor(tau))
    n = len(f) - 1
    if i < 0:
        i = 0
    elif i > n - 1:
        i = n - 1
    s = tau - i
    h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s)
    h10 = s * (1.0 - s) * (1.0 - s)
    h01 = s * s * (3.0 - 2.0 * s)
    h11 = s * s * (s - 1.0)
    return h00 * f[i] + h10 * h * d[i] + h01 * f[i + 1] + h11 * h * d[i + 1]


def _hermite_array(x, x0, h, f, d):
    x = np.asarray(x, dtype=float)
    tau = (x - x0) / h
    i = np.clip(np.floor(tau).astype(np.int64), 0, len(f) - 2)
    s = tau - i
    h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s)
    h10 = s * (1.0 - s) * (1.0 - s)
    h01 = s * s * (3.0 - 2.0 * s)
    h11 = s * s * (s - 1.0)
    return h00 * f[i] + h10 * h * d[i] + h01 * f[i + 1] + h11 * h * d[i + 1]


@dataclass(eq=False)
class DriftSpec:
    """A Lipschitz drift ``a`` with ``(a(x) - a(y))(x - y) <= -lam (x - y)**2``.

    ``expr`` is an expression in ``x`` (see :mod:`condbm.expr`).
    """

    expr: str
    lam: float
    lipschitz: float | None = None
    check_range: float = 50.0
    program: Program = field(init=False, repr=False)

    def __post_init__(self):
        self.program = self.expr if isinstance(self.expr, Program) else compile_expr(self.expr)
        self.expr = self.program.text
        if not self.lam > 0.0:
            raise ValueError("monotonicity constant lam must be positive")
        xs = np.linspace(-self.check_range, self.check_range, 4001)
        ok, worst = self.check_monotone(xs)
        if not ok:
            raise ValueError(f"drift {self.expr!r} violates the monotonicity bound with lam={self.lam} "
                             f"(worst excess {worst:.3g})")
        if self.lipschitz is None:
            a = self(xs)
            self.lipschitz = float(np.max(np.abs(np.diff(a) / np.diff(xs))))

    @classmethod
    def linear(cls, lam: float = 1.0, center: float = 0.0) -> "DriftSpec":
        expr = f"-{lam!r}*x" if center == 0.0 else f"-{lam!r}*(x - {center!r})"
        return cls(expr, lam, lipschitz=lam)

    def __call__(self, x):
        return eval_array(self.program, x)

    def scalar(self, x: float) -> float:
        return eval_scalar(self.program, x)

    def check_monotone(self, xs, tol: float = 1e-9) -> tuple[bool, float]:
        xs = np.sort(np.asarray(xs, dtype=float))
        a = self(xs)
        dx = np.diff(xs)
        excess = np.diff(a) * dx + self.lam * dx * dx
        worst = float(np.max(excess))
        return bool(np.all(np.isfinite(a)) and worst <= tol * (1.0 + float(np.max(np.abs(a))))), worst

    @cached_property
    def table(self) -> "StationaryTable":
        return StationaryTable(self)

    def antiderivative(self, x):
        """A(x) = int_0^x a(u) du."""
        tab = self.table
        return tab.log_unnorm(x) / 2.0 - tab.log_unnorm(0.0) / 2.0


class StationaryTable:
    """Tabulated stationary density ``pi = C exp(2A)`` of dX = a(X) dt + dW.

    log pi is stored with its exact derivative 2a at 2**16 nodes and joined by
    cubic Hermite pieces (exact when a is affine); CDF and survival function are
    tabulated from the same pieces so that tail probabilities keep their
    relative accuracy.
    """

    n_cells = 2 ** 16
    small_gap_cells = 16

    def __init__(self, drift: DriftSpec):
        self.drift = drift
        a = drift
        lo, hi = -1.0, 1.0
        while a.scalar(lo) <= 0.0:
            lo *= 2.0
        while a.scalar(hi) >= 0.0:
            hi *= 2.0
        self.mode = optimize.brentq(a.scalar, lo, hi, xtol=1e-14, rtol=1e-15)
        # concavity of A: pi / pi_max <= exp(-lam (x - mode)^2)
        R = math.sqrt(750.0 / drift.lam)
        self.x0 = self.mode - R
        self.h = 2.0 * R / self.n_cells
        x = self.x0 + self.h * np.arange(self.n_cells + 1)
        self.x = x
        cells = a(x[:-1, None] + 0.5 * self.h * (1.0 + _GL5_X)) @ _GL5_W * (0.5 * self.h)
        A = np.concatenate([[0.0], np.cumsum(cells)])
        i = int((self.mode - self.x0) / self.h)
        A_mode = A[i] + self._partial(a, x[i], self.mode)
        self._A = A - A_mode
        self._a_nodes = a(x)

        def unnorm(v):
            return math.exp(2.0 * self._A_at(v))

        Z, self.z_err = integrate.quad(unnorm, x[0], x[-1], points=[self.mode],
                                       epsabs=1e-10, epsrel=1e-13, limit=1000)
        self.normalizer = Z
        self.log_pi = 2.0 * self._A - math.log(Z)
        self.dlog_pi = 2.0 * self._a_nodes
        pdf_cells = np.exp(_hermite_array(x[:-1, None] + 0.5 * self.h * (1.0 + _GL5_X),
                                          self.x0, self.h, self.log_pi, self.dlog_pi)) @ _GL5_W * (0.5 * self.h)
        self.pdf_nodes = np.exp(self.log_pi)
        self.cdf_nodes = np.concatenate([[0.0], np.cumsum(pdf_cells)])
        self.sf_nodes = np.concatenate([np.cumsum(pdf_cells[::-1])[::-1], [0.0]])
        self.total_mass = float(self.cdf_nodes[-1])
        self.lo, self.hi = float(x[0]), float(x[-1])

    @staticmethod
    def _partial(a, left, right):
        half = 0.5 * (right - left)
        return float(a(left + half * (1.0 + _GL5_X)) @ _GL5_W * half)

    def _A_at(self, v: float) -> float:
        i = min(max(int((v - self.x0) / self.h), 0), self.n_cells - 1)
        return float(self._A[i]) + self._partial(self.drift, float(self.x[i]), v)

    def log_unnorm(self, v):
        if np.ndim(v):
            return np.array([2.0 * self._A_at(float(u)) for u in np.ravel(v)]).reshape(np.shape(v))
        return 2.0 * self._A_at(float(v))

    # vectorised evaluators
    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        out = np.exp(_hermite_array(v, self.x0, self.h, self.log_pi, self.dlog_pi))
        out = np.where((v < self.lo) | (v > self.hi), 0.0, out)
        return float(out) if out.ndim == 0 else out

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        left = _hermite_array(v, self.x0, self.h, self.cdf_nodes, self.pdf_nodes)
        right = 1.0 - _hermite_array(v, self.x0, self.h, self.sf_nodes, -self.pdf_nodes)
        out = np.where(v < self.mode, left, right)
        out = np.clip(np.where(v < self.lo, 0.0, np.where(v > self.hi, 1.0, out)), 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def sf(self, v):
        v = np.asarray(v, dtype=float)
        right = _hermite_array(v, self.x0, self.h, self.sf_nodes, -self.pdf_nodes)
        left = 1.0 - _hermite_array(v, self.x0, self.h, self.cdf_nodes, self.pdf_nodes)
        out = np.where(v >= self.mode, right, left)
        out = np.clip(np.where(v < self.lo, 1.0, np.where(v > self.hi, 0.0, out)), 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    # scalar evaluators, shared operation order with the compiled kernels
    def pdf_scalar(self, v: float) -> float:
        if v < self.lo or v > self.hi:
            return 0.0
        return math.exp(hermite(v, self.x0, self.h, self.log_pi, self.dlog_pi))

    def theta_scalar(self, y1: float, y2: float) -> float:
        gap = y2 - y1
        if gap <= self.small_gap_cells * self.h:
            half = 0.5 * gap
            mid = y1 + half
            acc = 0.0
            for xk, wk in zip(GL8_NODES, GL8_WEIGHTS):
                acc += wk * self.pdf_scalar(mid + half * xk)
            return acc * half
        if y1 >= self.mode:
            return self._sf_scalar(y1) - self._sf_scalar(y2)
        if y2 <= self.mode:
            return self._cdf_scalar(y2) - self._cdf_scalar(y1)
        return (1.0 - self._cdf_scalar(y1)) - self._sf_scalar(y2)

    def _cdf_scalar(self, v):
        if v <= self.lo:
            return 0.0
        if v >= self.hi:
            return self.total_mass
        return hermite(v, self.x0, self.h, self.cdf_nodes, self.pdf_nodes)

    def _sf_scalar(self, v):
        if v <= self.lo:
            return self.total_mass
        if v >= self.hi:
            return 0.0
        return hermite(v, self.x0, self.h, self.sf_nodes, -self.pdf_nodes)


def stationary_density(drift: DriftSpec, x):
    """pi(x) = C exp(2 int_0^x a); C fixed by adaptive quadrature."""
    return drift.table.pdf(x)


def stationary_cdf(drift: DriftSpec, x):
    return drift.table.cdf(x)


def theta(drift: DriftSpec, y1: float, y2: float) -> float:
    """Stationary probability of the interval (y1, y2)."""
    y1, y2 = float(y1), float(y2)
    if not y1 < y2:
        raise ValueError(f"theta needs y1 < y2, got ({y1}, {y2})")
    if math.isinf(y1) or math.isinf(y2):
        lo = 0.0 if y1 == -math.inf else drift.table.cdf(y1)
        hi = 1.0 if y2 == math.inf else drift.table.cdf(y2)
        return float(hi - lo)
    return drift.table.theta_scalar(y1, y2)


def grad_log_theta(drift: DriftSpec, y1: float, y2: float) -> np.ndarray:
    tab = drift.table
    th = tab.theta_scalar(y1, y2)
    return np.array([-tab.pdf_scalar(y1) / th, tab.pdf_scalar(y2) / th])
