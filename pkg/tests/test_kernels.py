"""The compiled and pure-Python kernels must agree bit for bit."""
import math

import numpy as np
import pytest

from condbm import kernels
from condbm.analytic import DriftSpec
from condbm.expr import compile_expr
from condbm.rng import RngStream
from condbm.sde import meander_grid

pytestmark = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")


G = object()   # placeholder for the generator argument


def both(name, *args, seed=5, index=3):
    out = []
    for backend in ("cython", "python"):
        gen = RngStream(seed, index).generator()
        call = [gen if a is G else a for a in args]
        out.append(getattr(kernels.get_backend(backend), name)(*call))
    return out


def assert_same(c, p):
    assert len(c) == len(p)
    for a, b in zip(c, p):
        if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
            assert np.array_equal(np.asarray(a), np.asarray(b))
        elif isinstance(a, float) and math.isnan(a):
            assert math.isnan(b)
        else:
            assert a == b


@pytest.mark.parametrize("index", range(5))
def test_em_halfline(index):
    g = meander_grid(1.0).times
    c, p = both("em_halfline", g, 0.01, 1.0, 1e-6, 32, G, 0.5, index=index)
    assert_same(c, p)


@pytest.mark.parametrize("kappa", [0.5, math.inf])
def test_em_wedge(kappa):
    g = meander_grid(1.0).times
    c, p = both("em_wedge", g, -0.01, 0.01, 1.0, 1e-6, 32, G, kappa)
    assert_same(c, p)


def test_em_theta():
    d = DriftSpec("-x - 0.3*tanh(x)", 1.0)
    t = np.linspace(1e-3, 1.0, 300)
    c, p = both("em_theta", t, -0.01, 0.02, d.table, d.program, 32, G, 0.5)
    assert_same(c, p)


def test_reject_kernels():
    t = np.linspace(0.0, 1.0, 101)
    assert_same(*both("reject_halfline", t, 0.05, 10000, G))
    assert_same(*both("reject_pair", t, -0.05, 0.05, 10000, G))
    prog = compile_expr("x").negated()
    assert_same(*both("reject_pair", t, -0.05, 0.05, 10000, G, prog, 0.0))


def test_reject_exhaustion_status():
    t = np.linspace(0.0, 1.0, 101)
    for name in ("cython", "python"):
        vals, attempts, status = kernels.get_backend(name).reject_halfline(t, 1e-6, 3, RngStream(0).generator())
        assert status == kernels.EXHAUSTED and attempts == 3


@pytest.mark.parametrize("substeps", [1, 3])
@pytest.mark.parametrize("drift", [None, "-x - 0.3*tanh(x)"])
def test_coalesce(substeps, drift):
    prog = None if drift is None else DriftSpec(drift, 1.0).program
    x = np.linspace(-2, 2, 60)
    c, p = both("coalesce", 0.01, 300, substeps, x, np.arange(60), np.arange(60), G, prog, True, False)
    assert_same(c, p)


def test_theta_scalar_and_program_match_python():
    from condbm import _ckernels
    d = DriftSpec("-x - 0.3*tanh(x)", 1.0)
    for y1, y2 in [(-1.0, 1.0), (0.1, 0.1 + 1e-7), (-30.0, 30.0), (2.0, 2.5)]:
        assert _ckernels.theta_scalar(d.table, y1, y2) == d.table.theta_scalar(y1, y2)
    for x in np.linspace(-4, 4, 17):
        assert _ckernels.eval_program(d.program, x) == d.scalar(x)
