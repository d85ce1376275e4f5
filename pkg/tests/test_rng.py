import numpy as np
import pytest

from condbm.rng import RngStream, as_generator, stream_label


def test_same_stream_same_numbers():
    a = RngStream(7, 3).generator().standard_normal(100)
    b = RngStream(7, 3).generator().standard_normal(100)
    assert np.array_equal(a, b)


def test_streams_differ_by_index_and_seed():
    base = RngStream(7, 3).generator().random(50)
    assert not np.array_equal(base, RngStream(7, 4).generator().random(50))
    assert not np.array_equal(base, RngStream(8, 3).generator().random(50))


def test_streams_are_uncorrelated():
    x = np.array([RngStream(1, i).generator().standard_normal() for i in range(4000)])
    y = np.array([RngStream(1, i).generator().standard_normal(2)[1] for i in range(4000)])
    assert abs(np.corrcoef(x, y)[0, 1]) < 4 / np.sqrt(4000)
    assert abs(x.mean()) < 4 / np.sqrt(4000)


def test_spawn_and_label():
    s = RngStream(5, 10)
    assert s.spawn(3) == RngStream(5, 13)
    assert stream_label(s) == (5, 10)
    assert stream_label(np.random.default_rng(0)) == (None, None)


def test_as_generator_inputs():
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    assert np.array_equal(as_generator(4).random(3), RngStream(4, 0).generator().random(3))
    with pytest.raises(TypeError):
        as_generator("seed")


def test_rejects_out_of_range():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(0, 2 ** 64)
