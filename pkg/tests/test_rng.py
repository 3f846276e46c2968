import numpy as np
import numpy.testing as npt

from loralab.rng import RngState


def test_same_seed_same_stream():
    a = RngState(42).normal((4, 4))
    b = RngState(42).normal((4, 4))
    npt.assert_array_equal(a, b)


def test_different_seeds_differ():
    a = RngState(1).normal((8,))
    b = RngState(2).normal((8,))
    assert not np.array_equal(a, b)


def test_split_is_deterministic():
    a = RngState(7).split("weights").normal((3,))
    b = RngState(7).split("weights").normal((3,))
    npt.assert_array_equal(a, b)


def test_split_children_are_independent():
    parent = RngState(7)
    w = parent.split("weights")
    c = parent.split("corpus")
    assert w.seed != c.seed
    assert not np.array_equal(w.normal((8,)), c.normal((8,)))


def test_split_does_not_consume_parent_stream():
    a = RngState(9)
    a.split("x")
    a.split("y")
    drawn_after_splits = a.normal((5,))
    npt.assert_array_equal(drawn_after_splits, RngState(9).normal((5,)))


def test_integers_bounds_and_dtype():
    vals = RngState(3).integers(2, 9, size=1000)
    assert vals.dtype == np.int64
    assert vals.min() >= 2 and vals.max() < 9


def test_values_are_float32():
    assert RngState(0).normal((2,)).dtype == np.float32
    assert RngState(0).uniform((2,)).dtype == np.float32
