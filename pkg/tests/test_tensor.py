import numpy as np
import pytest

from abstractnet.tensor import (NonFiniteError, SeededRng, ShapeError,
                                check_finite, dump_t4, load_t4, map_binary,
                                rng_uniform, tensor_new)


def test_tensor_new_shape_and_fill():
    t = tensor_new((2, 3, 4, 5), fill=1.5)
    assert t.shape == (2, 3, 4, 5)
    assert t.dtype == np.float64
    assert np.all(t == 1.5)


@pytest.mark.parametrize("shape", [(2, 3, 4), (1, 2, 3, 4, 5), (0, 1, 1, 1), (1, -1, 2, 2)])
def test_tensor_new_rejects_bad_shapes(shape):
    with pytest.raises(ShapeError):
        tensor_new(shape)


def test_check_finite_passes_and_raises():
    t = tensor_new((1, 1, 2, 2))
    assert check_finite(t) is t
    t[0, 0, 0, 0] = np.nan
    with pytest.raises(NonFiniteError):
        check_finite(t)
    t[0, 0, 0, 0] = np.inf
    with pytest.raises(NonFiniteError):
        check_finite(t)


def test_map_binary_ops():
    a = tensor_new((1, 1, 2, 2), 3.0)
    b = tensor_new((1, 1, 2, 2), 2.0)
    assert np.all(map_binary(a, b, "add") == 5.0)
    assert np.all(map_binary(a, b, "sub") == 1.0)
    assert np.all(map_binary(a, b, "mul") == 6.0)


def test_map_binary_rejects_mismatch_and_bad_op():
    a = tensor_new((1, 1, 2, 2))
    b = tensor_new((1, 1, 2, 3))
    with pytest.raises(ShapeError):
        map_binary(a, b, "add")
    with pytest.raises(ValueError):
        map_binary(a, a, "div")


def test_map_binary_rejects_nonfinite_result():
    a = tensor_new((1, 1, 1, 1), 1e308)
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError):
        map_binary(a, a, "add")


def test_seeded_rng_is_deterministic():
    a = SeededRng(42).uniform((3, 4))
    b = SeededRng(42).uniform((3, 4))
    assert np.array_equal(a, b)
    c = SeededRng(43).uniform((3, 4))
    assert not np.array_equal(a, c)


def test_split_is_order_independent_and_does_not_advance_parent():
    parent = SeededRng(7)
    first = parent.split(1).uniform((5,))
    # drawing from one child must not perturb a sibling
    parent.split(2).uniform((100,))
    again = parent.split(1).uniform((5,))
    assert np.array_equal(first, again)
    # and drawing from the parent itself leaves children untouched
    parent.uniform((50,))
    assert np.array_equal(parent.split(1).uniform((5,)), first)


def test_split_children_are_distinct_streams():
    r = SeededRng(7)
    a = r.split(0).uniform((10,))
    b = r.split(1).uniform((10,))
    assert not np.array_equal(a, b)


def test_split_key_is_stable_identifier():
    k1 = SeededRng(9).split(3, 4).key
    k2 = SeededRng(9).split(3, 4).key
    assert k1 == k2
    assert isinstance(k1, int)
    assert k1 != SeededRng(9).split(3, 5).key


def test_rng_uniform_respects_bounds_and_shape():
    t = rng_uniform(SeededRng(1), (2, 2, 3, 3), -0.25, 0.75)
    assert t.shape == (2, 2, 3, 3)
    assert t.min() >= -0.25 and t.max() < 0.75


def test_rng_uniform_rejects_rank_mismatch():
    with pytest.raises(ShapeError):
        rng_uniform(SeededRng(1), (2, 3), 0.0, 1.0)


def test_uniform_rejects_bad_interval():
    with pytest.raises(ValueError):
        SeededRng(1).uniform((2,), 1.0, 1.0)


def test_t4_roundtrip(tmp_path):
    t = SeededRng(5).uniform((2, 3, 4, 5), -1.0, 1.0)
    path = tmp_path / "x.t4"
    dump_t4(t, path)
    back = load_t4(path)
    assert back.shape == t.shape
    assert np.array_equal(back, t)


def test_t4_rejects_truncated_payload(tmp_path):
    t = SeededRng(5).uniform((1, 1, 2, 2), -1.0, 1.0)
    path = tmp_path / "x.t4"
    dump_t4(t, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(ShapeError):
        load_t4(path)
