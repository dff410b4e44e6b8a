"""Property-based checks over randomized shapes and values."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from abstractnet import layers
from abstractnet.layers import ConvSpec, LayerState, PoolSpec
from abstractnet.tensor import SeededRng

small = st.integers(min_value=1, max_value=3)


@settings(max_examples=25, deadline=None)
@given(n=small, c=small, o=small, seed=st.integers(0, 2**32 - 1),
       a=st.floats(-2.0, 2.0), b=st.floats(-2.0, 2.0))
def test_conv_is_linear_in_the_input(n, c, o, seed, a, b):
    rng = SeededRng(seed)
    x = rng.split(0).uniform((n, c, 6, 6), -1.0, 1.0)
    y = rng.split(1).uniform((n, c, 6, 6), -1.0, 1.0)
    st_ = LayerState(rng.split(2).uniform((o, c, 3, 3), -1.0, 1.0),
                     np.zeros((1, o, 1, 1)))
    spec = ConvSpec(c, o, (3, 3), (1, 1), (1, 1))
    lhs = layers.conv_forward(a * x + b * y, spec, st_)
    rhs = a * layers.conv_forward(x, spec, st_) + b * layers.conv_forward(y, spec, st_)
    assert np.allclose(lhs, rhs, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(["max", "average"]))
def test_pool_matches_direct_window_reduction(seed, kind):
    x = SeededRng(seed).uniform((2, 2, 6, 6), -1.0, 1.0)
    spec = PoolSpec(kind, (2, 2), (2, 2))
    y, _ = layers.pool_forward(x, spec)
    reduce = np.max if kind == "max" else np.mean
    for r in range(3):
        for c in range(3):
            win = x[:, :, 2 * r:2 * r + 2, 2 * c:2 * c + 2]
            assert np.allclose(y[:, :, r, c], reduce(win, axis=(2, 3)))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5))
def test_softmax_gradient_rows_sum_to_zero(seed, n):
    logits = SeededRng(seed).uniform((n, 2, 1, 1), -5.0, 5.0)
    labels = SeededRng(seed).integers(0, 2, size=n)
    loss, dlogits = layers.softmax_xent(logits, np.asarray(labels))
    assert loss >= 0.0
    # probabilities minus a one-hot always sum to zero per sample
    assert np.allclose(dlogits.sum(axis=1), 0.0, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1),
       rate=st.floats(0.0, 0.9, exclude_max=False))
def test_dropout_values_are_zero_or_inverted_keep(seed, rate):
    x = np.ones((1, 1, 8, 8))
    y, _ = layers.dropout(x, rate, SeededRng(seed), "train")
    if rate == 0.0:
        assert np.array_equal(y, x)
    else:
        vals = set(np.unique(y))
        assert vals <= {0.0, 1.0 / (1.0 - rate)}


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_relu_is_idempotent_and_nonnegative(seed):
    x = SeededRng(seed).uniform((2, 3, 4, 4), -2.0, 2.0)
    y = layers.relu(x)
    assert np.all(y >= 0.0)
    assert np.array_equal(layers.relu(y), y)
