import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pael.errors import BandwidthUndefinedError, DegenerateRowError, InvalidArgumentError
from pael.smoothing import KernelSpec, kernel_matrix, kernel_weights, normalize_rows, silverman_bandwidth

signals = st.integers(1, 6).flatmap(
    lambda k: arrays(float, (k, 2), elements=st.floats(-5, 5, allow_nan=False))
)


def test_equal_signals_give_uniform_rows():
    np.testing.assert_array_equal(kernel_weights(np.array([[0.4], [0.4]]), KernelSpec(h=0.2)), np.full((2, 2), 0.5))


def test_two_point_gaussian_values():
    h = 0.7
    w = kernel_weights(np.array([0.0, h]), KernelSpec(h=h))
    diag = 1 / (1 + math.exp(-0.5))
    assert abs(w[0, 0] - 0.622459) <= 1e-6 and abs(w[0, 1] - 0.377541) <= 1e-6
    np.testing.assert_allclose(w, [[diag, 1 - diag], [1 - diag, diag]], rtol=1e-15)


@settings(max_examples=60, deadline=None)
@given(signals, st.sampled_from(["gaussian", "epanechnikov"]), st.floats(0.05, 20))
def test_rows_are_stochastic(s, kernel, h):
    try:
        w = kernel_weights(s, KernelSpec(kernel, h=h))
    except DegenerateRowError:
        assert kernel == "epanechnikov"
        return
    assert np.all(w >= 0)
    assert np.abs(w.sum(axis=1) - 1).max() <= 1e-12
    if kernel == "gaussian":
        assert np.all(w > 0)


@settings(max_examples=40, deadline=None)
@given(signals, st.randoms(use_true_random=False))
def test_permutation_equivariance(s, rnd):
    perm = list(range(len(s)))
    rnd.shuffle(perm)
    w = kernel_weights(s)
    np.testing.assert_allclose(kernel_weights(s[perm]), w[np.ix_(perm, perm)], rtol=1e-12, atol=1e-300)


def test_bandwidth_limits():
    s = np.array([0.0, 1.0])
    np.testing.assert_allclose(kernel_weights(s, KernelSpec(h=1e3)), np.full((2, 2), 0.5), atol=1e-6)
    np.testing.assert_allclose(kernel_weights(s, KernelSpec(h=1e-3)), np.eye(2), atol=1e-6)


def test_silverman_rule():
    s = np.array([[0.0], [1.0], [3.0]])
    assert silverman_bandwidth(s) == pytest.approx(1.06 * np.std([0, 1, 3], ddof=1) * 3 ** -0.2, rel=1e-15)
    with pytest.raises(BandwidthUndefinedError):
        silverman_bandwidth(np.ones((3, 2)))
    with pytest.raises(BandwidthUndefinedError):
        kernel_weights(np.zeros((1, 1)), KernelSpec(bandwidth="silverman"))


def test_epanechnikov_degenerate_row():
    # Self-distance always lies inside the support, so build the kernel matrix by hand.
    K = kernel_matrix(np.array([[0.0], [5.0]]), KernelSpec("epanechnikov", h=1.0))
    K[1, 1] = 0.0
    with pytest.raises(DegenerateRowError):
        normalize_rows(K)


def test_invalid_specs():
    with pytest.raises(InvalidArgumentError):
        KernelSpec(h=0.0)
    with pytest.raises(InvalidArgumentError):
        KernelSpec(kernel="box")
