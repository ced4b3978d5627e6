"""
Test mtlchoice.testing module that contains utilities for writing tests.

"""
import numpy as np
import pytest

from mtlchoice.core import GradientTape
from mtlchoice.mtldnn import HyperConfig, build
from mtlchoice.testing import (
    assert_tape_close,
    max_relative_error,
    nearest_kink,
    relative_errors,
)


def _tape(scale=1.0):
    return GradientTape(
        shared=[[np.full((2, 3), scale), np.zeros(2)]],
        rp_head=[[np.ones((3, 2)) * scale, np.ones(3)]],
        log_T=0.5 * scale,
    )


def test_equality():
    assert_tape_close(_tape(), _tape())
    assert_tape_close([1.0, 2.0], [1.0, 2.0])
    assert max_relative_error([], []) == 0.0


def test_unequal_error():
    with pytest.raises(AssertionError):
        assert_tape_close(_tape(), _tape(1.01))
    assert_tape_close(_tape(), _tape(1.01), rtol=0.02)


def test_shape_error():
    with pytest.raises(AssertionError):
        assert_tape_close([1.0, 2.0], [1.0, 2.0, 3.0])


def test_small_values_are_compared_absolutely():
    err = relative_errors([1e-9, 1.0], [2e-9, 1.0])
    assert err[0] < 1e-4
    assert max_relative_error([1e-9], [2e-9], floor=1e-12) == 0.5


def test_nearest_kink():
    model = build(HyperConfig(M1=1, M2=1, width=3, seed=0), 2, 3, 3)
    # zero inputs sit on the kink of the first layer, whose biases are zero
    assert nearest_kink(model, np.zeros((2, 2)), np.ones((2, 2))) == 0.0
    assert nearest_kink(model, np.ones((2, 2)), np.ones((2, 2))) > 0.0
    joint = build(HyperConfig(M1=2, M2=0, width=3, seed=0), 2, 3, 3)
    assert nearest_kink(joint) == np.inf
    assert nearest_kink(joint, X_sp=np.zeros((1, 2))) == 0.0
