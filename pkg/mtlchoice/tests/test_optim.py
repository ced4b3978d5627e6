"""
Test the Adam optimizer

"""


import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mtlchoice.exceptions import DomainError
from mtlchoice.optim import Adam


def test_first_step_moves_by_the_learning_rate():
    x = np.array([3.0, -2.0, 0.5])
    Adam([x], lr=0.01).step([np.array([10.0, -0.1, 1e-3])])
    # the bias-corrected first step is lr * sign(g) up to eps
    assert_allclose(x, [2.99, -1.99, 0.49], rtol=1e-6)


def test_matches_reference_updates():
    rng = np.random.default_rng(0)
    x = rng.normal(size=4)
    ref = x.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    opt = Adam([x], lr=0.05)
    for t in range(1, 6):
        g = rng.normal(size=4)
        opt.step([g])
        m = 0.9 * m + (1 - 0.9) * g
        v = 0.999 * v + (1 - 0.999) * g * g
        ref -= 0.05 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert_allclose(x, ref, rtol=1e-10)


def test_minimizes_a_quadratic():
    x = np.array([5.0, -3.0])
    opt = Adam([x], lr=0.1)
    for _ in range(2000):
        opt.step([2 * (x - [1.0, 2.0])])
    assert_allclose(x, [1.0, 2.0], atol=1e-2)


def test_parameters_evolve_independently():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=3), rng.normal(size=(2, 2))
    a2, b2 = a.copy(), b.copy()
    joint = Adam([a, b], lr=0.01)
    only_a, only_b = Adam([a2], lr=0.01), Adam([b2], lr=0.01)
    for _ in range(20):
        ga, gb = rng.normal(size=3), rng.normal(size=(2, 2))
        joint.step([ga, gb])
        only_a.step([ga])
        only_b.step([gb])
    assert_array_equal(a, a2)
    assert_array_equal(b, b2)


@pytest.mark.parametrize("kwargs", [{"lr": 0.0}, {"lr": -1.0}, {"beta1": 1.0}, {"beta2": -0.1}])
def test_invalid_settings(kwargs):
    with pytest.raises(DomainError):
        Adam([np.zeros(1)], **kwargs)
