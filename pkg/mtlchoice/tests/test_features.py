"""
Test the polynomial feature maps

"""


import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mtlchoice.exceptions import ConfigurationError, ShapeError
from mtlchoice.features import PolynomialFeatures


def test_identity_map():
    phi = PolynomialFeatures(3)
    X = np.arange(6.0).reshape(2, 3)
    Z = phi.transform(X)
    assert_array_equal(Z, X)
    assert Z is not X
    assert phi.n_features == 3
    assert_array_equal(phi.jacobian(X)[1], np.eye(3))


def test_quadratic_map():
    phi = PolynomialFeatures(3, 2)
    assert phi.n_features == 9
    assert phi.names(["a", "b", "c"]) == [
        "a", "b", "c", "a^2", "b^2", "c^2", "a*b", "a*c", "b*c"
    ]
    assert_allclose(phi.transform([2.0, 3.0, 5.0]), [[2, 3, 5, 4, 9, 25, 6, 10, 15]])


def test_quadratic_jacobian_matches_finite_differences():
    phi = PolynomialFeatures(3, 2)
    x = np.array([0.3, -1.2, 2.0])
    J = phi.jacobian(x)[0]
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        num = (phi.transform(x + e) - phi.transform(x - e))[0] / (2 * h)
        assert_allclose(J[:, j], num, rtol=1e-7, atol=1e-9)


def test_validation():
    with pytest.raises(ConfigurationError):
        PolynomialFeatures(2, 3)
    with pytest.raises(ShapeError):
        PolynomialFeatures(2).transform(np.ones((1, 3)))
