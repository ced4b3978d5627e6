"""
Handcrafted polynomial feature maps for the linear-in-parameter estimators.

Degree 1 is the identity map. Degree 2 appends the squares and the pairwise
products of the input columns.
"""


from dataclasses import dataclass
from itertools import combinations

import numpy as np

from mtlchoice.exceptions import ConfigurationError, ShapeError


@dataclass(frozen=True)
class PolynomialFeatures:
    """Polynomial expansion of ``d`` input columns.

    Examples
    --------
    >>> phi = PolynomialFeatures(2, 2)
    >>> phi.names(["x0", "x1"])
    ['x0', 'x1', 'x0^2', 'x1^2', 'x0*x1']
    >>> phi.transform([[1.0, 2.0]])
    array([[1., 2., 1., 4., 2.]])
    """

    d: int
    degree: int = 1

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ConfigurationError("phi_degree", "must be 1 or 2", self.degree)

    @property
    def terms(self):
        terms = [(j,) for j in range(self.d)]
        if self.degree == 2:
            terms += [(j, j) for j in range(self.d)]
            terms += list(combinations(range(self.d), 2))
        return terms

    @property
    def n_features(self):
        return len(self.terms)

    def names(self, feature_names):
        out = []
        for term in self.terms:
            if len(term) == 1:
                out.append(feature_names[term[0]])
            elif term[0] == term[1]:
                out.append(f"{feature_names[term[0]]}^2")
            else:
                out.append(f"{feature_names[term[0]]}*{feature_names[term[1]]}")
        return out

    def _check(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.d:
            raise ShapeError(0, self.d, X.shape[1])
        return X

    def transform(self, X):
        X = self._check(X)
        if self.degree == 1:
            return X.copy()
        cols = [X[:, t[0]] if len(t) == 1 else X[:, t[0]] * X[:, t[1]] for t in self.terms]
        return np.column_stack(cols)

    def jacobian(self, X):
        """Derivatives of every expanded feature, shape ``(n, n_features, d)``."""
        X = self._check(X)
        J = np.zeros((len(X), self.n_features, self.d))
        for p, term in enumerate(self.terms):
            if len(term) == 1:
                J[:, p, term[0]] = 1.0
            else:
                i, j = term
                J[:, p, i] += X[:, j]
                J[:, p, j] += X[:, i]
        return J
