"""
Multinomial logit estimators fitted by maximum likelihood.

Two configurations are provided: separate RP and SP models (MNL-SPT) and a
single model over the pooled rows and the union of the alternatives
(MNL-JOINT). Utilities are linear in a handcrafted feature map ``phi``
(identity by default) and always carry an intercept; the last alternative
is normalized to zero.
"""


import enum
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from mtlchoice.data import Task
from mtlchoice.exceptions import (
    ConfigurationError,
    ConvergenceWarning,
    InputError,
    SeparationWarning,
    ShapeError,
)
from mtlchoice.features import PolynomialFeatures
from mtlchoice.serialization import SerializableModel

logger = logging.getLogger(__name__)

#: coefficient norm beyond which the data are considered separated
SEPARATION_NORM = 1e4


class Scope(str, enum.Enum):
    RP = "rp"
    SP = "sp"
    JOINT = "joint"


@dataclass(frozen=True)
class OptConfig:
    """Settings of the maximum likelihood optimizer.

    Parameters
    ----------
    max_iter : int
        Iteration cap of the quasi-Newton optimizer.
    gtol : float
        Convergence threshold on the max-norm of the gradient of the mean
        negative log-likelihood.
    seed : int
        Recorded with the fit. The optimizer starts from zero and is
        deterministic.
    """

    max_iter: int = 1000
    gtol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if int(self.max_iter) < 1:
            raise ConfigurationError("max_iter", "must be at least 1", self.max_iter)
        if not self.gtol > 0:
            raise ConfigurationError("gtol", "must be positive", self.gtol)


@dataclass(frozen=True)
class FitInfo:
    converged: bool
    n_iter: int
    loglik: float
    history: tuple


def _with_intercept(Z):
    return np.hstack([np.ones((len(Z), 1)), Z])


def _softmax_nll_grad(B, Z1, y):
    """Mean negative log-likelihood of a logit and its gradient w.r.t. ``B``."""
    n = len(y)
    V = Z1 @ B.T
    logp = V - logsumexp(V, axis=1, keepdims=True)
    nll = -logp[np.arange(n), y].mean()
    dV = np.exp(logp)
    dV[np.arange(n), y] -= 1.0
    return nll, dV.T @ Z1 / n


def _minimize(objective, x0, opt, label):
    """Run L-BFGS-B on ``objective`` and record the objective at every iterate."""
    history = [float(objective(x0)[0])]

    def _callback(xk):
        history.append(float(objective(xk)[0]))

    res = minimize(
        objective,
        x0,
        method="L-BFGS-B",
        jac=True,
        callback=_callback,
        options={"maxiter": int(opt.max_iter), "gtol": opt.gtol, "ftol": 1e-15},
    )
    _, grad = objective(res.x)
    converged = bool(np.max(np.abs(grad), initial=0.0) < opt.gtol)
    if not converged and res.nit >= opt.max_iter:
        warnings.warn(
            f"{label} stopped at the iteration cap ({opt.max_iter}) with gradient "
            f"max-norm {np.max(np.abs(grad)):.3g}.",
            ConvergenceWarning,
            stacklevel=3,
        )
    logger.debug("%s: %d iterations, converged=%s", label, res.nit, converged)
    return res.x, converged, int(res.nit), history


def _check_separation(B, Z1, y, label):
    """Warn when the fitted utilities rank the chosen alternative strictly
    first in every row, or the coefficients blew up.

    Such data have no finite likelihood maximum; the returned estimates are
    wherever the optimizer stopped.
    """
    n = len(y)
    V = Z1 @ B.T
    chosen = V[np.arange(n), y].copy()
    V[np.arange(n), y] = -np.inf
    separated = bool(np.all(chosen > V.max(axis=1)))
    norm = float(np.linalg.norm(B))
    if separated or norm > SEPARATION_NORM:
        warnings.warn(
            f"{label} data are perfectly separated (coefficient norm {norm:.3g}); "
            "the estimates are a partial result and not meaningful.",
            SeparationWarning,
            stacklevel=3,
        )


def _fit_logit(Z, y, K, opt, base=None, label="MNL"):
    """Maximum likelihood logit on the design ``Z`` with ``K`` alternatives.

    The row ``base`` (default ``K - 1``) of the coefficient matrix is fixed
    at zero. Returns the full ``(K, p + 1)`` matrix and a :class:`FitInfo`.
    """
    base = K - 1 if base is None else base
    Z1 = _with_intercept(Z)
    y = np.asarray(y, dtype=np.intp)
    free = np.array([k for k in range(K) if k != base], dtype=np.intp)
    p1 = Z1.shape[1]

    def _unpack(theta):
        B = np.zeros((K, p1))
        B[free] = theta.reshape(len(free), p1)
        return B

    def _objective(theta):
        nll, dB = _softmax_nll_grad(_unpack(theta), Z1, y)
        return nll, dB[free].ravel()

    theta, converged, nit, history = _minimize(
        _objective, np.zeros(len(free) * p1), opt, label
    )
    B = _unpack(theta)
    _check_separation(B, Z1, y, label)
    n = len(y)
    info = FitInfo(
        converged, nit, -n * history[-1], tuple(-n * h for h in history)
    )
    return B, info


class MnlModel(SerializableModel):
    """A fitted multinomial logit.

    Parameters
    ----------
    beta : array-like, shape (K, p + 1)
        Intercepts in column 0, one row per alternative; the last row is zero.
    scope : {"rp", "sp", "joint"}
    K_r : int
        Number of RP alternatives. A joint model predicts RP rows over all
        ``K`` alternatives unless masking is requested.
    feature_names : sequence of str
        Names of the raw input columns.
    phi_degree : int
        Degree of the polynomial feature map.
    """

    model_type = "mnl"

    def __init__(
        self, beta, scope, K_r, feature_names, phi_degree=1, converged=True,
        n_iter=0, loglik=float("nan"), history=(),
    ):
        self.beta = np.array(beta, dtype=np.float64)
        self.scope = Scope(scope)
        self.K_r = int(K_r)
        self.feature_names = tuple(feature_names)
        self.phi = PolynomialFeatures(len(self.feature_names), phi_degree)
        if self.beta.ndim != 2 or self.beta.shape[1] != self.phi.n_features + 1:
            raise ShapeError(0, self.phi.n_features + 1, self.beta.shape[-1])
        self.converged = bool(converged)
        self.n_iter = int(n_iter)
        self.loglik = float(loglik)
        self.history = tuple(float(h) for h in history)

    @property
    def K(self):
        return self.beta.shape[0]

    @property
    def d(self):
        return len(self.feature_names)

    @property
    def phi_degree(self):
        return self.phi.degree

    @property
    def coef_names(self):
        return ["intercept"] + self.phi.names(self.feature_names)

    def coefficient(self, name, alternative):
        return float(self.beta[alternative, self.coef_names.index(name)])

    def utilities(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.d:
            raise ShapeError(0, self.d, X.shape[1])
        return self.beta[:, 0] + self.phi.transform(X) @ self.beta[:, 1:].T

    def _n_out(self, task, mask_rp):
        if task is None:
            return self.K
        task = Task(task)
        if self.scope is not Scope.JOINT and self.scope.value != task.value:
            raise InputError(
                f"A {self.scope.value} model cannot predict {task.value} rows."
            )
        if task is Task.RP and mask_rp:
            return self.K_r
        return self.K

    def predict(self, X, task=None, mask_rp=False):
        """Choice probabilities of the rows of ``X``.

        A joint model predicts RP rows over all alternatives; with
        ``mask_rp`` the probabilities are renormalized over the RP ones.
        """
        K = self._n_out(task, mask_rp)
        return softmax(self.utilities(X)[:, :K], axis=1)

    def input_gradient(self, X, task=None, alternative=0, mask_rp=False):
        """Derivative of the probability of ``alternative`` w.r.t. each input."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        K = self._n_out(task, mask_rp)
        P = softmax(self.utilities(X)[:, :K], axis=1)
        # dV_k/dx for every row, shape (n, K, d)
        G = np.einsum("kp,npd->nkd", self.beta[:K, 1:], self.phi.jacobian(X))
        mean_G = np.einsum("nk,nkd->nd", P, G)
        return P[:, [alternative]] * (G[:, alternative, :] - mean_G)

    def log_likelihood(self, X, y, task=None):
        P = self.predict(X, task)
        y = np.asarray(y, dtype=np.intp)
        return float(np.sum(np.log(P[np.arange(len(y)), y])))

    def to_dict(self):
        return {
            "beta": self.beta.tolist(),
            "scope": self.scope.value,
            "K_r": self.K_r,
            "feature_names": list(self.feature_names),
            "phi_degree": self.phi_degree,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "loglik": self.loglik,
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def __repr__(self):
        return f"MnlModel(scope={self.scope.value!r}, K={self.K}, d={self.d})"


class MnlPair(SerializableModel):
    """Separate RP and SP logits (MNL-SPT)."""

    model_type = "mnl-pair"

    def __init__(self, rp, sp):
        self.rp = rp
        self.sp = sp

    def _member(self, task):
        return self.rp if Task(task) is Task.RP else self.sp

    def predict(self, X, task, mask_rp=False):
        return self._member(task).predict(X, task)

    def input_gradient(self, X, task, alternative, mask_rp=False):
        return self._member(task).input_gradient(X, task, alternative)

    def to_dict(self):
        return {"rp": self.rp.to_dict(), "sp": self.sp.to_dict()}

    @classmethod
    def from_dict(cls, data):
        return cls(MnlModel.from_dict(data["rp"]), MnlModel.from_dict(data["sp"]))


def fit_mnl(dataset, scope, opt=None, phi_degree=1):
    """Maximum likelihood multinomial logit on the rows in ``scope``.

    Parameters
    ----------
    dataset : :class:`~mtlchoice.data.Dataset`
    scope : {"rp", "sp", "joint"}
        ``joint`` pools RP and SP rows over the ``K_s`` alternatives; RP rows
        keep their labels in ``0..K_r-1``.
    opt : :class:`OptConfig`, optional
    phi_degree : int
        Degree of the polynomial feature map (1 is the identity).

    Returns
    -------
    :class:`MnlModel`

    Examples
    --------
    >>> import numpy as np
    >>> from mtlchoice.data import Dataset, FeatureSchema
    >>> data = Dataset([0] * 4, np.zeros((4, 1)), [0, 0, 0, 1], 2, 2,
    ...                FeatureSchema(["x"]))
    >>> model = fit_mnl(data, "rp")
    >>> round(float(model.beta[0, 0]), 4)  # log(3/1)
    1.0986
    """
    opt = OptConfig() if opt is None else opt
    scope = Scope(scope)
    if scope is Scope.JOINT:
        X, y, K = dataset.X, dataset.y, dataset.K_s
    else:
        X, y = dataset.rows(scope.value)
        K = dataset.n_alternatives(scope.value)
    if len(y) == 0:
        raise InputError(f"No {scope.value} rows to fit.")
    phi = PolynomialFeatures(dataset.schema.d, phi_degree)
    beta, info = _fit_logit(phi.transform(X), y, K, opt, label=f"MNL-{scope.value}")
    return MnlModel(
        beta, scope, dataset.K_r, dataset.schema.names, phi_degree,
        info.converged, info.n_iter, info.loglik, info.history,
    )


def fit_mnl_spt(dataset, opt=None, phi_degree=1):
    """Separate RP and SP logits."""
    return MnlPair(
        fit_mnl(dataset, Scope.RP, opt, phi_degree),
        fit_mnl(dataset, Scope.SP, opt, phi_degree),
    )


def predict_mnl(model, x, task=None, mask_rp=False):
    """Probability vector (or matrix, for a batch) of an MNL model."""
    x = np.asarray(x, dtype=np.float64)
    P = model.predict(x, task, mask_rp)
    return P[0] if x.ndim == 1 else P
