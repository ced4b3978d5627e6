"""
The joint RP/SP nested logit ("artificial nested logit").

RP and SP choices are two logits whose error variances differ by the scale
factor :math:`\\theta`:

.. math::

  P_r = \\mathrm{softmax}(\\beta_r \\phi(x)), \\qquad
  P_s = \\mathrm{softmax}(\\beta_s \\phi(x) / \\theta).

Coefficients named in ``ties`` are estimated once and used by both tasks
(NL-C). Without ties the likelihood separates into two independent logits
and only the ratio :math:`\\beta_s / \\theta` is identified, so the fit
reports :math:`\\theta = 1` (NL-NC).

Both tasks normalize the last RP alternative to zero, so tied coefficients
describe the same contrast in RP and SP.
"""


import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from mtlchoice.data import Task
from mtlchoice.exceptions import (
    ConfigurationError,
    InputError,
    ScaleDivergenceWarning,
    ShapeError,
)
from mtlchoice.features import PolynomialFeatures
from mtlchoice.mnl import (
    OptConfig,
    _fit_logit,
    _minimize,
    _softmax_nll_grad,
    _with_intercept,
)
from mtlchoice.serialization import SerializableModel

logger = logging.getLogger(__name__)

#: |log theta| beyond which the scale estimate is flagged as diverged
MAX_ABS_LOG_THETA = 10.0


@dataclass(frozen=True)
class Tie:
    """An equality constraint between the RP and SP coefficient of
    ``feature`` for ``alternative``. ``feature`` may be ``"intercept"``."""

    feature: str
    alternative: str

    @classmethod
    def coerce(cls, value):
        if isinstance(value, cls):
            return value
        feature, alternative = value
        return cls(str(feature), str(alternative))


def resolve_ties(ties, coef_names, alternatives, K_r, av_features=()):
    """Translate ties into ``(row, column)`` coefficient positions.

    Raises :class:`~mtlchoice.exceptions.ConfigurationError` for unknown or
    untieable addresses: SP-only alternatives, the normalized base
    alternative, and coefficients involving AV-specific features.
    """
    positions = []
    for tie in map(Tie.coerce, ties):
        if tie.feature not in coef_names:
            raise ConfigurationError("ties", f"unknown coefficient '{tie.feature}'")
        if any(f in av_features for f in tie.feature.replace("^2", "").split("*")):
            raise ConfigurationError(
                "ties", f"AV-specific coefficient '{tie.feature}' cannot be tied"
            )
        if tie.alternative not in alternatives:
            raise ConfigurationError("ties", f"unknown alternative '{tie.alternative}'")
        row = list(alternatives).index(tie.alternative)
        if row >= K_r:
            raise ConfigurationError(
                "ties", f"SP-only alternative '{tie.alternative}' cannot be tied"
            )
        if row == K_r - 1:
            raise ConfigurationError(
                "ties",
                f"'{tie.alternative}' is the normalized base alternative and "
                "has no free coefficients",
            )
        pos = (row, coef_names.index(tie.feature))
        if pos not in positions:
            positions.append(pos)
    return positions


class NlModel(SerializableModel):
    """A fitted joint RP/SP nested logit.

    Parameters
    ----------
    beta_r : array-like, shape (K_r, p + 1)
    beta_s : array-like, shape (K_s, p + 1)
    log_theta : float
    ties : sequence of :class:`Tie`
    alternatives : sequence of str
        The ``K_s`` alternatives; the first ``K_r`` are the RP ones.
    feature_names : sequence of str
    av_features : sequence of str
    phi_degree : int
    theta_identified : bool
        False when the model was fitted without ties.
    """

    model_type = "nl"

    def __init__(
        self, beta_r, beta_s, log_theta, ties, alternatives, feature_names,
        av_features=(), phi_degree=1, theta_identified=True, converged=True,
        n_iter=0, loglik=float("nan"), history=(), scale_diverged=False,
    ):
        self.beta_r = np.array(beta_r, dtype=np.float64)
        self.beta_s = np.array(beta_s, dtype=np.float64)
        self.log_theta = float(log_theta)
        self.ties = tuple(map(Tie.coerce, ties))
        self.alternatives = tuple(alternatives)
        self.feature_names = tuple(feature_names)
        self.av_features = tuple(av_features)
        self.phi = PolynomialFeatures(len(self.feature_names), phi_degree)
        p1 = self.phi.n_features + 1
        for name, beta, K in (
            ("beta_r", self.beta_r, self.beta_r.shape[0]),
            ("beta_s", self.beta_s, len(self.alternatives)),
        ):
            if beta.shape != (K, p1):
                raise ShapeError(0, p1, beta.shape[-1])
        self.theta_identified = bool(theta_identified)
        self.converged = bool(converged)
        self.n_iter = int(n_iter)
        self.loglik = float(loglik)
        self.history = tuple(float(h) for h in history)
        self.scale_diverged = bool(scale_diverged)

    @property
    def theta(self):
        return float(np.exp(self.log_theta))

    @property
    def K_r(self):
        return self.beta_r.shape[0]

    @property
    def K_s(self):
        return self.beta_s.shape[0]

    @property
    def d(self):
        return len(self.feature_names)

    @property
    def phi_degree(self):
        return self.phi.degree

    @property
    def coef_names(self):
        return ["intercept"] + self.phi.names(self.feature_names)

    def _scaled_beta(self, task):
        if Task(task) is Task.RP:
            return self.beta_r
        return self.beta_s / self.theta

    def utilities(self, X, task):
        """Utilities of ``task`` divided by the task's scale."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.d:
            raise ShapeError(0, self.d, X.shape[1])
        beta = self._scaled_beta(task)
        return beta[:, 0] + self.phi.transform(X) @ beta[:, 1:].T

    def predict(self, X, task, mask_rp=False):
        """RP rows: ``softmax(beta_r x)``; SP rows: ``softmax(beta_s x / theta)``."""
        return softmax(self.utilities(X, task), axis=1)

    def input_gradient(self, X, task, alternative, mask_rp=False):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        P = self.predict(X, task)
        beta = self._scaled_beta(task)
        G = np.einsum("kp,npd->nkd", beta[:, 1:], self.phi.jacobian(X))
        mean_G = np.einsum("nk,nkd->nd", P, G)
        return P[:, [alternative]] * (G[:, alternative, :] - mean_G)

    def rescale(self, c):
        """The observationally equivalent model with ``beta_s * c`` and ``theta * c``."""
        if not c > 0:
            raise InputError(f"Rescaling factor must be positive, received {c}.")
        out = NlModel.from_dict(self.to_dict())
        out.beta_s = self.beta_s * c
        out.log_theta = self.log_theta + float(np.log(c))
        return out

    def with_theta(self, theta):
        """A copy with the scale set to ``theta`` and all coefficients kept."""
        out = NlModel.from_dict(self.to_dict())
        out.log_theta = float(np.log(theta))
        return out

    def to_dict(self):
        return {
            "beta_r": self.beta_r.tolist(),
            "beta_s": self.beta_s.tolist(),
            "log_theta": self.log_theta,
            "ties": [[t.feature, t.alternative] for t in self.ties],
            "alternatives": list(self.alternatives),
            "feature_names": list(self.feature_names),
            "av_features": list(self.av_features),
            "phi_degree": self.phi_degree,
            "theta_identified": self.theta_identified,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "loglik": self.loglik,
            "history": list(self.history),
            "scale_diverged": self.scale_diverged,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def __repr__(self):
        return (
            f"NlModel(K_r={self.K_r}, K_s={self.K_s}, theta={self.theta:.4g}, "
            f"ties={len(self.ties)})"
        )


def nl_loglik(model, rp_data, sp_data):
    """Joint log-likelihood of the RP rows of ``rp_data`` and the SP rows of
    ``sp_data``."""
    total = 0.0
    for task, data in ((Task.RP, rp_data), (Task.SP, sp_data)):
        X, y = data.rows(task)
        if len(y):
            logp = np.log(model.predict(X, task)[np.arange(len(y)), y])
            total += float(logp.sum())
    return total


def predict_nl(model, x, task):
    """Probability vector (or matrix, for a batch) of an NL model."""
    x = np.asarray(x, dtype=np.float64)
    P = model.predict(x, task)
    return P[0] if x.ndim == 1 else P


def fit_nl(rp_data, sp_data, ties=(), opt=None, phi_degree=1):
    """Maximum likelihood joint RP/SP nested logit.

    Parameters
    ----------
    rp_data, sp_data : :class:`~mtlchoice.data.Dataset`
        The RP rows of ``rp_data`` and the SP rows of ``sp_data`` are used;
        the same dataset may be passed twice.
    ties : sequence of (feature, alternative)
        Coefficients shared by both tasks. Empty ties give NL-NC.
    opt : :class:`~mtlchoice.mnl.OptConfig`, optional
    phi_degree : int

    Returns
    -------
    :class:`NlModel`
    """
    opt = OptConfig() if opt is None else opt
    X_r, y_r = rp_data.rows(Task.RP)
    X_s, y_s = sp_data.rows(Task.SP)
    if len(y_r) == 0 or len(y_s) == 0:
        raise InputError("The nested logit needs both RP and SP rows.")
    schema = sp_data.schema
    K_r, K_s = sp_data.K_r, sp_data.K_s
    base = K_r - 1
    phi = PolynomialFeatures(schema.d, phi_degree)
    coef_names = ["intercept"] + phi.names(schema.names)
    positions = resolve_ties(ties, coef_names, sp_data.alternatives, K_r, schema.av_specific)
    Z_r, Z_s = phi.transform(X_r), phi.transform(X_s)
    common = dict(
        alternatives=sp_data.alternatives,
        feature_names=schema.names,
        av_features=schema.av_specific,
        phi_degree=phi_degree,
    )

    if not positions:
        beta_r, info_r = _fit_logit(Z_r, y_r, K_r, opt, base, "NL-NC rp")
        beta_s, info_s = _fit_logit(Z_s, y_s, K_s, opt, base, "NL-NC sp")
        return NlModel(
            beta_r, beta_s, 0.0, (), theta_identified=False,
            converged=info_r.converged and info_s.converged,
            n_iter=max(info_r.n_iter, info_s.n_iter),
            loglik=info_r.loglik + info_s.loglik,
            **common,
        )

    p1 = phi.n_features + 1
    Z1_r, Z1_s = _with_intercept(Z_r), _with_intercept(Z_s)
    n_r, n_s = len(y_r), len(y_s)
    N = n_r + n_s
    r_free = [(k, c) for k in range(K_r) if k != base for c in range(p1)]
    s_free = [
        (k, c) for k in range(K_s) if k != base for c in range(p1)
        if (k, c) not in positions
    ]
    r_rows, r_cols = map(np.array, zip(*r_free))
    s_rows, s_cols = map(np.array, zip(*s_free))
    t_rows, t_cols = map(np.array, zip(*positions))
    nr, ns = len(r_free), len(s_free)

    def _unpack(x):
        B_r = np.zeros((K_r, p1))
        B_r[r_rows, r_cols] = x[:nr]
        B_s = np.zeros((K_s, p1))
        B_s[s_rows, s_cols] = x[nr : nr + ns]
        B_s[t_rows, t_cols] = B_r[t_rows, t_cols]
        return B_r, B_s, x[-1]

    def _objective(x):
        B_r, B_s, log_theta = _unpack(x)
        theta = np.exp(log_theta)
        nll_r, dB_r = _softmax_nll_grad(B_r, Z1_r, y_r)
        nll_s, dA = _softmax_nll_grad(B_s / theta, Z1_s, y_s)
        dB_s = dA / theta
        dlog_theta = -float(np.sum(dA * B_s)) / theta
        w_r, w_s = n_r / N, n_s / N
        dR = w_r * dB_r
        dR[t_rows, t_cols] += w_s * dB_s[t_rows, t_cols]
        grad = np.concatenate(
            [dR[r_rows, r_cols], w_s * dB_s[s_rows, s_cols], [w_s * dlog_theta]]
        )
        return w_r * nll_r + w_s * nll_s, grad

    x, converged, nit, history = _minimize(_objective, np.zeros(nr + ns + 1), opt, "NL-C")
    beta_r, beta_s, log_theta = _unpack(x)
    diverged = abs(log_theta) > MAX_ABS_LOG_THETA
    if diverged:
        warnings.warn(
            f"The estimated log scale factor {log_theta:.3g} lies outside "
            f"[-{MAX_ABS_LOG_THETA}, {MAX_ABS_LOG_THETA}]; the fit is flagged.",
            ScaleDivergenceWarning,
            stacklevel=2,
        )
    logger.debug("NL-C: theta=%.6g after %d iterations", np.exp(log_theta), nit)
    return NlModel(
        beta_r, beta_s, log_theta, ties, converged=converged, n_iter=nit,
        loglik=-N * history[-1], history=tuple(-N * h for h in history),
        scale_diverged=diverged, **common,
    )
