"""
Dense layers, softmax and cross-entropy primitives, and analytic
reverse-mode gradients of the multitask empirical risk.

All arithmetic is carried out in 64-bit floats. The multitask risk handled
here is

.. math::

  R = \\bar{\\ell}_r + \\lambda_0 \\bar{\\ell}_s + \\lambda_1 ||w_0||^2
      + \\lambda_2 ||w_s||^2 + \\lambda_3 ||\\tilde{w}_s - w_r||^2

where :math:`\\bar{\\ell}_r` and :math:`\\bar{\\ell}_s` are mean
cross-entropies and the SP logits are divided by the temperature
:math:`T = e^{\\tau}`.
"""


from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.special import logsumexp

from mtlchoice.exceptions import DomainError, InputError, ShapeError

#: ReLU activation
RELU = "relu"
#: identity activation, used by output layers
LINEAR = "linear"

#: probabilities are clamped to this value before taking logarithms
EPS = 1e-12
LOG_EPS = float(np.log(EPS))


@dataclass
class DenseLayer:
    """An affine map followed by an activation.

    Parameters
    ----------
    W : array-like, shape (out_dim, in_dim)
        Weight matrix.
    b : array-like, shape (out_dim,)
        Bias vector.
    activation : str
        Either ``"relu"`` or ``"linear"``.

    Examples
    --------
    >>> layer = DenseLayer([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0], "relu")
    >>> layer.in_dim, layer.out_dim
    (2, 2)
    """

    W: np.ndarray
    b: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        self.W = np.array(self.W, dtype=np.float64, ndmin=2)
        self.b = np.array(self.b, dtype=np.float64, ndmin=1)
        if self.activation not in (RELU, LINEAR):
            raise InputError(f"Unknown activation '{self.activation}'.")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise InputError(
                f"Bias of shape {self.b.shape} does not match weights of "
                f"shape {self.W.shape}."
            )
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise InputError("Layer parameters must be finite.")

    @property
    def in_dim(self):
        return self.W.shape[1]

    @property
    def out_dim(self):
        return self.W.shape[0]

    def copy(self):
        return DenseLayer(self.W.copy(), self.b.copy(), self.activation)


def forward_cache(X, layers):
    """Evaluate a layer stack on a batch and keep what backpropagation needs.

    Returns the stack output together with a cache of the input and the
    pre-activation of every layer.
    """
    inputs, pre = [], []
    A = X
    for i, layer in enumerate(layers):
        if A.shape[1] != layer.in_dim:
            raise ShapeError(i, layer.in_dim, A.shape[1])
        Z = A @ layer.W.T + layer.b
        inputs.append(A)
        pre.append(Z)
        A = np.maximum(Z, 0.0) if layer.activation == RELU else Z
    return A, (inputs, pre)


def stack_backward(dA, layers, cache):
    """Backpropagate ``dA`` (gradient w.r.t. the stack output) through a stack.

    Returns the per-layer ``[dW, db]`` pairs and the gradient w.r.t. the
    stack input.
    """
    inputs, pre = cache
    grads = [None] * len(layers)
    for i in reversed(range(len(layers))):
        layer = layers[i]
        dZ = dA * (pre[i] > 0.0) if layer.activation == RELU else dA
        grads[i] = [dZ.T @ inputs[i], dZ.sum(axis=0)]
        dA = dZ @ layer.W
    return grads, dA


def forward_stack(x, layers):
    """Compose the affine and activation maps of ``layers`` on ``x``.

    Parameters
    ----------
    x : array-like, shape (d,) or (n, d)
        A single input vector or a batch of row vectors.
    layers : list of :class:`DenseLayer`
        The stack, applied first to last. The last layer of a model emits
        raw utilities.

    Examples
    --------
    >>> layer = DenseLayer([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0], "relu")
    >>> forward_stack([1.0, 1.0], [layer])
    array([1., 0.])
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    out, _ = forward_cache(np.atleast_2d(x), layers)
    return out[0] if single else out


def _check_temperature(T):
    if not (np.isfinite(T) and T > 0):
        raise DomainError("temperature", T, "(0, inf)")


def softmax_t(v, T=1.0):
    """Softmax of ``v / T`` along the last axis.

    The maximum is subtracted before exponentiating, so large logits do not
    overflow.

    Examples
    --------
    >>> softmax_t([0.0, 0.0, 0.0, 0.0, 0.0])
    array([0.2, 0.2, 0.2, 0.2, 0.2])
    >>> softmax_t([1.0, 2.0]).round(4)
    array([0.2689, 0.7311])
    """
    _check_temperature(T)
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise InputError("Logits must be finite.")
    z = v / T
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_t(v, T=1.0):
    """Logarithm of :func:`softmax_t`, computed without forming the ratio."""
    _check_temperature(T)
    z = np.asarray(v, dtype=np.float64) / T
    return z - logsumexp(z, axis=-1, keepdims=True)


def one_hot(labels, K):
    """Encode integer labels as rows of a ``K`` column indicator matrix."""
    labels = np.asarray(labels, dtype=np.intp)
    Y = np.zeros((labels.size, K))
    Y[np.arange(labels.size), labels] = 1.0
    return Y


def cross_entropy(p, y):
    """Cross-entropy of one-hot labels ``y`` under probabilities ``p``.

    Probabilities are clamped at ``EPS = 1e-12`` before the logarithm. Batches
    of row vectors give one value per row.

    Examples
    --------
    >>> round(float(cross_entropy([0.2] * 5, [0, 0, 1, 0, 0])), 4)
    1.6094
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise InputError(
            f"Probabilities of shape {p.shape} do not match labels of shape {y.shape}."
        )
    if not (np.all((y == 0.0) | (y == 1.0)) and np.all(y.sum(axis=-1) == 1.0)):
        raise InputError("Labels must be one-hot vectors.")
    return -(y * np.log(np.clip(p, EPS, 1.0))).sum(axis=-1)


def mean_risk(logits, labels, T=1.0):
    """Mean clamped cross-entropy of a batch and its gradients.

    Returns ``(risk, dlogits, dlog_T)``, the gradients being taken w.r.t. the
    raw logits and w.r.t. ``log T``. Rows whose log-probability is clamped
    contribute no gradient.
    """
    n = len(labels)
    rows = np.arange(n)
    z = logits / T
    logp = z - logsumexp(z, axis=1, keepdims=True)
    lp = logp[rows, labels]
    risk = -np.maximum(lp, LOG_EPS).mean()
    dz = np.exp(logp)
    dz[rows, labels] -= 1.0
    dz[lp <= LOG_EPS] = 0.0
    dz /= n
    return risk, dz / T, -float((dz * z).sum())


@dataclass(frozen=True)
class LossSpec:
    """Which terms of the multitask risk apply, and their weights.

    A term whose batch is empty is omitted regardless of its weight.
    """

    lambda0: float = 1.0
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0
    learn_temperature: bool = True


@dataclass(frozen=True)
class Batch:
    """RP and SP rows of one optimization step. Either side may be empty."""

    X_rp: np.ndarray
    y_rp: np.ndarray
    X_sp: np.ndarray
    y_sp: np.ndarray

    @classmethod
    def from_arrays(cls, X_rp=None, y_rp=None, X_sp=None, y_sp=None, d=None):
        if d is None:
            d = (X_rp if X_rp is not None else X_sp).shape[1]

        def _pair(X, y):
            if X is None:
                return np.zeros((0, d)), np.zeros(0, dtype=np.intp)
            return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.intp)

        return cls(*_pair(X_rp, y_rp), *_pair(X_sp, y_sp))


@dataclass
class LossComponents:
    total: float = 0.0
    rp_risk: float = 0.0
    sp_risk: float = 0.0
    l1: float = 0.0
    l2: float = 0.0
    l3: float = 0.0

    def as_dict(self):
        return {
            "total": self.total,
            "rp_risk": self.rp_risk,
            "sp_risk": self.sp_risk,
            "l1": self.l1,
            "l2": self.l2,
            "l3": self.l3,
        }


@dataclass
class GradientTape:
    """Gradients laid out exactly like the parameters of a multitask model.

    ``shared``, ``rp_head`` and ``sp_head`` hold one ``[dW, db]`` pair per
    layer; ``log_T`` is the derivative w.r.t. the log-temperature.
    """

    shared: List[List[np.ndarray]] = field(default_factory=list)
    rp_head: List[List[np.ndarray]] = field(default_factory=list)
    sp_head: List[List[np.ndarray]] = field(default_factory=list)
    log_T: float = 0.0

    @classmethod
    def zeros_like(cls, model):
        def _zeros(layers):
            return [[np.zeros_like(ly.W), np.zeros_like(ly.b)] for ly in layers]

        return cls(_zeros(model.shared), _zeros(model.rp_head), _zeros(model.sp_head))

    def arrays(self):
        """Gradient arrays in the order of ``model.parameter_arrays()``."""
        out = []
        for group in (self.shared, self.rp_head, self.sp_head):
            for dW, db in group:
                out.extend((dW, db))
        return out

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()] + [[self.log_T]])


def aligned_slices(model):
    """Row and column selections pairing SP-head weights with RP-head weights.

    Hidden task-specific layers are matched elementwise. In the output layer
    the first ``K_r`` SP rows are matched with the RP rows, so the row of the
    SP-only alternative is left out. A head layer that reads the raw input
    (no shared layers in front of it) also leaves out the columns of
    AV-specific features.
    """
    slices = []
    for i, (rp_layer, sp_layer) in enumerate(zip(model.rp_head, model.sp_head)):
        rows = slice(0, rp_layer.out_dim)
        if i == 0 and not model.shared and model.av_columns:
            cols = np.array(
                [j for j in range(sp_layer.in_dim) if j not in set(model.av_columns)],
                dtype=np.intp,
            )
        else:
            cols = slice(None)
        slices.append((rows, cols))
    return slices


def _penalties(model, spec, tape):
    l1 = l2 = l3 = 0.0
    if spec.lambda1:
        for layer, g in zip(model.shared, tape.shared):
            l1 += spec.lambda1 * float(np.sum(layer.W**2))
            g[0] += 2.0 * spec.lambda1 * layer.W
    if spec.lambda2:
        for layer, g in zip(model.sp_head, tape.sp_head):
            l2 += spec.lambda2 * float(np.sum(layer.W**2))
            g[0] += 2.0 * spec.lambda2 * layer.W
    if spec.lambda3:
        for i, (rows, cols) in enumerate(aligned_slices(model)):
            diff = model.sp_head[i].W[rows][:, cols] - model.rp_head[i].W[:, cols]
            l3 += spec.lambda3 * float(np.sum(diff**2))
            dsp = np.zeros_like(model.sp_head[i].W)
            dsp[rows, cols] = 2.0 * spec.lambda3 * diff
            tape.sp_head[i][0] += dsp
            tape.rp_head[i][0][:, cols] -= 2.0 * spec.lambda3 * diff
    return l1, l2, l3


def _accumulate(target, grads, weight=1.0):
    for t, g in zip(target, grads):
        t[0] += weight * g[0]
        t[1] += weight * g[1]


def _task_term(model, X, y, head, T, weight, tape_head, tape):
    H, trunk_cache = forward_cache(X, model.shared)
    V, head_cache = forward_cache(H, head)
    risk, dV, dlog_T = mean_risk(V, y, T)
    head_grads, dH = stack_backward(dV, head, head_cache)
    _accumulate(tape_head, head_grads, weight)
    trunk_grads, _ = stack_backward(dH, model.shared, trunk_cache)
    _accumulate(tape.shared, trunk_grads, weight)
    return risk, dlog_T


def loss_and_grad(model, batch, spec):
    """Multitask risk of ``model`` on ``batch`` and its full gradient.

    Parameters
    ----------
    model : :class:`mtlchoice.mtldnn.MtldnnModel`
        Any object exposing ``shared``, ``rp_head``, ``sp_head``, ``log_T``
        and ``av_columns``. A model with empty heads is a pooled network
        whose last shared layer emits ``K_s`` utilities; its risk is the
        pooled mean cross-entropy at ``T = 1``.
    batch : :class:`Batch`
    spec : :class:`LossSpec`

    Returns
    -------
    (:class:`LossComponents`, :class:`GradientTape`)
    """
    tape = GradientTape.zeros_like(model)
    comps = LossComponents()
    n_rp, n_sp = len(batch.y_rp), len(batch.y_sp)
    if not model.rp_head:
        n = n_rp + n_sp
        if n:
            X = np.vstack([batch.X_rp, batch.X_sp])
            y = np.concatenate([batch.y_rp, batch.y_sp])
            V, cache = forward_cache(X, model.shared)
            _, dV, _ = mean_risk(V, y)
            grads, _ = stack_backward(dV, model.shared, cache)
            _accumulate(tape.shared, grads)
            row_loss = -np.maximum(log_softmax_t(V)[np.arange(n), y], LOG_EPS)
            comps.rp_risk = float(row_loss[:n_rp].sum() / n)
            comps.sp_risk = float(row_loss[n_rp:].sum() / n)
    else:
        if n_rp:
            comps.rp_risk, _ = _task_term(
                model, batch.X_rp, batch.y_rp, model.rp_head, 1.0, 1.0,
                tape.rp_head, tape,
            )
        if n_sp:
            risk, dlog_T = _task_term(
                model, batch.X_sp, batch.y_sp, model.sp_head,
                float(np.exp(model.log_T)), spec.lambda0, tape.sp_head, tape,
            )
            comps.sp_risk = spec.lambda0 * risk
            if spec.learn_temperature:
                tape.log_T = spec.lambda0 * dlog_T
    comps.l1, comps.l2, comps.l3 = _penalties(model, spec, tape)
    comps.total = comps.rp_risk + comps.sp_risk + comps.l1 + comps.l2 + comps.l3
    return comps, tape


def total_loss(model, batch, spec):
    """Scalar multitask risk; convenient as a finite-difference target."""
    comps, _ = loss_and_grad(model, batch, spec)
    return comps.total


def backward(model, batch, spec):
    """Analytic gradient of the multitask risk as a :class:`GradientTape`."""
    return loss_and_grad(model, batch, spec)[1]


def finite_diff_grad(loss_fn, params, h=1e-5):
    """Central-difference gradient of ``loss_fn`` at ``params``.

    Parameters
    ----------
    loss_fn : callable
        Maps parameters to a scalar.
    params : float, ndarray or model
        Plain numbers and arrays give a gradient of the same shape. A model
        exposing ``copy()``, ``parameter_arrays()`` and ``log_T`` gives a
        :class:`GradientTape`.
    h : float
        Step size, must be positive.

    Examples
    --------
    >>> round(finite_diff_grad(lambda t: t**2, 3.0), 6)
    6.0
    """
    if not h > 0:
        raise DomainError("finite-difference step", h, "(0, inf)")
    if np.isscalar(params) or isinstance(params, np.ndarray):
        theta = np.array(params, dtype=np.float64)
        grad = np.zeros_like(theta)
        for idx in np.ndindex(theta.shape):
            orig = theta[idx]
            theta[idx] = orig + h
            fp = float(loss_fn(theta))
            theta[idx] = orig - h
            fm = float(loss_fn(theta))
            theta[idx] = orig
            grad[idx] = (fp - fm) / (2.0 * h)
        return float(grad) if grad.ndim == 0 else grad

    work = params.copy()
    tape = GradientTape.zeros_like(work)
    for arr, g in zip(work.parameter_arrays(), tape.arrays()):
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            fp = float(loss_fn(work))
            arr[idx] = orig - h
            fm = float(loss_fn(work))
            arr[idx] = orig
            g[idx] = (fp - fm) / (2.0 * h)
    orig = work.log_T
    work.log_T = orig + h
    fp = float(loss_fn(work))
    work.log_T = orig - h
    fm = float(loss_fn(work))
    work.log_T = orig
    tape.log_T = (fp - fm) / (2.0 * h)
    return tape

