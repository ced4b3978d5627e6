"""
Multitask feedforward networks for joint RP/SP choice data.

``M1`` shared ReLU layers feed two task-specific heads of ``M2`` layers each.
The RP head emits ``K_r`` utilities and uses a plain softmax; the SP head
emits ``K_s`` utilities and divides them by a learned temperature before the
softmax. Two boundary configurations are covered by the same code:

* ``M2 = 0`` (DNN-JOINT): a single pooled network whose last shared layer
  emits ``K_s`` utilities for every row;
* ``M1 = 0`` and ``lambda3 = 0`` (DNN-SPT): two decoupled single-task
  networks.
"""


import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd

from mtlchoice.core import (
    LINEAR,
    RELU,
    Batch,
    DenseLayer,
    LossSpec,
    aligned_slices,
    forward_cache,
    loss_and_grad,
    softmax_t,
    stack_backward,
)
from mtlchoice.data import Task
from mtlchoice.exceptions import (
    ConfigurationError,
    ShapeError,
    TrainingDivergedError,
)
from mtlchoice.optim import Adam
from mtlchoice.serialization import SerializableModel

logger = logging.getLogger(__name__)

MAX_DEPTH = 5

#: |log T| beyond which the temperature overflows
MAX_ABS_LOG_T = 700.0

#: model kinds a :class:`HyperConfig` can describe
MTLDNN = "mtldnn"
DNN_SPT = "dnn-spt"
DNN_JOINT = "dnn-joint"


@dataclass(frozen=True)
class HyperConfig:
    """Hyperparameters of one multitask network.

    Parameters
    ----------
    M1, M2 : int
        Number of shared and task-specific layers, each in ``0..5`` with
        ``M1 + M2 >= 1``.
    width : int
        Hidden units per layer.
    lambda0 : float
        Weight of the SP risk; fixed at 1.
    lambda1, lambda2, lambda3 : float
        Penalties on the shared weights, on the SP-head weights and on the
        distance between the aligned SP-head and RP-head weights.
    n_iter, batch : int
        Optimizer steps and rows drawn from each task per step.
    lr : float
        Adam learning rate.
    seed : int

    Examples
    --------
    >>> HyperConfig(M1=3, M2=2, width=25).kind
    'mtldnn'
    >>> HyperConfig(M1=5, M2=0).kind
    'dnn-joint'
    """

    M1: int = 3
    M2: int = 2
    width: int = 100
    lambda0: float = 1.0
    lambda1: float = 1e-2
    lambda2: float = 1e-4
    lambda3: float = 1e-2
    n_iter: int = 20000
    batch: int = 200
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        for name in ("M1", "M2"):
            value = getattr(self, name)
            if int(value) != value or not 0 <= value <= MAX_DEPTH:
                raise ConfigurationError(name, f"must be an integer in [0, {MAX_DEPTH}]", value)
        if self.M1 + self.M2 < 1:
            raise ConfigurationError("M1+M2", "at least one layer is required", self.M1 + self.M2)
        if self.lambda0 != 1.0:
            raise ConfigurationError("lambda0", "is fixed at 1", self.lambda0)
        for name in ("lambda1", "lambda2", "lambda3"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ConfigurationError(name, "must be a nonnegative number", value)
        for name in ("width", "n_iter", "batch"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(name, "must be a positive integer", value)
        if not self.lr > 0:
            raise ConfigurationError("lr", "must be positive", self.lr)

    @property
    def is_joint(self):
        return self.M2 == 0

    @property
    def kind(self):
        if self.is_joint:
            return DNN_JOINT
        if self.M1 == 0 and self.lambda3 == 0:
            return DNN_SPT
        return MTLDNN

    def loss_spec(self):
        return LossSpec(
            self.lambda0, self.lambda1, self.lambda2, self.lambda3,
            learn_temperature=not self.is_joint,
        )

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def _layers_to_list(layers):
    return [
        {"W": ly.W.tolist(), "b": ly.b.tolist(), "activation": ly.activation}
        for ly in layers
    ]


def _layers_from_list(data):
    return [DenseLayer(ly["W"], ly["b"], ly["activation"]) for ly in data]


class MtldnnModel(SerializableModel):
    """Parameters of a multitask network.

    ``shared`` maps the inputs to a common representation, ``rp_head`` and
    ``sp_head`` map it to RP and SP utilities, and ``log_T`` is the logarithm
    of the SP temperature. A model with empty heads is a pooled network.
    """

    model_type = "mtldnn"

    def __init__(self, shared, rp_head, sp_head, log_T=0.0, K_r=None, K_s=None,
                 av_columns=(), hyper=None):
        self.shared = list(shared)
        self.rp_head = list(rp_head)
        self.sp_head = list(sp_head)
        self.log_T = float(log_T)
        self.av_columns = tuple(int(c) for c in av_columns)
        self.hyper = hyper
        if self.rp_head:
            K_r = self.rp_head[-1].out_dim if K_r is None else K_r
            K_s = self.sp_head[-1].out_dim if K_s is None else K_s
        elif K_s is None:
            K_s = self.shared[-1].out_dim
        self.K_r = int(K_r if K_r is not None else K_s)
        self.K_s = int(K_s)
        self._check_chain()

    def _check_chain(self):
        stacks = [self.shared] if self.is_joint else [
            self.shared + self.rp_head, self.shared + self.sp_head
        ]
        for stack in stacks:
            for i in range(1, len(stack)):
                if stack[i].in_dim != stack[i - 1].out_dim:
                    raise ShapeError(i, stack[i].in_dim, stack[i - 1].out_dim)

    @property
    def is_joint(self):
        return not self.rp_head

    @property
    def d(self):
        return (self.shared or self.rp_head)[0].in_dim

    @property
    def T(self):
        return float(np.exp(self.log_T))

    @property
    def kind(self):
        if self.hyper is not None:
            return self.hyper.kind
        if self.is_joint:
            return DNN_JOINT
        return DNN_SPT if not self.shared else MTLDNN

    def copy(self):
        return MtldnnModel(
            [ly.copy() for ly in self.shared],
            [ly.copy() for ly in self.rp_head],
            [ly.copy() for ly in self.sp_head],
            self.log_T, self.K_r, self.K_s, self.av_columns, self.hyper,
        )

    def parameter_arrays(self):
        """Weight and bias arrays, shared layers first, then RP and SP heads."""
        out = []
        for layer in self.shared + self.rp_head + self.sp_head:
            out.extend((layer.W, layer.b))
        return out

    @property
    def n_parameters(self):
        count = sum(a.size for a in self.parameter_arrays())
        return count if self.is_joint else count + 1

    def _path(self, task, mask_rp=False):
        """Layers from the input to the utilities of ``task``, the temperature
        and the number of alternatives predicted."""
        task = Task(task)
        if self.is_joint:
            K = self.K_r if task is Task.RP and mask_rp else self.K_s
            return self.shared, 1.0, K
        if task is Task.RP:
            return self.shared + self.rp_head, 1.0, self.K_r
        return self.shared + self.sp_head, self.T, self.K_s

    def utilities(self, X, task):
        layers, _, _ = self._path(task)
        V, _ = forward_cache(np.atleast_2d(np.asarray(X, dtype=np.float64)), layers)
        return V

    def predict(self, X, task, mask_rp=False):
        """Choice probabilities of the rows of ``X``.

        RP rows use ``T = 1``; SP rows use the learned temperature. A pooled
        model predicts RP rows over all ``K_s`` alternatives unless
        ``mask_rp`` is set.
        """
        layers, T, K = self._path(task, mask_rp)
        V, _ = forward_cache(np.atleast_2d(np.asarray(X, dtype=np.float64)), layers)
        return softmax_t(V[:, :K], T)

    def input_gradient(self, X, task, alternative, mask_rp=False):
        """Derivative of the probability of ``alternative`` w.r.t. each input."""
        layers, T, K = self._path(task, mask_rp)
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        V, cache = forward_cache(X, layers)
        P = softmax_t(V[:, :K], T)
        dV = np.zeros_like(V)
        dV[:, :K] = -P[:, [alternative]] * P / T
        dV[:, alternative] += P[:, alternative] / T
        _, dX = stack_backward(dV, layers, cache)
        return dX

    def to_dict(self):
        return {
            "shared": _layers_to_list(self.shared),
            "rp_head": _layers_to_list(self.rp_head),
            "sp_head": _layers_to_list(self.sp_head),
            "log_T": self.log_T,
            "K_r": self.K_r,
            "K_s": self.K_s,
            "av_columns": list(self.av_columns),
            "hyper": None if self.hyper is None else self.hyper.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        hyper = data.get("hyper")
        return cls(
            _layers_from_list(data["shared"]),
            _layers_from_list(data["rp_head"]),
            _layers_from_list(data["sp_head"]),
            data["log_T"],
            data["K_r"],
            data["K_s"],
            data.get("av_columns", ()),
            None if hyper is None else HyperConfig.from_dict(hyper),
        )

    def __repr__(self):
        return (
            f"MtldnnModel(kind={self.kind!r}, shared={len(self.shared)}, "
            f"heads={len(self.rp_head)}, K_r={self.K_r}, K_s={self.K_s})"
        )


def _he_layer(rng, in_dim, out_dim, activation):
    W = rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(out_dim, in_dim))
    return DenseLayer(W, np.zeros(out_dim), activation)


def _chain(rng, dims, last_linear):
    layers = []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        linear = last_linear and i == len(dims) - 2
        layers.append(_he_layer(rng, a, b, LINEAR if linear else RELU))
    return layers


def build(hyper, d, K_r, K_s, av_columns=()):
    """Initialize a network for ``hyper``.

    Weights are drawn from ``Normal(0, 2 / in_dim)``, biases are zero and the
    temperature is 1. Shared layers, the RP head and the SP head use
    separate generators seeded from ``hyper.seed``, so a head's initial
    weights do not depend on the rest of the architecture.

    Examples
    --------
    >>> model = build(HyperConfig(M1=3, M2=2, width=25), d=20, K_r=4, K_s=5)
    >>> [layer.W.shape for layer in model.shared + model.rp_head]
    [(25, 20), (25, 25), (25, 25), (25, 25), (4, 25)]
    """
    if min(d, K_r, K_s) < 1:
        raise ConfigurationError("dimensions", "must be positive", (d, K_r, K_s))
    seed = int(hyper.seed)
    rng_shared = np.random.default_rng([seed, 0])
    if hyper.is_joint:
        dims = [d] + [hyper.width] * (hyper.M1 - 1) + [K_s]
        shared = _chain(rng_shared, dims, last_linear=True)
        return MtldnnModel(shared, [], [], 0.0, K_r, K_s, av_columns, hyper)
    shared = _chain(rng_shared, [d] + [hyper.width] * hyper.M1, last_linear=False)
    head_in = hyper.width if hyper.M1 else d
    hidden = [hyper.width] * (hyper.M2 - 1)
    rp_head = _chain(np.random.default_rng([seed, 1]), [head_in] + hidden + [K_r], True)
    sp_head = _chain(np.random.default_rng([seed, 2]), [head_in] + hidden + [K_s], True)
    return MtldnnModel(shared, rp_head, sp_head, 0.0, K_r, K_s, av_columns, hyper)


def _as_pair(batch, d):
    if batch is None:
        return None, None
    X, y = batch
    return np.atleast_2d(np.asarray(X, dtype=np.float64)).reshape(-1, d), y


def loss(model, rp_batch, sp_batch, hyper):
    """Regularized multitask risk of ``model``.

    ``rp_batch`` and ``sp_batch`` are ``(X, y)`` pairs; either may be None or
    empty, in which case its risk term is omitted.

    Returns
    -------
    :class:`~mtlchoice.core.LossComponents`
    """
    X_rp, y_rp = _as_pair(rp_batch, model.d)
    X_sp, y_sp = _as_pair(sp_batch, model.d)
    batch = Batch.from_arrays(X_rp, y_rp, X_sp, y_sp, d=model.d)
    comps, _ = loss_and_grad(model, batch, hyper.loss_spec())
    return comps


def aligned_distance(model):
    """``||w~_s - w_r||``: distance between the aligned SP-head and RP-head
    weights."""
    total = 0.0
    for i, (rows, cols) in enumerate(aligned_slices(model)):
        diff = model.sp_head[i].W[rows][:, cols] - model.rp_head[i].W[:, cols]
        total += float(np.sum(diff**2))
    return float(np.sqrt(total))


def predict(model, x, task, mask_rp=False):
    """Probability vector (or matrix, for a batch) of a multitask network."""
    x = np.asarray(x, dtype=np.float64)
    P = model.predict(x, task, mask_rp)
    return P[0] if x.ndim == 1 else P


COMPONENTS = ("total", "rp_risk", "sp_risk", "l1", "l2", "l3")


@dataclass
class TrainingHistory:
    """Loss components recorded during training.

    ``iterations`` and the component lists hold checkpoints (every
    ``record_every`` steps and the last step); ``trace`` holds the total
    mini-batch loss of every step.
    """

    iterations: list = field(default_factory=list)
    components: dict = field(default_factory=lambda: {c: [] for c in COMPONENTS})
    trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def record(self, iteration, comps):
        self.iterations.append(iteration)
        for name, value in comps.as_dict().items():
            self.components[name].append(value)

    def trailing_mean(self, end, window=100):
        """Mean total loss of the ``window`` steps ending at ``end`` (exclusive)."""
        start = max(0, end - window)
        return float(self.trace[start:end].mean())

    def to_frame(self):
        frame = pd.DataFrame(self.components)
        frame.insert(0, "iteration", self.iterations)
        return frame


def _draw(rng, X, y, batch):
    n = len(y)
    if n == 0:
        return None, None
    idx = rng.choice(n, size=min(batch, n), replace=False)
    return X[idx], y[idx]


def train(model, train_data, hyper=None, record_every=100):
    """Minimize the regularized multitask risk with Adam.

    Every step draws ``hyper.batch`` rows (without replacement within the
    step) from the RP pool and from the SP pool, with one generator per
    task seeded from ``hyper.seed``. All weights and, unless the model is
    pooled, the log-temperature are optimized. The input model is left
    untouched.

    Parameters
    ----------
    model : :class:`MtldnnModel`
    train_data : :class:`~mtlchoice.data.Dataset`
        May hold a single task, in which case the other term is omitted.
    hyper : :class:`HyperConfig`, optional
        Defaults to ``model.hyper``.
    record_every : int

    Returns
    -------
    (:class:`MtldnnModel`, :class:`TrainingHistory`)
        The final iterate and the recorded losses.

    Raises
    ------
    TrainingDivergedError
        A loss component or a parameter became NaN or infinite.
    """
    hyper = model.hyper if hyper is None else hyper
    if hyper is None:
        raise ConfigurationError("hyper", "is required to train a model without one")
    model = model.copy()
    spec = hyper.loss_spec()
    X_rp, y_rp = train_data.rows(Task.RP)
    X_sp, y_sp = train_data.rows(Task.SP)
    if len(y_rp) + len(y_sp) == 0:
        raise ConfigurationError("train_data", "holds no rows")
    rng_rp = np.random.default_rng([int(hyper.seed), 10])
    rng_sp = np.random.default_rng([int(hyper.seed), 11])

    log_T = np.array([model.log_T])
    params = model.parameter_arrays()
    if spec.learn_temperature:
        params = params + [log_T]
    opt = Adam(params, lr=hyper.lr)
    history = TrainingHistory(trace=np.empty(hyper.n_iter))

    for it in range(hyper.n_iter):
        model.log_T = float(log_T[0])
        batch = Batch.from_arrays(
            *_draw(rng_rp, X_rp, y_rp, hyper.batch),
            *_draw(rng_sp, X_sp, y_sp, hyper.batch),
            d=model.d,
        )
        # overflow surfaces as a non-finite component below
        with np.errstate(over="ignore", invalid="ignore"):
            comps, tape = loss_and_grad(model, batch, spec)
        for name, value in comps.as_dict().items():
            if not np.isfinite(value):
                raise TrainingDivergedError(it, name, value)
        history.trace[it] = comps.total
        if it % record_every == 0:
            history.record(it, comps)
            logger.debug("iteration %d: %s", it, comps.as_dict())
        grads = tape.arrays()
        if spec.learn_temperature:
            grads = grads + [np.array([tape.log_T])]
        opt.step(grads)
        if not all(np.all(np.isfinite(p)) for p in params):
            raise TrainingDivergedError(it, "parameters", float("nan"))
        if abs(log_T[0]) > MAX_ABS_LOG_T:
            raise TrainingDivergedError(it, "log_T", float(log_T[0]))

    model.log_T = float(log_T[0])
    history.record(hyper.n_iter, loss_and_grad(model, batch, spec)[0])
    return model, history
