"""
Synthetic RP/SP choice data with known ground truth.

Utilities are linear in the features (plus, for the nonlinear kind, a fixed
set of transformed features), and choices are drawn as the argmax of the
utilities perturbed by Gumbel noise. RP noise is standard Gumbel, SP noise is
``theta`` times a standard Gumbel, so that

.. math::

  P_r = \\mathrm{softmax}(\\beta_r x), \\qquad
  P_s = \\mathrm{softmax}(\\beta_s x / \\theta).

Features are drawn from the standard normal distribution, except those
declared positive, which are log-normal (``exp(0.5 z)``). AV-specific
features are zero in RP rows.
"""


import enum
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from sympy import Symbol, lambdify
from sympy.parsing.sympy_parser import parse_expr

from mtlchoice.core import softmax_t
from mtlchoice.data import Dataset, FeatureSchema, Task
from mtlchoice.exceptions import ConfigurationError, InputError

#: name used for the intercept column in coefficient addresses
INTERCEPT = "intercept"


class DgpKind(str, enum.Enum):
    LINEAR_MNL = "LinearMnl"
    SCALED_NL = "ScaledNl"
    NONLINEAR = "Nonlinear"


@lru_cache(maxsize=128, typed=False)
def cached_sympify(expr, names):
    """Parse ``expr`` with the feature ``names`` as its only symbols."""
    local = {n: Symbol(n, real=True) for n in names}
    try:
        parsed = parse_expr(expr, local_dict=local)
    except (SyntaxError, TypeError, ValueError) as exc:
        raise ConfigurationError("transforms", f"cannot parse '{expr}'") from exc
    unknown = {str(s) for s in parsed.free_symbols} - set(names)
    if unknown:
        raise ConfigurationError(
            "transforms", f"'{expr}' uses unknown features {sorted(unknown)}"
        )
    return parsed


@lru_cache(maxsize=32, typed=False)
def _compiled(transforms, names):
    exprs = [cached_sympify(t, names) for t in transforms]
    symbols = [Symbol(n, real=True) for n in names]
    return lambdify(symbols, exprs, "numpy")


def _matrix(value, shape, name):
    arr = np.array(value, dtype=np.float64)
    if arr.size == 0:
        arr = np.zeros(shape)
    if arr.shape != shape:
        raise ConfigurationError(name, f"expected shape {shape}", arr.shape)
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(name, "entries must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DgpSpec:
    """Ground truth of a synthetic RP/SP data set.

    Parameters
    ----------
    kind : {"LinearMnl", "ScaledNl", "Nonlinear"}
    schema : :class:`~mtlchoice.data.FeatureSchema`
    alternatives : sequence of str
        The ``K_s`` SP alternatives; the first ``K_r`` are the RP ones.
    K_r : int
    beta_r, beta_s : array-like
        Coefficients of shape ``(K_r, d + 1)`` and ``(K_s, d + 1)``. Column
        0 is the intercept.
    theta : float
        SP noise scale. Must be 1 unless ``kind`` is ScaledNl.
    shared_map : sequence of (feature, alternative) pairs
        Coefficients that are identical in both tasks. ``"intercept"`` is a
        valid feature name here.
    transforms : sequence of str
        Expressions in the feature names (Nonlinear kind only).
    gamma_r, gamma_s : array-like
        Coefficients of the transformed features, ``(K, len(transforms))``.
    positive : sequence of str
        Features drawn from a log-normal distribution.
    noise_seed : int
        Seed used by :func:`generate` when none is given.
    """

    kind: DgpKind
    schema: FeatureSchema
    alternatives: tuple
    K_r: int
    beta_r: np.ndarray
    beta_s: np.ndarray
    theta: float = 1.0
    shared_map: tuple = ()
    transforms: tuple = ()
    gamma_r: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    gamma_s: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    positive: tuple = ()
    noise_seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", DgpKind(self.kind))
        except ValueError:
            raise ConfigurationError(
                "kind", f"must be one of {[k.value for k in DgpKind]}", self.kind
            ) from None
        object.__setattr__(self, "alternatives", tuple(self.alternatives))
        object.__setattr__(
            self, "shared_map", tuple((str(f), str(a)) for f, a in self.shared_map)
        )
        object.__setattr__(self, "transforms", tuple(self.transforms))
        object.__setattr__(self, "positive", tuple(self.positive))
        d, m = self.schema.d, len(self.transforms)
        if not 0 < self.K_r <= self.K_s:
            raise ConfigurationError("K_r", f"must lie in [1, {self.K_s}]", self.K_r)
        object.__setattr__(self, "beta_r", _matrix(self.beta_r, (self.K_r, d + 1), "beta_r"))
        object.__setattr__(self, "beta_s", _matrix(self.beta_s, (self.K_s, d + 1), "beta_s"))
        object.__setattr__(self, "gamma_r", _matrix(self.gamma_r, (self.K_r, m), "gamma_r"))
        object.__setattr__(self, "gamma_s", _matrix(self.gamma_s, (self.K_s, m), "gamma_s"))
        if not (np.isfinite(self.theta) and self.theta > 0):
            raise ConfigurationError("theta", "must be positive", self.theta)
        if self.kind is not DgpKind.SCALED_NL and self.theta != 1.0:
            raise ConfigurationError("theta", f"must be 1 for {self.kind.value}", self.theta)
        if m and self.kind is not DgpKind.NONLINEAR:
            raise ConfigurationError("transforms", f"not used by {self.kind.value}")
        for expr in self.transforms:
            cached_sympify(expr, self.schema.names)
        for name in self.positive:
            self.schema.index(name)
        for feature, alternative in self.shared_map:
            row, col = self.address(feature, alternative)
            if self.beta_r[row, col] != self.beta_s[row, col]:
                raise ConfigurationError(
                    "shared_map",
                    f"coefficient ({feature}, {alternative}) differs between tasks",
                )

    @property
    def K_s(self):
        return len(self.alternatives)

    @property
    def d(self):
        return self.schema.d

    def address(self, feature, alternative):
        """Row and column of a coefficient shared by both tasks."""
        if alternative not in self.alternatives[: self.K_r]:
            raise ConfigurationError(
                "shared_map", f"'{alternative}' is not an RP alternative"
            )
        if feature == INTERCEPT:
            col = 0
        else:
            if feature not in self.schema.names:
                raise ConfigurationError("shared_map", f"unknown feature '{feature}'")
            if feature in self.schema.av_specific:
                raise ConfigurationError(
                    "shared_map", f"AV-specific feature '{feature}' cannot be shared"
                )
            col = self.schema.index(feature) + 1
        return self.alternatives.index(alternative), col

    def utilities(self, X, task):
        """Systematic utilities of the rows ``X`` of ``task``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        rp = Task(task) is Task.RP
        beta = self.beta_r if rp else self.beta_s
        V = beta[:, 0] + X @ beta[:, 1:].T
        if self.transforms:
            gamma = self.gamma_r if rp else self.gamma_s
            V = V + transformed_features(self, X) @ gamma.T
        return V

    def probabilities(self, X, task):
        """Analytic choice probabilities implied by the noise distribution."""
        T = 1.0 if Task(task) is Task.RP else self.theta
        return softmax_t(self.utilities(X, task), T)

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "schema": self.schema.to_dict(),
            "alternatives": list(self.alternatives),
            "K_r": self.K_r,
            "beta_r": self.beta_r.tolist(),
            "beta_s": self.beta_s.tolist(),
            "theta": self.theta,
            "shared_map": [list(p) for p in self.shared_map],
            "transforms": list(self.transforms),
            "gamma_r": self.gamma_r.tolist(),
            "gamma_s": self.gamma_s.tolist(),
            "positive": list(self.positive),
            "noise_seed": self.noise_seed,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["schema"] = FeatureSchema.from_dict(data["schema"])
        return cls(**data)

    def to_json(self):
        """Human-readable JSON description of this generator."""
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, json_text):
        return cls.from_dict(json.loads(json_text))


def transformed_features(spec, X):
    """Evaluate the transform expressions of ``spec`` on every row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    fn = _compiled(spec.transforms, spec.schema.names)
    cols = fn(*X.T)
    return np.column_stack([np.broadcast_to(np.asarray(c, dtype=np.float64), len(X)) for c in cols])


def _draw_features(spec, rng, n, task):
    Z = rng.standard_normal((n, spec.d))
    for name in spec.positive:
        j = spec.schema.index(name)
        Z[:, j] = np.exp(0.5 * Z[:, j])
    if Task(task) is Task.RP:
        Z[:, list(spec.schema.av_indices)] = 0.0
    return Z


def generate(spec, n_r, n_s, seed=None):
    """Draw ``n_r`` RP and ``n_s`` SP observations from ``spec``.

    RP rows come first. The same ``(spec, n_r, n_s, seed)`` always gives
    the same data.

    Examples
    --------
    >>> data = generate(preset("tiny"), 20, 30, seed=0)
    >>> data.n_rp, data.n_sp
    (20, 30)
    """
    if n_r <= 0 or n_s <= 0:
        raise InputError(f"Sample sizes must be positive, received {n_r} and {n_s}.")
    rng = np.random.default_rng(spec.noise_seed if seed is None else seed)
    X_r = _draw_features(spec, rng, n_r, Task.RP)
    U_r = spec.utilities(X_r, Task.RP) + rng.gumbel(size=(n_r, spec.K_r))
    X_s = _draw_features(spec, rng, n_s, Task.SP)
    U_s = spec.utilities(X_s, Task.SP) + spec.theta * rng.gumbel(size=(n_s, spec.K_s))
    return Dataset(
        np.concatenate([np.zeros(n_r, dtype=np.int8), np.ones(n_s, dtype=np.int8)]),
        np.vstack([X_r, X_s]),
        np.concatenate([np.argmax(U_r, axis=1), np.argmax(U_s, axis=1)]),
        spec.K_r,
        spec.K_s,
        spec.schema,
        spec.alternatives,
    )


#: the fixed transform of the Nonlinear kind: squares and the interaction of
#: the first two features
NONLINEAR_TRANSFORMS = ("{0}**2", "{1}**2", "{0}*{1}")


def _tiny(kind):
    schema = FeatureSchema(["x0", "x1"])
    beta = [[0.0, 1.0, -0.5], [0.0, -0.5, 1.0], [0.0, 0.0, 0.0]]
    kwargs = {}
    if kind is DgpKind.SCALED_NL:
        kwargs["theta"] = 2.0
        kwargs["shared_map"] = [(f, a) for a in ("a", "b") for f in ("x0", "x1")]
    elif kind is DgpKind.NONLINEAR:
        kwargs["transforms"] = [t.format("x0", "x1") for t in NONLINEAR_TRANSFORMS]
        gamma = [[-1.0, 0.5, 1.5], [0.8, -1.0, -1.5], [0.0, 0.0, 0.0]]
        kwargs["gamma_r"] = kwargs["gamma_s"] = gamma
    return DgpSpec(kind, schema, ("a", "b", "c"), 3, beta, beta, **kwargs)


TRAVEL_ALTERNATIVES = ("walk", "transit", "drive", "ride_share", "av")
TRAVEL_FEATURES = ("x0", "x1", "x2", "x3", "av_cost", "av_wait", "av_ivt")
TRAVEL_AV_FEATURES = ("av_cost", "av_wait", "av_ivt")


def _travel(kind):
    schema = FeatureSchema(TRAVEL_FEATURES, av_specific=TRAVEL_AV_FEATURES)
    # columns: intercept, x0..x3, av_cost, av_wait, av_ivt
    beta_r = np.array(
        [
            [0.5, 1.0, -0.5, 0.3, 0.0, 0.0, 0.0, 0.0],
            [0.2, -0.4, 0.8, 0.0, 0.5, 0.0, 0.0, 0.0],
            [0.8, 0.6, 0.2, -0.7, -0.3, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        ]
    )
    beta_s = np.vstack(
        [beta_r, [[1.2, 0.2, 0.2, 0.2, 0.2, -1.0, -0.6, -0.8]]]
    )
    beta_s[:3, 0] = [0.3, 0.4, 0.6]
    shared = [(f, a) for a in TRAVEL_ALTERNATIVES[:3] for f in TRAVEL_FEATURES[:4]]
    kwargs = {"shared_map": shared, "positive": TRAVEL_AV_FEATURES}
    if kind is DgpKind.SCALED_NL:
        kwargs["theta"] = 2.0
    elif kind is DgpKind.NONLINEAR:
        kwargs["transforms"] = [t.format("x0", "x1") for t in NONLINEAR_TRANSFORMS]
        gamma_r = np.array(
            [[-1.2, 0.0, 1.5], [0.0, -1.0, -1.5], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]]
        )
        kwargs["gamma_r"] = gamma_r
        kwargs["gamma_s"] = np.vstack([gamma_r, [[0.5, -0.5, 1.0]]])
    return DgpSpec(kind, schema, TRAVEL_ALTERNATIVES, 4, beta_r, beta_s, **kwargs)


_PRESETS = {"tiny": _tiny, "travel": _travel}


def preset(name="travel", kind=DgpKind.LINEAR_MNL):
    """A documented generator.

    ``"travel"`` has the RP modes walk, transit, drive and ride_share, an SP
    survey that adds av, generic features ``x0..x3`` and the AV-specific
    attributes av_cost, av_wait and av_ivt (log-normal, with negative AV
    coefficients). ``"tiny"`` has three alternatives and two features with
    coefficients ``(1.0, -0.5)`` on the first alternative.
    """
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise ConfigurationError("preset", f"must be one of {sorted(_PRESETS)}", name) from None
    try:
        kind = DgpKind(kind)
    except ValueError:
        raise ConfigurationError(
            "kind", f"must be one of {[k.value for k in DgpKind]}", kind
        ) from None
    return factory(kind)
