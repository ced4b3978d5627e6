"""
Gradient-based interpretation of fitted choice models.

Every model exposes ``predict(X, task, mask_rp=False)`` and
``input_gradient(X, task, alternative, mask_rp=False)`` on standardized
inputs. The functions here take raw-unit data together with the scaler the
model was fitted with, and report results in raw units.
"""


import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from mtlchoice._on_demand_imports import _matplotlib
from mtlchoice.data import Scaler, Task
from mtlchoice.exceptions import InputError, InterpretationError

logger = logging.getLogger(__name__)

#: rows whose probability of the traced alternative is below this are
#: left out of elasticities
MIN_PROBABILITY = 1e-6


@dataclass(frozen=True)
class CurveSpec:
    """A probability curve request.

    Parameters
    ----------
    variable : str
        Feature to vary.
    grid : sequence of float
        Strictly increasing raw-unit values.
    task : {"rp", "sp"}
    alternatives : sequence of str or int, optional
        Alternatives to trace; every alternative the models predict for the
        task by default.
    """

    variable: str
    grid: tuple
    task: Task = Task.SP
    alternatives: tuple = ()

    def __post_init__(self):
        grid = tuple(float(g) for g in self.grid)
        if not grid:
            raise InterpretationError("The curve grid is empty.")
        if np.any(np.diff(grid) <= 0):
            raise InterpretationError("The curve grid must be strictly increasing.")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "task", Task(self.task))
        object.__setattr__(self, "alternatives", tuple(self.alternatives))

    def validate(self, dataset, K=None):
        """Resolve the variable and the alternatives against ``dataset``.

        ``K`` is the number of predicted alternatives; it defaults to the
        number available in the task's rows.
        """
        column = _column(dataset, self.variable, self.task)
        if K is None:
            K = dataset.n_alternatives(self.task)
        alts = self.alternatives or tuple(range(K))
        indices = []
        for alt in alts:
            try:
                k = dataset.alternative_index(alt)
            except InputError as exc:
                raise InterpretationError(str(exc)) from None
            if k >= K:
                raise InterpretationError(
                    f"Alternative '{alt}' is not available in {self.task.value} rows."
                )
            indices.append(k)
        return column, indices


def _column(dataset, variable, task):
    if variable not in dataset.schema.names:
        raise InterpretationError(f"Unknown variable '{variable}'.")
    if variable in dataset.schema.av_specific and Task(task) is not Task.SP:
        raise InterpretationError(
            f"'{variable}' is AV-specific and only defined for SP rows."
        )
    return dataset.schema.index(variable)


def _task_rows(dataset, task):
    X, _ = dataset.rows(task)
    if len(X) == 0:
        raise InterpretationError(f"The dataset has no {Task(task).value} rows.")
    return np.array(X)


def _scaler(scaler, dataset):
    if scaler is None:
        return Scaler.identity(dataset.schema.d, dataset.schema.av_indices)
    return scaler


def _output_width(models, Z, task, mask_rp):
    return max(model.predict(Z, task, mask_rp).shape[1] for model in models)


def prob_curve(models, dataset, spec, scaler=None, model_ids=None, mask_rp=False):
    """Average choice probabilities as one variable sweeps a grid.

    At every grid value the variable is overwritten in every row of the
    spec's task, the rows are standardized and predicted, and the
    probabilities are averaged over the rows. With several models, their
    mean curve is appended under the model id ``"mean"``.

    By default every alternative the models predict is traced: a pooled
    model predicts all SP alternatives for RP rows unless ``mask_rp`` is
    set, so each grid value sums to one.

    Returns
    -------
    pandas.DataFrame
        Columns ``grid_value``, ``alternative``, ``model_id`` and
        ``mean_probability``.
    """
    if not isinstance(models, (list, tuple)):
        models = [models]
    if model_ids is None:
        model_ids = [str(i) for i in range(len(models))]
    _column(dataset, spec.variable, spec.task)
    scaler = _scaler(scaler, dataset)
    X = _task_rows(dataset, spec.task)
    K = _output_width(models, scaler.transform_array(X[:1], spec.task), spec.task, mask_rp)
    column, alternatives = spec.validate(dataset, K)
    curves = np.zeros((len(models), len(spec.grid), K))
    for g, value in enumerate(spec.grid):
        Xg = X.copy()
        Xg[:, column] = value
        Z = scaler.transform_array(Xg, spec.task)
        for m, model in enumerate(models):
            P = model.predict(Z, spec.task, mask_rp)
            curves[m, g, : P.shape[1]] = P.mean(axis=0)
    ids = list(model_ids)
    if len(models) > 1:
        curves = np.concatenate([curves, curves.mean(axis=0, keepdims=True)])
        ids.append("mean")
    rows = []
    for m, model_id in enumerate(ids):
        for g, value in enumerate(spec.grid):
            for k in alternatives:
                rows.append((value, dataset.alternatives[k], model_id, curves[m, g, k]))
    return pd.DataFrame(
        rows, columns=["grid_value", "alternative", "model_id", "mean_probability"]
    )


@dataclass(frozen=True)
class ElasticityResult:
    value: float
    n_used: int
    n_excluded: int


def _raw_derivative(scaler, column, task):
    if Task(task) is Task.RP and column in scaler.av_columns:
        return 1.0
    return scaler.derivative(column)


def point_elasticities(model, X, column, alternative, task, scaler, h=None, mask_rp=False):
    """Per-row point elasticities ``(dP/dx) (x / P)`` in raw units.

    The derivative comes from the model's input gradient through the
    scaler, or, when ``h`` is given, from a central difference of step
    ``h`` in the raw variable. Returns the elasticities and the
    probabilities of ``alternative``.
    """
    X = np.asarray(X, dtype=np.float64)
    Z = scaler.transform_array(X, task)
    P = model.predict(Z, task, mask_rp)[:, alternative]
    if h is None:
        dP = model.input_gradient(Z, task, alternative, mask_rp)[:, column]
        dP = dP * _raw_derivative(scaler, column, task)
    else:
        Xp, Xm = X.copy(), X.copy()
        Xp[:, column] += h
        Xm[:, column] -= h
        Pp = model.predict(scaler.transform_array(Xp, task), task, mask_rp)[:, alternative]
        Pm = model.predict(scaler.transform_array(Xm, task), task, mask_rp)[:, alternative]
        dP = (Pp - Pm) / (2.0 * h)
    with np.errstate(divide="ignore", invalid="ignore"):
        return dP * X[:, column] / P, P


def elasticity(model, dataset, variable, alternative, scaler=None, task=Task.SP,
               mask_rp=False):
    """Sample-averaged point elasticity of ``alternative`` w.r.t. ``variable``.

    Rows where the variable is zero or the probability of the alternative
    is below ``1e-6`` are excluded.

    Returns
    -------
    :class:`ElasticityResult`

    Raises
    ------
    InterpretationError
        Unknown variable, no rows of ``task``, or every row excluded.
    """
    task = Task(task)
    column = _column(dataset, variable, task)
    k = dataset.alternative_index(alternative)
    scaler = _scaler(scaler, dataset)
    X = _task_rows(dataset, task)
    if k >= _output_width([model], scaler.transform_array(X[:1], task), task, mask_rp):
        raise InterpretationError(
            f"Alternative '{alternative}' is not predicted for {task.value} rows."
        )
    e, P = point_elasticities(model, X, column, k, task, scaler, mask_rp=mask_rp)
    keep = (X[:, column] != 0.0) & (P >= MIN_PROBABILITY)
    n_used = int(keep.sum())
    if n_used == 0:
        raise InterpretationError(
            f"Every row was excluded from the elasticity of '{variable}'."
        )
    return ElasticityResult(float(e[keep].mean()), n_used, int(len(X) - n_used))


def elasticity_table(model, dataset, variables, alternative, scaler=None, task=Task.SP,
                     mask_rp=False):
    """Elasticities of one alternative for several variables, largest first.

    Returns
    -------
    pandas.DataFrame
        Columns ``variable``, ``elasticity``, ``n_used`` and ``n_excluded``.
    """
    rows = []
    for variable in variables:
        res = elasticity(model, dataset, variable, alternative, scaler, task, mask_rp)
        rows.append((variable, res.value, res.n_used, res.n_excluded))
    frame = pd.DataFrame(rows, columns=["variable", "elasticity", "n_used", "n_excluded"])
    order = np.argsort(-frame["elasticity"].abs().to_numpy(), kind="stable")
    return frame.iloc[order].reset_index(drop=True)


def plot_curves(frame, path, title=None):
    """Write a curve table from :func:`prob_curve` as an SVG line chart.

    Requires matplotlib.
    """
    fig = _matplotlib.Figure(figsize=(6, 4))
    ax = fig.subplots()
    alternatives = list(frame["alternative"].unique())
    for (model_id, alt), group in frame.groupby(["model_id", "alternative"], sort=False):
        mean = model_id == "mean"
        ax.plot(
            group["grid_value"],
            group["mean_probability"],
            color=f"C{alternatives.index(alt) % 10}",
            linewidth=2.0 if mean else 0.8,
            alpha=1.0 if mean else 0.4,
            label=alt if mean or frame["model_id"].nunique() == 1 else None,
        )
    ax.set_xlabel("value")
    ax.set_ylabel("mean probability")
    ax.set_ylim(0.0, 1.0)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.savefig(path, format="svg")
    logger.info("wrote %s", path)
