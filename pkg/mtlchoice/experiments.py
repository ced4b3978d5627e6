"""
Experiments built from an :class:`~mtlchoice.config.ExperimentConfig`:
loading and splitting the data, fitting any of the model kinds, the
eight-model comparison and the architecture and lambda_3 sweeps.
"""


import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from mtlchoice.config import (
    DNN_JOINT,
    DNN_SPT,
    MNL_JOINT,
    MNL_SPT,
    MTLDNN,
    NETWORK_KINDS,
    NL_C,
    NL_NC,
)
from mtlchoice.data import Scaler, load_csv, split, standardize, task_accuracies
from mtlchoice.exceptions import ConfigurationError
from mtlchoice.mnl import MnlModel, Scope, fit_mnl, fit_mnl_spt
from mtlchoice.mtldnn import MtldnnModel, aligned_distance, build, train
from mtlchoice.nl import NlModel, fit_nl
from mtlchoice.search import ensemble_topk, evaluation_risk, random_search
from mtlchoice.synth import generate

logger = logging.getLogger(__name__)

ACCURACY_ROWS = (
    "train_joint", "train_rp", "train_sp", "test_joint", "test_rp", "test_sp",
)

MTLDNN_E = "mtldnn-e"

#: columns of the comparison grid, from the most to the least flexible model
COMPARE_KINDS = (MTLDNN, MTLDNN_E, DNN_SPT, DNN_JOINT, NL_C, NL_NC, MNL_SPT, MNL_JOINT)

CHARACTERISTICS = {
    "automatic feature learning": {MTLDNN, MTLDNN_E, DNN_SPT, DNN_JOINT},
    "soft constraints": {MTLDNN, MTLDNN_E},
    "hard constraints": {NL_C},
    "data augmentation": {MTLDNN, MTLDNN_E, DNN_JOINT, NL_C, NL_NC, MNL_JOINT},
}

LAMBDA3_GRID = (0.0, 1e-4, 1e-2, 5e-1, 1e2)


@dataclass(frozen=True)
class Prepared:
    """Standardized train and test splits, the scaler fitted on the
    training split, and the raw-unit splits it was fitted from."""

    train: object
    test: object
    scaler: Scaler
    raw_train: object
    raw_test: object


def load_data(config):
    """Read or generate the dataset of ``config``."""
    if config.data_source == "csv":
        return load_csv(
            config.resolve_path(config.csv), config.feature_schema(),
            config.K_r, config.K_s, config.alternatives,
        )
    synth = config.synth
    return generate(config.dgp_spec(), synth["n_r"], synth["n_s"], config.synth_seed)


def prepare(config, dataset=None, scaler=None):
    """Split ``dataset`` and standardize it.

    With a ``scaler`` (for instance the one stored with a fitted model) the
    splits are transformed with it instead of a freshly fitted one.
    """
    dataset = load_data(config) if dataset is None else dataset
    raw_train, raw_test = split(dataset, config.ratio, config.resolved_split_seed)
    if scaler is not None:
        train_data, test_data = scaler.transform(raw_train), scaler.transform(raw_test)
    elif config.standardize:
        train_data, test_data, scaler = standardize(raw_train, raw_test)
    else:
        train_data, test_data = raw_train, raw_test
        scaler = Scaler.identity(dataset.schema.d, dataset.schema.av_indices)
    return Prepared(train_data, test_data, scaler, raw_train, raw_test)


def network_hyper(hyper, kind):
    """Turn ``hyper`` into the architecture of a network kind.

    DNN-SPT moves every layer into the task heads and drops the similarity
    penalty; DNN-JOINT moves every layer into the shared stack. The total
    depth is kept.

    Examples
    --------
    >>> from mtlchoice.mtldnn import HyperConfig
    >>> h = network_hyper(HyperConfig(M1=3, M2=2), "dnn-spt")
    >>> h.M1, h.M2, h.lambda3
    (0, 5, 0.0)
    """
    if kind == DNN_SPT:
        return hyper.replace(M1=0, M2=hyper.M1 + hyper.M2, lambda3=0.0)
    if kind == DNN_JOINT:
        return hyper.replace(M1=hyper.M1 + hyper.M2, M2=0)
    if kind == MTLDNN:
        return hyper
    raise ConfigurationError("model", "is not a network kind", kind)


def nl_ties(config):
    """Ties of an NL-C fit: the configured ones, or the coefficients the
    synthetic generator shares between tasks."""
    ties = config.tie_list()
    if ties:
        return ties
    if config.data_source == "synth" and config.dgp_spec().shared_map:
        return config.dgp_spec().shared_map
    raise ConfigurationError("ties", "model 'nl-c' needs at least one tie")


def fit_network(hyper, train_data):
    model = build(
        hyper, train_data.schema.d, train_data.K_r, train_data.K_s,
        train_data.schema.av_indices,
    )
    return train(model, train_data, hyper)


def fit_model(kind, train_data, config):
    """Fit one model kind on ``train_data``.

    Returns
    -------
    (model, history)
        ``history`` is the :class:`~mtlchoice.mtldnn.TrainingHistory` of a
        network and ``None`` for the logit models.
    """
    logger.info("fitting %s", kind)
    if kind in NETWORK_KINDS:
        return fit_network(network_hyper(config.hyper_config(), kind), train_data)
    opt, degree = config.opt_config(), config.phi_degree
    if kind == NL_C:
        model = fit_nl(train_data, train_data, nl_ties(config), opt, degree)
    elif kind == NL_NC:
        model = fit_nl(train_data, train_data, (), opt, degree)
    elif kind == MNL_SPT:
        model = fit_mnl_spt(train_data, opt, degree)
    elif kind == MNL_JOINT:
        model = fit_mnl(train_data, Scope.JOINT, opt, degree)
    else:
        raise ConfigurationError("model", "is not a known model kind", kind)
    return model, None


def evaluate_model(model, train_data, test_data, mask_rp=False):
    """Accuracies on both splits plus the model's own summary figures."""
    metrics = {}
    for prefix, data in (("train", train_data), ("test", test_data)):
        for key, value in task_accuracies(model, data, mask_rp).items():
            metrics[f"{prefix}_{key}"] = value
    if isinstance(model, MtldnnModel):
        metrics["test_risk"] = evaluation_risk(model, test_data)
        metrics["T"] = model.T
        metrics["aligned_distance"] = aligned_distance(model) if not model.is_joint else np.nan
    elif isinstance(model, NlModel):
        metrics["theta"] = model.theta
        metrics["loglik"] = model.loglik
    elif isinstance(model, MnlModel):
        metrics["loglik"] = model.loglik
    return metrics


@dataclass
class Comparison:
    accuracy: pd.DataFrame
    characteristics: pd.DataFrame
    models: dict
    search: object


def characteristics_frame():
    """Which of the four characteristics every compared kind has."""
    return pd.DataFrame(
        {
            kind: ["yes" if kind in members else "no" for members in CHARACTERISTICS.values()]
            for kind in COMPARE_KINDS
        },
        index=pd.Index(list(CHARACTERISTICS), name="characteristic"),
    )


def compare(config, prepared):
    """Fit the eight model kinds on one split.

    MTLDNN is the best run of a random search over ``config.space`` and
    MTLDNN-E the ensemble of its ``config.k`` best runs; the other kinds
    use ``config.hyper`` and the logit settings.

    Returns
    -------
    :class:`Comparison`
        ``accuracy`` has one row per split and task and one column per kind.
    """
    train_data, test_data = prepared.train, prepared.test
    columns = {}
    models = {}
    result = random_search(
        config.search_space(), train_data, test_data, config.S, config.selection,
        config.seed, config.workers, mask_rp=config.mask_rp,
    )
    best = result.best
    if best is None:
        logger.warning("every search run failed; MTLDNN columns are empty")
        columns[MTLDNN] = columns[MTLDNN_E] = {row: np.nan for row in ACCURACY_ROWS}
    else:
        models[MTLDNN] = best.model
        columns[MTLDNN] = evaluate_model(best.model, train_data, test_data, config.mask_rp)
        k = min(config.k, len(result.ranking))
        ensemble, _ = ensemble_topk(result, k, test_data, config.mask_rp)
        models[MTLDNN_E] = ensemble
        columns[MTLDNN_E] = evaluate_model(ensemble, train_data, test_data, config.mask_rp)
    for kind in COMPARE_KINDS[2:]:
        model, _ = fit_model(kind, train_data, config)
        models[kind] = model
        columns[kind] = evaluate_model(model, train_data, test_data, config.mask_rp)
    accuracy = pd.DataFrame(
        {kind: [columns[kind][row] for row in ACCURACY_ROWS] for kind in COMPARE_KINDS},
        index=pd.Index(ACCURACY_ROWS, name="metric"),
    )
    return Comparison(accuracy, characteristics_frame(), models, result)


def architecture_sweep(config, prepared, depth=5):
    """Every split of ``depth`` layers into shared and task-specific ones.

    Runs from all-shared (DNN-JOINT) to all-specific (DNN-SPT, with no
    similarity penalty), with the other hyperparameters of ``config.hyper``.
    """
    base = config.hyper_config()
    rows = []
    for M1 in range(depth, -1, -1):
        hyper = base.replace(M1=M1, M2=depth - M1)
        if M1 == 0:
            hyper = hyper.replace(lambda3=0.0)
        model, _ = fit_network(hyper, prepared.train)
        metrics = evaluate_model(model, prepared.train, prepared.test, config.mask_rp)
        row = {"architecture": f"{M1}-{depth - M1}", "M1": M1, "M2": depth - M1,
               "kind": hyper.kind}
        row.update({m: metrics[m] for m in ACCURACY_ROWS})
        rows.append(row)
        logger.info("architecture %s: test joint accuracy %.4f", row["architecture"],
                    row["test_joint"])
    return pd.DataFrame(rows)


def lambda3_sweep(config, prepared, values=LAMBDA3_GRID):
    """Accuracy and final ``||w~_s - w_r||`` over a grid of lambda_3."""
    base = config.hyper_config()
    if base.is_joint:
        raise ConfigurationError("hyper.M2", "the lambda_3 sweep needs task-specific layers",
                                 base.M2)
    rows = []
    for value in values:
        hyper = base.replace(lambda3=float(value))
        model, _ = fit_network(hyper, prepared.train)
        metrics = evaluate_model(model, prepared.train, prepared.test, config.mask_rp)
        row = {"lambda3": float(value)}
        row.update({m: metrics[m] for m in ACCURACY_ROWS})
        row["aligned_distance"] = metrics["aligned_distance"]
        rows.append(row)
    return pd.DataFrame(rows)
