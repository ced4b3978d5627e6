"""
Test the experiment drivers: data preparation, model fitting, the model
comparison and the sweeps

"""


import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mtlchoice.config import MODEL_KINDS, ExperimentConfig
from mtlchoice.exceptions import ConfigurationError
from mtlchoice.experiments import (
    ACCURACY_ROWS,
    COMPARE_KINDS,
    architecture_sweep,
    characteristics_frame,
    compare,
    evaluate_model,
    fit_model,
    lambda3_sweep,
    network_hyper,
    nl_ties,
    prepare,
)
from mtlchoice.mnl import MnlModel, MnlPair
from mtlchoice.mtldnn import HyperConfig, MtldnnModel
from mtlchoice.nl import NlModel
from mtlchoice.search import EnsemblePredictor

slow = pytest.mark.skipif(
    not os.environ.get("MTLCHOICE_RUN_SLOW"), reason="set MTLCHOICE_RUN_SLOW to run"
)

SMALL_HYPER = {"M1": 1, "M2": 1, "width": 4, "n_iter": 30, "batch": 20, "lr": 0.01}
SMALL_SPACE = {
    "M1": [1, 2], "M2": [0, 1], "width": [4], "n_iter": [30], "batch": [20], "lr": [0.01]
}


def _config(**extra):
    data = {
        "synth": {"preset": "tiny", "kind": "ScaledNl", "n_r": 150, "n_s": 150},
        "hyper": SMALL_HYPER,
        "space": SMALL_SPACE,
        "S": 3,
        "k": 2,
        "seed": 1,
    }
    data.update(extra)
    return ExperimentConfig.from_dict(data)


@pytest.fixture(scope="module")
def prepared():
    return prepare(_config())


def test_prepare_standardizes_with_training_statistics(prepared):
    assert (prepared.train.n_rp, prepared.test.n_rp) == (120, 30)
    assert_allclose(prepared.train.X.mean(axis=0), 0.0, atol=1e-12)
    assert_allclose(prepared.scaler.inverse_transform(prepared.test).X, prepared.raw_test.X)
    raw = prepare(_config(standardize=False))
    assert_allclose(raw.train.X, raw.raw_train.X)
    again = prepare(_config(), scaler=prepared.scaler)
    assert_allclose(again.test.X, prepared.test.X)


def test_network_hyper():
    hyper = HyperConfig(M1=3, M2=2, lambda3=0.5)
    assert network_hyper(hyper, "mtldnn") is hyper
    spt = network_hyper(hyper, "dnn-spt")
    assert (spt.M1, spt.M2, spt.lambda3, spt.kind) == (0, 5, 0.0, "dnn-spt")
    joint = network_hyper(hyper, "dnn-joint")
    assert (joint.M1, joint.M2, joint.kind) == (5, 0, "dnn-joint")
    with pytest.raises(ConfigurationError):
        network_hyper(hyper, "nl-c")


def test_nl_ties():
    assert len(nl_ties(_config())) == 4
    assert nl_ties(_config(model="nl-c", ties=[["intercept", "a"]]))[0].feature == "intercept"
    linear = _config(synth={"preset": "tiny", "n_r": 10, "n_s": 10})
    with pytest.raises(ConfigurationError):
        nl_ties(linear)


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_fit_and_evaluate_every_kind(kind, prepared):
    model, history = fit_model(kind, prepared.train, _config())
    expected = {
        "mtldnn": MtldnnModel, "dnn-spt": MtldnnModel, "dnn-joint": MtldnnModel,
        "nl-c": NlModel, "nl-nc": NlModel, "mnl-spt": MnlPair, "mnl-joint": MnlModel,
    }[kind]
    assert isinstance(model, expected)
    assert (history is None) == (expected is not MtldnnModel)
    if expected is MtldnnModel:
        assert model.kind == kind
    metrics = evaluate_model(model, prepared.train, prepared.test)
    for row in ACCURACY_ROWS:
        assert 0.0 <= metrics[row] <= 1.0
    if kind == "nl-c":
        assert metrics["theta"] > 0
    if kind == "dnn-joint":
        assert np.isnan(metrics["aligned_distance"])


def test_unknown_kind_is_rejected(prepared):
    with pytest.raises(ConfigurationError):
        fit_model("forest", prepared.train, _config())


def test_characteristics():
    frame = characteristics_frame()
    assert list(frame.columns) == list(COMPARE_KINDS)
    assert frame.shape == (4, 8)
    assert frame.loc["soft constraints", "mtldnn"] == "yes"
    assert frame.loc["hard constraints", "nl-c"] == "yes"
    assert frame.loc["data augmentation", "dnn-spt"] == "no"
    assert frame.loc["automatic feature learning", "mnl-joint"] == "no"


def test_compare(prepared):
    result = compare(_config(), prepared)
    assert result.accuracy.shape == (6, 8)
    assert list(result.accuracy.index) == list(ACCURACY_ROWS)
    assert list(result.accuracy.columns) == list(COMPARE_KINDS)
    assert not result.accuracy.isna().any().any()
    assert isinstance(result.models["mtldnn-e"], EnsemblePredictor)
    assert len(result.models["mtldnn-e"].models) == 2
    assert result.models["mtldnn"] is result.search.best.model
    assert len(result.search.entries) == 3


def test_compare_is_deterministic(prepared):
    a = compare(_config(), prepared).accuracy
    b = compare(_config(), prepared).accuracy
    assert a.equals(b)


def test_architecture_sweep(prepared):
    frame = architecture_sweep(_config(), prepared, depth=2)
    assert list(frame["architecture"]) == ["2-0", "1-1", "0-2"]
    assert list(frame["kind"]) == ["dnn-joint", "mtldnn", "dnn-spt"]
    assert set(ACCURACY_ROWS) <= set(frame.columns)


def test_lambda3_sweep(prepared):
    frame = lambda3_sweep(_config(), prepared, values=(0.0, 100.0))
    assert list(frame["lambda3"]) == [0.0, 100.0]
    assert np.all(frame["aligned_distance"] >= 0)
    with pytest.raises(ConfigurationError):
        lambda3_sweep(_config(hyper={**SMALL_HYPER, "M2": 0}), prepared)


@slow
def test_networks_beat_logit_on_nonlinear_data():
    cfg = ExperimentConfig.from_dict(
        {
            "synth": {"preset": "travel", "kind": "Nonlinear", "n_r": 2000, "n_s": 8000},
            "space": {"width": [25, 50], "n_iter": [3000]},
            "hyper": {"M1": 2, "M2": 1, "width": 25, "n_iter": 3000},
            "S": 20,
            "seed": 0,
        }
    )
    acc = compare(cfg, prepare(cfg)).accuracy
    best = acc.loc["test_joint", "mtldnn"]
    assert best >= acc.loc["test_joint", "mnl-spt"] + 0.03
    assert best >= acc.loc["test_joint", "nl-nc"] + 0.03


@slow
def test_full_architecture_sweep():
    cfg = ExperimentConfig.from_dict(
        {
            "synth": {"preset": "travel", "kind": "Nonlinear", "n_r": 2000, "n_s": 8000},
            "hyper": {"width": 25, "n_iter": 3000},
        }
    )
    frame = architecture_sweep(cfg, prepare(cfg))
    assert len(frame) == 6
    mixed = frame[(frame["M1"] >= 1) & (frame["M2"] >= 1)]["test_joint"].max()
    boundary = frame[(frame["M1"] == 0) | (frame["M2"] == 0)]["test_joint"]
    assert len(boundary) == 2
    assert mixed >= boundary.max()
