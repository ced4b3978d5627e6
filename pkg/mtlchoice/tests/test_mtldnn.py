"""
Test building, training and predicting with multitask networks

"""


import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mtlchoice.data import Task
from mtlchoice.exceptions import ConfigurationError, ShapeError, TrainingDivergedError
from mtlchoice.experiments import LAMBDA3_GRID
from mtlchoice.mtldnn import (
    DNN_JOINT,
    DNN_SPT,
    MTLDNN,
    HyperConfig,
    MtldnnModel,
    aligned_distance,
    build,
    loss,
    predict,
    train,
)
from mtlchoice.synth import generate, preset


@pytest.fixture(scope="module")
def travel():
    data = generate(preset("travel"), 300, 300, seed=0)
    return data


def test_hyper_config_validation():
    assert HyperConfig(M1=0, M2=3, lambda3=0.0).kind == DNN_SPT
    assert HyperConfig(M1=0, M2=3).kind == MTLDNN
    assert HyperConfig(M1=2, M2=0).kind == DNN_JOINT
    for bad in (
        dict(M1=6),
        dict(M1=-1),
        dict(M1=0, M2=0),
        dict(M1=1.5),
        dict(lambda0=2.0),
        dict(lambda3=-1.0),
        dict(lambda1=np.nan),
        dict(width=0),
        dict(batch=2.5),
        dict(lr=0.0),
    ):
        with pytest.raises(ConfigurationError):
            HyperConfig(**bad)
    hyper = HyperConfig(width=7)
    assert HyperConfig.from_dict(hyper.to_dict()) == hyper
    assert hyper.replace(M2=0).is_joint


def test_build_shapes():
    model = build(HyperConfig(M1=0, M2=2, width=6), d=7, K_r=4, K_s=5, av_columns=(4, 5, 6))
    assert model.shared == []
    assert [ly.W.shape for ly in model.rp_head] == [(6, 7), (4, 6)]
    assert [ly.W.shape for ly in model.sp_head] == [(6, 7), (5, 6)]
    assert model.T == 1.0
    assert [ly.activation for ly in model.sp_head] == ["relu", "linear"]
    joint = build(HyperConfig(M1=1, M2=0), d=7, K_r=4, K_s=5)
    assert [ly.W.shape for ly in joint.shared] == [(5, 7)]
    assert joint.is_joint
    assert joint.n_parameters == 5 * 7 + 5
    with pytest.raises(ConfigurationError):
        build(HyperConfig(), d=0, K_r=2, K_s=3)


def test_head_initialization_ignores_the_trunk():
    a = build(HyperConfig(M1=1, M2=2, width=5, seed=3), d=5, K_r=2, K_s=3)
    b = build(HyperConfig(M1=4, M2=2, width=5, seed=3), d=5, K_r=2, K_s=3)
    for la, lb in zip(a.rp_head + a.sp_head, b.rp_head + b.sp_head):
        assert_array_equal(la.W, lb.W)


def test_model_validates_layer_chain():
    model = build(HyperConfig(M1=1, M2=1, width=4), d=3, K_r=2, K_s=3)
    with pytest.raises(ShapeError):
        MtldnnModel(model.shared, model.rp_head, [model.shared[0]])


def test_predict_shapes_and_masking(travel):
    model = build(HyperConfig(M1=2, M2=1, width=8), 7, 4, 5, travel.schema.av_indices)
    X, _ = travel.rows(Task.RP)
    assert model.predict(X, Task.RP).shape == (300, 4)
    assert predict(model, X[0], Task.SP).shape == (5,)
    joint = build(HyperConfig(M1=2, M2=0, width=8), 7, 4, 5)
    full = joint.predict(X, Task.RP)
    masked = joint.predict(X, Task.RP, mask_rp=True)
    assert full.shape == (300, 5)
    assert_allclose(masked, full[:, :4] / full[:, :4].sum(axis=1, keepdims=True))


def test_temperature_divides_sp_utilities(travel):
    model = build(HyperConfig(M1=1, M2=1, width=8), 7, 4, 5)
    model.log_T = np.log(3.0)
    X, _ = travel.rows(Task.SP)
    V = model.utilities(X, Task.SP)
    assert_allclose(model.predict(X, Task.SP), np.exp(V / 3) / np.exp(V / 3).sum(axis=1)[:, None])
    # the RP head ignores the temperature
    V_r = model.utilities(X, Task.RP)
    assert_allclose(model.predict(X, Task.RP), np.exp(V_r) / np.exp(V_r).sum(axis=1)[:, None])


def test_input_gradient_matches_finite_differences(travel):
    model = build(HyperConfig(M1=2, M2=1, width=8, seed=1), 7, 4, 5)
    model.log_T = 0.4
    X, _ = travel.rows(Task.SP)
    x = X[:1]
    h = 1e-6
    for task in Task:
        grad = model.input_gradient(x, task, 2)[0]
        for j in range(7):
            e = np.zeros((1, 7))
            e[0, j] = h
            num = (model.predict(x + e, task)[0, 2] - model.predict(x - e, task)[0, 2]) / (2 * h)
            assert_allclose(grad[j], num, rtol=1e-5, atol=1e-9)


def test_loss_omits_missing_tasks(travel):
    hyper = HyperConfig(M1=1, M2=1, width=5)
    model = build(hyper, 7, 4, 5, travel.schema.av_indices)
    both = loss(model, travel.rows(Task.RP), travel.rows(Task.SP), hyper)
    rp_only = loss(model, travel.rows(Task.RP), None, hyper)
    assert rp_only.sp_risk == 0.0
    assert both.rp_risk == rp_only.rp_risk
    assert both.l3 == rp_only.l3


def test_training_reduces_loss_and_is_deterministic():
    data = generate(preset("tiny"), 300, 300, seed=2)
    hyper = HyperConfig(M1=1, M2=1, width=5, n_iter=300, batch=50, lr=1e-2, seed=4)
    model = build(hyper, 2, 3, 3)
    fitted, history = train(model, data)
    assert fitted is not model
    assert_array_equal(model.shared[0].W, build(hyper, 2, 3, 3).shared[0].W)
    assert history.trailing_mean(300) < history.trailing_mean(100)
    frame = history.to_frame()
    assert list(frame.columns) == ["iteration", "total", "rp_risk", "sp_risk", "l1", "l2", "l3"]
    assert frame["iteration"].iloc[-1] == 300
    again, _ = train(model, data)
    for a, b in zip(fitted.parameter_arrays(), again.parameter_arrays()):
        assert_array_equal(a, b)
    assert fitted.log_T == again.log_T


def test_train_needs_hyperparameters_and_rows():
    data = generate(preset("tiny"), 10, 10, seed=0)
    model = build(HyperConfig(M1=1, M2=1, width=3, n_iter=2), 2, 3, 3)
    bare = MtldnnModel.from_dict({**model.to_dict(), "hyper": None})
    with pytest.raises(ConfigurationError):
        train(bare, data)
    with pytest.raises(ConfigurationError):
        train(model, data.subset([]))


def test_divergence_is_reported():
    data = generate(preset("tiny"), 50, 50, seed=0)
    hyper = HyperConfig(M1=0, M2=1, width=3, n_iter=5, batch=10, lr=1e200)
    with pytest.raises(TrainingDivergedError) as excinfo:
        train(build(hyper, 2, 3, 3), data.only(Task.RP))
    assert excinfo.value.iteration == 1


def test_decoupled_networks_train_independently():
    data = generate(preset("travel"), 200, 200, seed=5)
    hyper = HyperConfig(M1=0, M2=2, width=5, lambda3=0.0, n_iter=1000, batch=50, seed=6)
    model = build(hyper, 7, 4, 5, data.schema.av_indices)
    pooled, _ = train(model, data)
    rp_only, _ = train(model, data.only(Task.RP))
    sp_only, _ = train(model, data.only(Task.SP))
    for a, b in zip(pooled.rp_head, rp_only.rp_head):
        assert_allclose(a.W, b.W, rtol=1e-12, atol=1e-15)
        assert_allclose(a.b, b.b, rtol=1e-12, atol=1e-15)
    for a, b in zip(pooled.sp_head, sp_only.sp_head):
        assert_allclose(a.W, b.W, rtol=1e-12, atol=1e-15)
    assert_allclose(pooled.log_T, sp_only.log_T, rtol=1e-12)


def test_lambda3_pulls_heads_together():
    data = generate(preset("tiny"), 300, 300, seed=7)
    base = HyperConfig(M1=1, M2=1, width=5, n_iter=1500, batch=50, lr=1e-2, seed=8)
    distances = []
    for value in LAMBDA3_GRID:
        model, _ = train(build(base.replace(lambda3=value), 2, 3, 3), data)
        distances.append(aligned_distance(model))
    # one adjacent inversion is tolerated for training noise
    assert np.sum(np.diff(distances) > 0) <= 1
    assert distances[-1] < 0.1 * distances[0]


def test_huge_shared_penalty_crushes_shared_weights():
    data = generate(preset("tiny"), 200, 200, seed=3)
    hyper = HyperConfig(M1=1, M2=1, width=3, lambda1=1e6, n_iter=3000, batch=50, lr=1e-3,
                        seed=4)
    model, _ = train(build(hyper, 2, 3, 3), data)
    norm = np.sqrt(sum(np.sum(layer.W**2) for layer in model.shared))
    assert norm < 1e-2


def test_model_dict_round_trip():
    model = build(HyperConfig(M1=1, M2=1, width=4, seed=9), 3, 2, 3, (2,))
    model.log_T = 0.25
    back = MtldnnModel.from_json(model.to_json())
    assert back.hyper == model.hyper
    assert back.av_columns == (2,)
    assert back.log_T == 0.25
    for a, b in zip(model.parameter_arrays(), back.parameter_arrays()):
        assert_array_equal(a, b)
    assert "mtldnn" in repr(back)
