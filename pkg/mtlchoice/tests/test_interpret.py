"""
Test probability curves and elasticities

"""


import numpy as np
import pytest
from numpy.testing import assert_allclose

from mtlchoice._on_demand_imports import NotAModule, _matplotlib
from mtlchoice.data import Task, split, standardize
from mtlchoice.exceptions import InterpretationError
from mtlchoice.interpret import (
    CurveSpec,
    elasticity,
    elasticity_table,
    plot_curves,
    point_elasticities,
    prob_curve,
)
from mtlchoice.mnl import fit_mnl
from mtlchoice.mtldnn import HyperConfig, build, train
from mtlchoice.synth import generate, preset


@pytest.fixture(scope="module")
def fitted():
    data = generate(preset("travel"), 1500, 1500, seed=0)
    raw_train, raw_test = split(data, 0.8, seed=0)
    train_data, _, scaler = standardize(raw_train, raw_test)
    model = fit_mnl(train_data, "joint")
    return model, raw_test, scaler, train_data


def test_curve_probabilities_sum_to_one(fitted):
    model, raw, scaler, _ = fitted
    spec = CurveSpec("av_cost", np.linspace(0.2, 4.0, 7), "sp")
    frame = prob_curve(model, raw, spec, scaler)
    assert list(frame.columns) == ["grid_value", "alternative", "model_id", "mean_probability"]
    assert len(frame) == 7 * 5
    totals = frame.groupby(["model_id", "grid_value"])["mean_probability"].sum()
    assert_allclose(totals.to_numpy(), 1.0, rtol=0, atol=1e-10)
    # a dearer AV is chosen less often
    av = frame[frame["alternative"] == "av"]["mean_probability"].to_numpy()
    assert np.all(np.diff(av) < 0)


def test_curve_over_several_models_appends_the_mean(fitted):
    _, raw, scaler, train_data = fitted
    models = [fit_mnl(train_data, "joint"), fit_mnl(train_data, "sp")]
    spec = CurveSpec("x0", [-1.0, 0.0, 1.0], "sp", alternatives=["walk", 4])
    frame = prob_curve(models, raw, spec, scaler, model_ids=["joint", "sp"])
    assert set(frame["model_id"]) == {"joint", "sp", "mean"}
    assert set(frame["alternative"]) == {"walk", "av"}
    pivot = frame.pivot_table(
        index=["grid_value", "alternative"], columns="model_id", values="mean_probability"
    )
    assert_allclose(pivot["mean"], (pivot["joint"] + pivot["sp"]) / 2)


def test_rp_curve_of_pooled_model_spans_every_alternative(fitted):
    model, raw, scaler, _ = fitted
    frame = prob_curve(model, raw, CurveSpec("x1", [0.0, 1.0], "rp"), scaler)
    assert set(frame["alternative"]) == set(raw.alternatives)
    totals = frame.groupby("grid_value")["mean_probability"].sum()
    assert_allclose(totals.to_numpy(), 1.0, rtol=0, atol=1e-10)
    res = elasticity(model, raw, "x0", "av", scaler, task="rp")
    assert res.n_used + res.n_excluded == raw.n_rp


def test_rp_curve_of_pooled_model_can_be_masked(fitted):
    model, raw, scaler, _ = fitted
    spec = CurveSpec("x1", [0.0, 1.0], "rp")
    masked = prob_curve(model, raw, spec, scaler, mask_rp=True)
    assert set(masked["alternative"]) == {"walk", "transit", "drive", "ride_share"}
    totals = masked.groupby("grid_value")["mean_probability"].sum()
    assert_allclose(totals.to_numpy(), 1.0, atol=1e-10)


def test_gradient_elasticities_match_finite_differences(fitted):
    model, raw, scaler, _ = fitted
    X, _ = raw.rows(Task.SP)
    column = raw.schema.index("av_cost")
    analytic, _ = point_elasticities(model, X, column, 4, Task.SP, scaler)
    numeric, _ = point_elasticities(model, X, column, 4, Task.SP, scaler, h=1e-5)
    assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-10)


def test_network_elasticities_match_finite_differences(fitted):
    _, raw, scaler, train_data = fitted
    hyper = HyperConfig(M1=1, M2=1, width=6, n_iter=50, batch=50, lr=1e-2, seed=2)
    model, _ = train(build(hyper, 7, 4, 5, train_data.schema.av_indices), train_data)
    X, _ = raw.rows(Task.SP)
    X = X[:20]
    column = raw.schema.index("x2")
    analytic, _ = point_elasticities(model, X, column, 1, Task.SP, scaler)
    numeric, _ = point_elasticities(model, X, column, 1, Task.SP, scaler, h=1e-6)
    assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-10)


def test_av_cost_elasticity_is_negative(fitted):
    model, raw, scaler, _ = fitted
    res = elasticity(model, raw, "av_cost", "av", scaler)
    assert res.value < 0
    assert res.n_used + res.n_excluded == raw.n_sp
    table = elasticity_table(model, raw, ["x0", "av_cost", "av_wait"], "av", scaler)
    assert list(table.columns) == ["variable", "elasticity", "n_used", "n_excluded"]
    assert np.all(np.diff(table["elasticity"].abs().to_numpy()) <= 0)


def test_rows_where_the_variable_is_zero_are_excluded(fitted):
    model, raw, scaler, _ = fitted
    X = np.array(raw.X)
    sp = raw.task == 1
    rows = np.flatnonzero(sp)[:10]
    X[rows, raw.schema.index("x0")] = 0.0
    res = elasticity(model, raw.replace(X=X), "x0", "walk", scaler)
    assert res.n_excluded == 10


def test_interpretation_errors(fitted):
    model, raw, scaler, _ = fitted
    with pytest.raises(InterpretationError):
        CurveSpec("x0", [1.0, 1.0])
    with pytest.raises(InterpretationError):
        CurveSpec("x0", [])
    with pytest.raises(InterpretationError):
        prob_curve(model, raw, CurveSpec("income", [0.0, 1.0]), scaler)
    with pytest.raises(InterpretationError):
        prob_curve(model, raw, CurveSpec("av_cost", [0.0, 1.0], "rp"), scaler)
    with pytest.raises(InterpretationError):
        prob_curve(model, raw, CurveSpec("x0", [0.0, 1.0], "rp", ["av"]), scaler, mask_rp=True)
    with pytest.raises(InterpretationError):
        prob_curve(model, raw, CurveSpec("x0", [0.0, 1.0], "sp", ["bike"]), scaler)
    with pytest.raises(InterpretationError):
        elasticity(model, raw, "x0", "av", scaler, task="rp", mask_rp=True)
    with pytest.raises(InterpretationError):
        elasticity(model, raw.only(Task.RP), "x0", "walk", scaler)


def test_plot_curves(tmp_path, fitted):
    pytest.importorskip("matplotlib")
    model, raw, scaler, _ = fitted
    frame = prob_curve(model, raw, CurveSpec("av_cost", [0.5, 1.0, 2.0]), scaler)
    path = tmp_path / "curve.svg"
    plot_curves(frame, path, title="av_cost")
    assert path.read_text().lstrip().startswith("<?xml")


def test_matplotlib_loader_exposes_only_what_is_plotted():
    assert _matplotlib._name == "matplotlib"
    loaded = [k for k, v in vars(type(_matplotlib)).items() if isinstance(v, property)]
    assert loaded == ["Figure"]


def test_missing_matplotlib_raises_import_error():
    if _matplotlib.__is_available__:
        pytest.skip("matplotlib is installed")
    assert isinstance(_matplotlib.Figure, NotAModule)
    with pytest.raises(ImportError):
        _matplotlib.Figure()
