"""
Test random search, ranking, reports and ensembles

"""


import numpy as np
import pytest
from numpy.testing import assert_allclose

from mtlchoice.data import split, standardize
from mtlchoice.exceptions import ConfigurationError, DomainError
from mtlchoice.mtldnn import HyperConfig, MtldnnModel
from mtlchoice.search import (
    DIMENSIONS,
    TEST_JOINT_ACCURACY,
    EnsemblePredictor,
    SearchEntry,
    SearchResult,
    SearchSpace,
    ensemble_topk,
    evaluation_risk,
    random_search,
    read_report,
    report_frame,
    run_seed,
    sample,
    save_models,
    sensitivity,
    summary_text,
    temperature_summary,
    write_report,
)
from mtlchoice.synth import generate, preset

SMALL = SearchSpace(
    M1=(1, 2),
    M2=(0, 1, 2),
    width=(4, 6),
    lambda1=(1e-20, 1e-2),
    lambda2=(1e-4,),
    lambda3=(0.0, 1e-2),
    n_iter=(40,),
    batch=(30,),
    lr=(1e-2,),
)


@pytest.fixture(scope="module")
def splits():
    data = generate(preset("tiny"), 150, 150, seed=0)
    train, test, _ = standardize(*split(data, 0.8, seed=0))
    return train, test


@pytest.fixture(scope="module")
def result(splits):
    return random_search(SMALL, *splits, S=6, seed=3)


def test_space_defaults_and_validation():
    space = SearchSpace()
    assert space.M1 == (1, 2, 3, 4, 5)
    assert space.size == 5 * 5 * 4 * 4 * 4 * 4
    assert SearchSpace(lr=0.1).lr == (0.1,)
    assert SearchSpace.from_dict(space.to_dict()) == space
    with pytest.raises(ConfigurationError):
        SearchSpace(width=())
    with pytest.raises(ConfigurationError):
        SearchSpace.from_dict({"depth": [1]})


def test_sample_draws_from_the_space():
    rng = np.random.default_rng(0)
    for _ in range(50):
        hyper = sample(SMALL, rng)
        for name in DIMENSIONS:
            assert getattr(hyper, name) in getattr(SMALL, name)
        assert isinstance(hyper.M1, int)
    # invalid draws surface as configuration errors
    with pytest.raises(ConfigurationError):
        sample(SearchSpace(M1=(0,), M2=(0,)), rng)


def test_run_seeds_are_stable_and_distinct():
    assert run_seed(3, 0) == run_seed(3, 0)
    seeds = {run_seed(3, q) for q in range(100)}
    assert len(seeds) == 100
    assert run_seed(3, 0) != run_seed(4, 0)


def test_search_ranks_successful_runs(result):
    assert [e.index for e in result.entries] == list(range(6))
    ranking = result.ranking
    assert ranking[0] is result.best
    risks = [e.metrics["test_risk"] for e in ranking]
    assert risks == sorted(risks)
    for e in result.entries:
        assert e.hyper.seed == run_seed(3, e.index)
        assert 0.0 <= e.metrics["test_joint"] <= 1.0
    assert result.top(2) == ranking[:2]


def test_search_is_reproducible(splits, result):
    again = random_search(SMALL, *splits, S=6, seed=3)
    for a, b in zip(result.entries, again.entries):
        assert a.hyper == b.hyper
        assert a.metrics == b.metrics


def test_search_does_not_depend_on_workers(splits, result):
    parallel = random_search(SMALL, *splits, S=6, seed=3, workers=2)
    for a, b in zip(result.entries, parallel.entries):
        assert a.metrics == b.metrics


def test_accuracy_selection(splits):
    res = random_search(SMALL, *splits, S=4, seed=1, selection=TEST_JOINT_ACCURACY)
    acc = [e.metrics["test_joint"] for e in res.ranking]
    assert acc == sorted(acc, reverse=True)


@pytest.mark.parametrize("selection", ["test_risk", TEST_JOINT_ACCURACY])
def test_nan_metrics_rank_last(selection):
    values = [(0.9, 0.4), (np.nan, np.nan), (0.7, 0.5), (np.nan, np.nan), (0.8, 0.3)]
    entries = [
        SearchEntry(i, HyperConfig(), metrics={"test_risk": risk, "test_joint": acc})
        for i, (risk, acc) in enumerate(values)
    ]
    ranked = [e.index for e in SearchResult(entries, selection).ranking]
    assert ranked[-2:] == [1, 3]
    assert sorted(ranked[:3]) == [0, 2, 4]
    assert ranked[0] == 2


def test_failed_runs_are_kept_but_not_ranked(splits):
    space = SearchSpace(**{**SMALL.to_dict(), "M1": (1,), "M2": (1,), "lr": (1e200,)})
    res = random_search(space, *splits, S=2, seed=0)
    assert all(e.status == "failed" for e in res.entries)
    assert res.best is None
    assert "diverged" in res.entries[0].error
    assert "0 succeeded" in summary_text(res)
    with pytest.raises(DomainError):
        ensemble_topk(res, 1, splits[1])


def test_search_arguments():
    data = generate(preset("tiny"), 20, 20, seed=0)
    with pytest.raises(DomainError):
        random_search(SMALL, data, data, S=0)
    with pytest.raises(ConfigurationError):
        random_search(SMALL, data, data, S=1, selection="loss")


def test_evaluation_risk_is_unpenalized(result, splits):
    best = result.best
    assert_allclose(evaluation_risk(best.model, splits[1]), best.metrics["test_risk"])


def test_ensemble_averages_probabilities(result, splits):
    _, test = splits
    predictor, acc = ensemble_topk(result, 3, test)
    X, _ = test.rows("sp")
    members = [e.model.predict(X, "sp") for e in result.top(3)]
    assert_allclose(predictor.predict(X, "sp"), np.mean(members, axis=0))
    assert_allclose(predictor.predict(X, "sp").sum(axis=1), 1.0)
    assert set(acc) == {"joint", "rp", "sp"}
    single, _ = ensemble_topk(result, 1, test)
    assert single.models == [result.best.model]
    for k in (0, 7):
        with pytest.raises(DomainError):
            ensemble_topk(result, k, test)
    with pytest.raises(DomainError):
        EnsemblePredictor([])


def test_report_round_trip(tmp_path, result, splits):
    save_models(result, tmp_path / "models", splits[0].schema)
    path = tmp_path / "report.csv"
    write_report(result, path, header_comment="test")
    frame = report_frame(result)
    assert list(frame["run"])[0] == result.best.index
    assert frame["rank"].iloc[0] == 1
    back = read_report(path)
    assert back.seed == 3
    assert [e.index for e in back.ranking] == [e.index for e in result.ranking]
    for a, b in zip(result.entries, back.entries):
        assert a.hyper == b.hyper
        assert_allclose(b.metrics["test_risk"], a.metrics["test_risk"], rtol=1e-12)
        assert isinstance(b.model, MtldnnModel)
        assert b.model_file == f"models/run_{a.index:04d}.json"


def test_sensitivity_and_temperatures(result):
    frame = sensitivity(result, "M1")
    assert list(frame.columns) == ["value", "n_runs", "mean_accuracy", "max_accuracy"]
    assert frame["n_runs"].sum() == 6
    assert np.all(frame["max_accuracy"] >= frame["mean_accuracy"])
    with pytest.raises(ConfigurationError):
        sensitivity(result, "depth")
    temps = temperature_summary(result, top=4)
    assert list(temps["rank"]) == [1, 2, 3, 4]
    for _, row in temps.iterrows():
        if row["kind"] == "dnn-joint":
            assert row["T"] == 1.0
        assert row["T"] > 0
    text = summary_text(result)
    assert f"best run: {result.best.index}" in text
