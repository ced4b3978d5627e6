"""
Test experiment configuration files

"""


import json

import pytest

from mtlchoice.config import OUTPUT_DIR_ENV, ExperimentConfig
from mtlchoice.data import Task, write_csv
from mtlchoice.exceptions import ConfigurationError
from mtlchoice.mtldnn import HyperConfig
from mtlchoice.nl import Tie
from mtlchoice.search import SearchSpace
from mtlchoice.synth import DgpKind, generate, preset

TINY = {"synth": {"preset": "tiny", "n_r": 50, "n_s": 50}}


def test_defaults():
    cfg = ExperimentConfig.from_dict(TINY)
    assert cfg.model == "mtldnn"
    assert cfg.ratio == 0.8
    assert cfg.resolved_split_seed == 0
    assert cfg.hyper_config() == HyperConfig()
    assert cfg.search_space() == SearchSpace()
    assert cfg.dgp_spec().kind is DgpKind.LINEAR_MNL
    assert cfg.synth_seed == 0
    assert cfg.elasticity_request() is None


def test_sub_configurations_take_the_master_seed():
    cfg = ExperimentConfig.from_dict({**TINY, "seed": 9, "hyper": {"width": 5}})
    assert cfg.hyper_config() == HyperConfig(width=5, seed=9)
    assert cfg.opt_config().seed == 9
    assert cfg.synth_seed == 9
    cfg = ExperimentConfig.from_dict(
        {"synth": {**TINY["synth"], "seed": 2}, "seed": 9, "split_seed": 4}
    )
    assert cfg.synth_seed == 2
    assert cfg.resolved_split_seed == 4


@pytest.mark.parametrize(
    "data",
    [
        {},
        {**TINY, "csv": "data.csv"},
        {"csv": "data.csv", "K_r": 2, "K_s": 3},
        {**TINY, "colour": "blue"},
        {"synth": {"preset": "tiny", "n_r": 0, "n_s": 5}},
        {"synth": {"preset": "tiny", "n_r": 5}},
        {"synth": {"preset": "tiny", "n_r": 5, "n_s": 5, "noise": 1}},
        {"synth": {"preset": "city", "n_r": 5, "n_s": 5}},
        {"synth": {"kind": "Quadratic", "n_r": 5, "n_s": 5}},
        {**TINY, "ratio": 1.0},
        {**TINY, "model": "forest"},
        {**TINY, "ties": [["x0", "a"]]},
        {**TINY, "model": "nl-c", "ties": [["x0"]]},
        {**TINY, "selection": "loss"},
        {**TINY, "S": 0},
        {**TINY, "workers": 1.5},
        {**TINY, "k": True},
        {**TINY, "phi_degree": 3},
        {**TINY, "hyper": {"depth": 3}},
        {**TINY, "hyper": {"M1": 0, "M2": 0}},
        {**TINY, "space": {"depth": [3]}},
        {**TINY, "opt": {"tol": 1}},
        {**TINY, "curves": [{"variable": "x0", "grid": [1, 0]}]},
        {**TINY, "curves": [{"variable": "x0", "grid": [0, 1], "colour": "red"}]},
        {**TINY, "elasticities": {"variables": ["x0"]}},
        {**TINY, "elasticities": {"variables": ["x0"], "alternative": "a", "task": "xp"}},
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(data)


def test_non_object_is_rejected():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict([1, 2])


def test_from_file_resolves_relative_paths(tmp_path):
    data = generate(preset("tiny"), 20, 20, seed=0)
    (tmp_path / "inputs").mkdir()
    write_csv(data, tmp_path / "inputs" / "data.csv")
    path = tmp_path / "experiment.json"
    path.write_text(
        json.dumps(
            {
                "csv": "inputs/data.csv",
                "schema": {"names": ["x0", "x1"]},
                "K_r": 3,
                "K_s": 3,
                "alternatives": ["a", "b", "c"],
                "model": "nl-c",
                "ties": [["x0", "a"]],
            }
        )
    )
    cfg = ExperimentConfig.from_file(path)
    assert cfg.data_source == "csv"
    assert cfg.resolve_path(cfg.csv) == str(tmp_path / "inputs" / "data.csv")
    assert cfg.feature_schema().names == ("x0", "x1")
    assert cfg.tie_list() == (Tie("x0", "a"),)


def test_malformed_files(tmp_path):
    path = tmp_path / "experiment.json"
    path.write_text("{")
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_file(path)
    path.write_text(json.dumps({"csv": "d.csv", "schema": {"cols": []}, "K_r": 2, "K_s": 2}))
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_file(path)


def test_hash_ignores_where_and_how_fast():
    cfg = ExperimentConfig.from_dict(TINY)
    assert cfg.config_hash == ExperimentConfig.from_dict(TINY).config_hash
    assert len(cfg.config_hash) == 32
    moved = cfg.with_overrides(output_dir="elsewhere", workers=4)
    assert moved.config_hash == cfg.config_hash
    assert cfg.with_overrides(seed=1).config_hash != cfg.config_hash
    assert ExperimentConfig.from_dict(json.loads(cfg.to_json())) == cfg


def test_overrides_are_validated():
    cfg = ExperimentConfig.from_dict(TINY)
    assert cfg.with_overrides(model=None, seed=None) is cfg
    assert cfg.with_overrides(model="mnl-spt").model == "mnl-spt"
    with pytest.raises(ConfigurationError):
        cfg.with_overrides(k=0)


def test_output_directory_resolution(monkeypatch):
    cfg = ExperimentConfig.from_dict(TINY)
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    assert cfg.resolved_output_dir == "output"
    monkeypatch.setenv(OUTPUT_DIR_ENV, "from_env")
    assert cfg.resolved_output_dir == "from_env"
    assert cfg.with_overrides(output_dir="explicit").resolved_output_dir == "explicit"


def test_synth_spec_and_requests():
    spec = preset("tiny", DgpKind.SCALED_NL).to_dict()
    cfg = ExperimentConfig.from_dict(
        {
            "synth": {"spec": spec, "n_r": 5, "n_s": 5},
            "curves": [{"variable": "x0", "grid": [0, 1], "task": "rp"}],
            "elasticities": {"variables": ["x0", "x1"], "alternative": "a"},
        }
    )
    assert cfg.dgp_spec().theta == 2.0
    (curve,) = cfg.curve_specs()
    assert curve.task is Task.RP
    assert curve.grid == (0.0, 1.0)
    assert cfg.elasticity_request() == (("x0", "x1"), "a", Task.SP)
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"synth": {"spec": spec, "preset": "tiny", "n_r": 5, "n_s": 5}})
