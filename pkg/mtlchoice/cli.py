"""
The ``mtlchoice`` command line.

Every subcommand reads an experiment config (see :mod:`mtlchoice.config`),
applies the command-line overrides and writes its artifacts to the output
directory. Each CSV artifact starts with a ``#`` comment carrying the
config hash and the seed; model files store both in their metadata.
"""


import argparse
import filecmp
import logging
import os
import sys
import tempfile

import pandas as pd

from mtlchoice._on_demand_imports import _matplotlib
from mtlchoice.config import MODEL_KINDS, ExperimentConfig
from mtlchoice.data import write_csv, write_frame
from mtlchoice.exceptions import ConfigurationError, MtlchoiceError
from mtlchoice.experiments import (
    architecture_sweep,
    compare,
    evaluate_model,
    fit_model,
    lambda3_sweep,
    load_data,
    prepare,
)
from mtlchoice.interpret import elasticity_table, plot_curves, prob_curve
from mtlchoice.search import (
    DIMENSIONS,
    EnsemblePredictor,
    ensemble_topk,
    random_search,
    read_report,
    report_frame,
    save_models,
    sensitivity,
    summary_text,
    temperature_summary,
)
from mtlchoice.serialization import load_model, save_model

logger = logging.getLogger(__name__)

COMMANDS = ("synth", "train", "search", "evaluate", "ensemble", "interpret", "compare", "sweep")

#: exit status of a run that wrote every artifact
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_VERIFY = 3


def _header(config):
    return f"config_hash={config.config_hash} seed={config.seed}"


def _metadata(config, **extra):
    return dict(config_hash=config.config_hash, seed=config.seed, **extra)


def _metrics_frame(metrics):
    return pd.DataFrame({"metric": list(metrics), "value": list(metrics.values())})


def _write_text(path, text):
    with open(path, "w", encoding="utf8", newline="") as f:
        f.write(text)


class Run:
    """One subcommand execution writing into ``out_dir``."""

    def __init__(self, config, args, out_dir):
        self.config = config
        self.args = args
        self.out_dir = out_dir
        self.written = []

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def frame(self, name, frame, index=False):
        if index:
            frame = frame.reset_index()
        write_frame(frame, self.path(name), _header(self.config))
        self.wrote(name)

    def text(self, name, text):
        _write_text(self.path(name), f"# {_header(self.config)}\n{text}")
        self.wrote(name)

    def model(self, name, model, schema, scaler, **extra):
        save_model(model, self.path(name), schema, scaler, _metadata(self.config, **extra))
        self.wrote(name)

    def wrote(self, name):
        self.written.append(name)
        logger.info("wrote %s", self.path(name))


def _require(value, flag):
    if value is None:
        raise ConfigurationError(flag, "is required by this command")
    return value


def cmd_synth(run):
    config = run.config
    if config.data_source != "synth":
        raise ConfigurationError("synth", "the synth command needs a synthetic data source")
    write_csv(load_data(config), run.path("data.csv"), _header(config))
    run.wrote("data.csv")
    _write_text(run.path("dgp.json"), config.dgp_spec().to_json() + "\n")
    run.wrote("dgp.json")


def cmd_train(run):
    config = run.config
    prepared = prepare(config)
    model, history = fit_model(config.model, prepared.train, config)
    run.model("model.json", model, prepared.train.schema, prepared.scaler, kind=config.model)
    metrics = evaluate_model(model, prepared.train, prepared.test, config.mask_rp)
    run.frame("metrics.csv", _metrics_frame(metrics))
    lines = [f"model: {config.model}"] + [f"{k}: {v:.6f}" for k, v in metrics.items()]
    run.text("metrics.txt", "\n".join(lines) + "\n")
    if history is not None:
        run.frame("history.csv", history.to_frame())


def cmd_search(run):
    config = run.config
    prepared = prepare(config)
    result = random_search(
        config.search_space(), prepared.train, prepared.test, config.S,
        config.selection, config.seed, config.workers, mask_rp=config.mask_rp,
    )
    save_models(
        result, run.path("models"), prepared.train.schema, prepared.scaler,
        _metadata(config),
    )
    for entry in result.entries:
        if entry.model_file:
            run.wrote(entry.model_file)
    run.frame("report.csv", report_frame(result))
    run.text("summary.txt", summary_text(result))
    if result.best is not None:
        frames = []
        for name in DIMENSIONS:
            frame = sensitivity(result, name)
            frame.insert(0, "hyperparameter", name)
            frames.append(frame)
        run.frame("sensitivity.csv", pd.concat(frames, ignore_index=True))
        run.frame("temperature.csv", temperature_summary(result, config.k))


def _load_report(run):
    path = _require(run.args.report, "--report")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    result = read_report(path)
    best = result.best
    if best is None or best.model_file is None:
        raise ConfigurationError("--report", "lists no successful run with a model file")
    base = os.path.dirname(os.path.abspath(path))
    stored = load_model(os.path.join(base, best.model_file))
    return result, stored.scaler


def cmd_evaluate(run):
    config = run.config
    stored = load_model(_require(run.args.model_file, "--model-file"))
    dataset = load_data(config)
    if stored.schema != dataset.schema:
        raise ConfigurationError("--model-file", "was fitted on a different feature schema")
    prepared = prepare(config, dataset, scaler=stored.scaler)
    metrics = evaluate_model(stored.model, prepared.train, prepared.test, config.mask_rp)
    run.frame("evaluation.csv", _metrics_frame(metrics))


def cmd_ensemble(run):
    config = run.config
    result, scaler = _load_report(run)
    prepared = prepare(config, scaler=scaler)
    k = config.k
    predictor, _ = ensemble_topk(result, k, prepared.test, config.mask_rp)
    metrics = evaluate_model(predictor, prepared.train, prepared.test, config.mask_rp)
    metrics = {"k": k, **metrics}
    run.frame("ensemble.csv", _metrics_frame(metrics))


def _interpret_models(run, dataset):
    config, args = run.config, run.args
    if args.model_file is not None:
        stored = load_model(args.model_file)
        return [stored.model], ["0"], stored.scaler
    if args.report is not None:
        result, scaler = _load_report(run)
        k = min(config.k, len(result.ranking))
        top = result.top(k)
        return [e.model for e in top], [str(e.index) for e in top], scaler
    prepared = prepare(config, dataset)
    model, _ = fit_model(config.model, prepared.train, config)
    return [model], ["0"], prepared.scaler


def cmd_interpret(run):
    config = run.config
    curves = config.curve_specs()
    request = config.elasticity_request()
    if not curves and request is None:
        raise ConfigurationError("curves", "interpret needs 'curves' or 'elasticities'")
    dataset = load_data(config)
    models, ids, scaler = _interpret_models(run, dataset)
    for i, spec in enumerate(curves):
        frame = prob_curve(models, dataset, spec, scaler, ids, config.mask_rp)
        name = f"curve_{i}_{spec.variable}"
        run.frame(f"{name}.csv", frame)
        if _matplotlib.__is_available__:
            # preview only, not among the verified artifacts
            plot_curves(frame, run.path(f"{name}.svg"), title=spec.variable)
    if request is not None:
        variables, alternative, task = request
        model = models[0] if len(models) == 1 else EnsemblePredictor(models)
        table = elasticity_table(
            model, dataset, variables, alternative, scaler, task, config.mask_rp
        )
        run.frame("elasticities.csv", table)


def cmd_compare(run):
    config = run.config
    result = compare(config, prepare(config))
    run.frame("accuracy.csv", result.accuracy, index=True)
    run.frame("characteristics.csv", result.characteristics, index=True)


def cmd_sweep(run):
    config = run.config
    prepared = prepare(config)
    if run.args.sweep == "architecture":
        run.frame("architecture.csv", architecture_sweep(config, prepared))
    else:
        run.frame("lambda3.csv", lambda3_sweep(config, prepared))


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "search": cmd_search,
    "evaluate": cmd_evaluate,
    "ensemble": cmd_ensemble,
    "interpret": cmd_interpret,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mtlchoice",
        description="Multitask networks and logit baselines for joint RP/SP choice data.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("config", help="path of the JSON experiment config")
    parser.add_argument("--output-dir", help="overrides 'output_dir' and $MTLCHOICE_OUTPUT_DIR")
    parser.add_argument("--seed", type=int, help="overrides 'seed'")
    parser.add_argument("--model", choices=MODEL_KINDS, help="overrides 'model'")
    parser.add_argument("--workers", type=int, help="worker processes of the search")
    parser.add_argument("--k", type=int, help="ensemble size")
    parser.add_argument("--model-file", help="model file for evaluate and interpret")
    parser.add_argument("--report", help="search report for ensemble and interpret")
    parser.add_argument(
        "--mask-rp", action="store_true", default=None,
        help="renormalize pooled RP predictions over the RP alternatives",
    )
    parser.add_argument(
        "--sweep", choices=("architecture", "lambda3"), default="architecture",
        help="which sweep the sweep command runs",
    )
    parser.add_argument(
        "--verify", action="store_true",
        help="rerun the command in a scratch directory and compare the artifacts",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def execute(command, config, args, out_dir):
    """Run ``command`` into ``out_dir`` and return the artifact names."""
    os.makedirs(out_dir, exist_ok=True)
    run = Run(config, args, out_dir)
    _COMMANDS[command](run)
    return run.written


def verify(command, config, args, out_dir, written):
    """Rerun ``command`` and list the artifacts that differ byte-wise."""
    with tempfile.TemporaryDirectory() as scratch:
        rerun = execute(command, config, args, scratch)
        names = sorted(set(written) | set(rerun))
        return [
            name for name in names
            if name not in written or name not in rerun
            or not filecmp.cmp(os.path.join(out_dir, name), os.path.join(scratch, name),
                               shallow=False)
        ]


def main(argv=None):
    """Entry point of the ``mtlchoice`` command; returns the exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=max(logging.DEBUG, logging.WARNING - 10 * args.verbose),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = ExperimentConfig.from_file(args.config).with_overrides(
            output_dir=args.output_dir, seed=args.seed, model=args.model,
            workers=args.workers, k=args.k, mask_rp=args.mask_rp,
        )
        out_dir = config.resolved_output_dir
        written = execute(args.command, config, args, out_dir)
        if args.verify:
            differing = verify(args.command, config, args, out_dir, written)
            if differing:
                print(f"error: rerun differs in {', '.join(differing)}", file=sys.stderr)
                return EXIT_VERIFY
            logger.info("verified %d artifacts", len(written))
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_ERROR
    except MtlchoiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
