"""
Random hyperparameter search over multitask networks, ranking of the runs,
and top-k probability-averaging ensembles.
"""


import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from hashlib import md5

import numpy as np
import pandas as pd

from mtlchoice.core import Batch, LossSpec, loss_and_grad
from mtlchoice.data import Task, task_accuracies, write_frame
from mtlchoice.exceptions import ConfigurationError, DomainError, TrainingDivergedError
from mtlchoice.mtldnn import HyperConfig, build, train
from mtlchoice.serialization import load_model, save_model

logger = logging.getLogger(__name__)

TEST_RISK = "test_risk"
TEST_JOINT_ACCURACY = "test_joint_accuracy"
SELECTIONS = (TEST_RISK, TEST_JOINT_ACCURACY)

#: the dimensions of a search space, in the order they are drawn
DIMENSIONS = ("M1", "M2", "width", "lambda1", "lambda2", "lambda3", "n_iter", "batch", "lr")

METRICS = (
    "train_joint", "train_rp", "train_sp", "test_joint", "test_rp", "test_sp",
    "test_risk", "final_loss", "T",
)


@dataclass(frozen=True)
class SearchSpace:
    """Candidate values of every hyperparameter.

    The defaults are the standard search space: depths 1 to 5, four widths
    and four penalty levels, 20000 iterations of batch 200.
    """

    M1: tuple = (1, 2, 3, 4, 5)
    M2: tuple = (1, 2, 3, 4, 5)
    width: tuple = (25, 50, 100, 200)
    lambda1: tuple = (1e-20, 1e-4, 1e-2, 5e-1)
    lambda2: tuple = (1e-20, 1e-4, 1e-2, 5e-1)
    lambda3: tuple = (1e-20, 1e-4, 1e-2, 5e-1)
    n_iter: tuple = (20000,)
    batch: tuple = (200,)
    lr: tuple = (1e-3,)

    def __post_init__(self):
        for name in DIMENSIONS:
            values = getattr(self, name)
            if np.isscalar(values):
                values = (values,)
            values = tuple(values)
            if not values:
                raise ConfigurationError(f"space.{name}", "needs at least one value")
            object.__setattr__(self, name, values)

    @property
    def size(self):
        return int(np.prod([len(getattr(self, n)) for n in DIMENSIONS]))

    def to_dict(self):
        return {n: list(getattr(self, n)) for n in DIMENSIONS}

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(DIMENSIONS)
        if unknown:
            raise ConfigurationError("space", f"unknown dimensions {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in data.items()})


def sample(space, rng):
    """One independent uniform draw per dimension.

    Examples
    --------
    >>> import numpy as np
    >>> space = SearchSpace(M1=(2,), M2=(1,), width=(25,), lambda1=(0.0,),
    ...                     lambda2=(0.0,), lambda3=(0.0,), n_iter=(10,),
    ...                     batch=(5,), lr=(0.01,))
    >>> sample(space, np.random.default_rng(0))
    HyperConfig(M1=2, M2=1, width=25, lambda0=1.0, lambda1=0.0, lambda2=0.0, lambda3=0.0, n_iter=10, batch=5, lr=0.01, seed=0)
    """
    draw = {}
    for name in DIMENSIONS:
        values = getattr(space, name)
        value = values[int(rng.integers(len(values)))]
        draw[name] = value.item() if isinstance(value, np.generic) else value
    return HyperConfig(**draw)


def run_seed(seed, index):
    """Seed of the ``index``-th run of a search seeded with ``seed``."""
    return int(md5(f"{seed}:{index}".encode("utf8")).hexdigest()[:8], 16)


@dataclass
class SearchEntry:
    index: int
    hyper: HyperConfig
    status: str = "ok"
    metrics: dict = field(default_factory=dict)
    model: object = None
    model_file: str = None
    error: str = None

    @property
    def ok(self):
        return self.status == "ok"


@dataclass
class SearchResult:
    """All runs of a search, in draw order, and the ranking of the
    successful ones by the selection criterion."""

    entries: list
    selection: str = TEST_RISK
    seed: int = 0

    @property
    def ranking(self):
        ok = [e for e in self.entries if e.ok]
        return sorted(ok, key=lambda e: (_criterion(e.metrics, self.selection), e.index))

    @property
    def best(self):
        ranking = self.ranking
        return ranking[0] if ranking else None

    def top(self, k):
        return self.ranking[:k]


def _criterion(metrics, selection):
    value = float(metrics["test_risk"] if selection == TEST_RISK else -metrics["test_joint"])
    # NaN runs rank last
    return (np.isnan(value), 0.0 if np.isnan(value) else value)


def evaluation_risk(model, dataset):
    """Unpenalized multitask risk of ``model`` on every row of ``dataset``."""
    X_rp, y_rp = dataset.rows(Task.RP)
    X_sp, y_sp = dataset.rows(Task.SP)
    batch = Batch.from_arrays(
        X_rp if len(y_rp) else None, y_rp, X_sp if len(y_sp) else None, y_sp,
        d=dataset.schema.d,
    )
    comps, _ = loss_and_grad(model, batch, LossSpec())
    return comps.total


def evaluate_network(model, train_data, test_data, mask_rp=False):
    metrics = {}
    for prefix, data in (("train", train_data), ("test", test_data)):
        for key, value in task_accuracies(model, data, mask_rp).items():
            metrics[f"{prefix}_{key}"] = value
    metrics["test_risk"] = evaluation_risk(model, test_data)
    metrics["T"] = model.T
    return metrics


def _run_one(index, hyper, train_data, test_data, mask_rp):
    try:
        model = build(
            hyper, train_data.schema.d, train_data.K_r, train_data.K_s,
            train_data.schema.av_indices,
        )
        model, history = train(model, train_data, hyper)
    except TrainingDivergedError as exc:
        return SearchEntry(index, hyper, "failed", error=str(exc))
    metrics = evaluate_network(model, train_data, test_data, mask_rp)
    metrics["final_loss"] = history.components["total"][-1]
    return SearchEntry(index, hyper, "ok", metrics, model)


def random_search(space, train_data, test_data, S, selection=TEST_RISK, seed=0,
                  workers=1, model_dir=None, mask_rp=False):
    """Train ``S`` randomly drawn configurations and rank them on ``test_data``.

    All configurations are drawn up front from a generator seeded with
    ``seed``; run ``q`` trains with the seed ``run_seed(seed, q)``. The
    result does not depend on ``workers``. Runs whose training diverges are
    marked failed and left out of the ranking.

    Parameters
    ----------
    space : :class:`SearchSpace`
    train_data, test_data : :class:`~mtlchoice.data.Dataset`
    S : int
        Number of draws.
    selection : {"test_risk", "test_joint_accuracy"}
    seed : int
    workers : int
        Number of worker processes; 1 runs everything in this process.
    model_dir : path-like, optional
        Where to write one model file per successful run.
    mask_rp : bool
        Renormalize pooled RP predictions over the RP alternatives.

    Returns
    -------
    :class:`SearchResult`
    """
    if S < 1:
        raise DomainError("number of draws", S, "[1, inf)")
    if selection not in SELECTIONS:
        raise ConfigurationError("selection", f"must be one of {list(SELECTIONS)}", selection)
    rng = np.random.default_rng(seed)
    configs = [sample(space, rng).replace(seed=run_seed(seed, q)) for q in range(S)]
    args = [(q, h, train_data, test_data, mask_rp) for q, h in enumerate(configs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_run_one, *zip(*args)))
    else:
        entries = [_run_one(*a) for a in args]
    for entry in entries:
        if entry.ok:
            logger.info(
                "run %d (%s): test joint accuracy %.4f, test risk %.4f",
                entry.index, entry.hyper.kind, entry.metrics["test_joint"],
                entry.metrics["test_risk"],
            )
        else:
            logger.warning("run %d failed: %s", entry.index, entry.error)
    result = SearchResult(entries, selection, seed)
    if model_dir is not None:
        save_models(result, model_dir, train_data.schema)
    return result


def save_models(result, model_dir, schema, scaler=None, metadata=None):
    """Write the model of every successful run to ``model_dir``."""
    os.makedirs(model_dir, exist_ok=True)
    for entry in result.entries:
        if entry.ok and entry.model is not None:
            name = f"run_{entry.index:04d}.json"
            meta = dict(metadata or {}, seed=entry.hyper.seed, run=entry.index)
            save_model(entry.model, os.path.join(model_dir, name), schema, scaler, meta)
            entry.model_file = os.path.join(os.path.basename(os.path.normpath(model_dir)), name)


class EnsemblePredictor:
    """Unweighted mean of the probability outputs of several models."""

    def __init__(self, models):
        self.models = list(models)
        if not self.models:
            raise DomainError("ensemble size", 0, "[1, inf)")

    def predict(self, X, task, mask_rp=False):
        return np.mean([m.predict(X, task, mask_rp) for m in self.models], axis=0)

    def input_gradient(self, X, task, alternative, mask_rp=False):
        return np.mean(
            [m.input_gradient(X, task, alternative, mask_rp) for m in self.models], axis=0
        )


def ensemble_topk(result, k, data, mask_rp=False):
    """Ensemble of the ``k`` best runs and its accuracies on ``data``.

    Returns
    -------
    (:class:`EnsemblePredictor`, dict)
    """
    ranking = result.ranking
    if not 1 <= k <= len(ranking):
        raise DomainError("ensemble size", k, f"[1, {len(ranking)}]")
    predictor = EnsemblePredictor([e.model for e in ranking[:k]])
    return predictor, task_accuracies(predictor, data, mask_rp)


def sensitivity(result, field_name):
    """Test joint accuracy of the successful runs grouped by one hyperparameter.

    Returns a frame with the columns ``value``, ``n_runs``,
    ``mean_accuracy`` and ``max_accuracy``.
    """
    if field_name not in {f.name for f in fields(HyperConfig)}:
        raise ConfigurationError("field", "is not a hyperparameter", field_name)
    rows = [(getattr(e.hyper, field_name), e.metrics["test_joint"]) for e in result.entries if e.ok]
    frame = pd.DataFrame(rows, columns=["value", "accuracy"])
    out = frame.groupby("value")["accuracy"].agg(["count", "mean", "max"]).reset_index()
    return out.rename(
        columns={"count": "n_runs", "mean": "mean_accuracy", "max": "max_accuracy"}
    )


def temperature_summary(result, top=10):
    """Learned SP temperatures of the ``top`` ranked runs."""
    rows = [
        {"rank": r + 1, "run": e.index, "kind": e.hyper.kind, "T": e.metrics["T"]}
        for r, e in enumerate(result.top(top))
    ]
    return pd.DataFrame(rows, columns=["rank", "run", "kind", "T"])


def report_frame(result):
    rank = {e.index: r + 1 for r, e in enumerate(result.ranking)}
    rows = []
    for e in sorted(result.entries, key=lambda e: (rank.get(e.index, np.inf), e.index)):
        row = {"rank": rank.get(e.index, ""), "run": e.index, "status": e.status}
        row.update({f: getattr(e.hyper, f) for f in ("seed",) + DIMENSIONS})
        row["kind"] = e.hyper.kind
        row.update({m: e.metrics.get(m, np.nan) for m in METRICS})
        row["model_file"] = e.model_file or ""
        row["error"] = e.error or ""
        row["selection"] = result.selection
        row["search_seed"] = result.seed
        rows.append(row)
    return pd.DataFrame(rows)


def summary_text(result):
    n_ok = sum(e.ok for e in result.entries)
    lines = [
        f"runs: {len(result.entries)} ({n_ok} succeeded, "
        f"{len(result.entries) - n_ok} failed)",
        f"selection: {result.selection}",
        f"seed: {result.seed}",
    ]
    best = result.best
    if best is not None:
        lines.append(
            f"best run: {best.index} ({best.hyper.kind}, M1={best.hyper.M1}, "
            f"M2={best.hyper.M2}, width={best.hyper.width})"
        )
        for m in METRICS:
            lines.append(f"  {m}: {best.metrics[m]:.6f}")
    return "\n".join(lines) + "\n"


def write_report(result, path, header_comment=None):
    """Write one CSV row per run, ranked runs first."""
    write_frame(report_frame(result), path, header_comment)


def read_report(path):
    """Read a report written by :func:`write_report` into a :class:`SearchResult`.

    Model files are loaded relative to the directory of the report.
    """
    frame = pd.read_csv(path, comment="#", keep_default_na=False)
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for row in frame.to_dict("records"):
        hyper = HyperConfig(
            **{f: _py(row[f]) for f in ("seed",) + DIMENSIONS}
        )
        entry = SearchEntry(int(row["run"]), hyper, row["status"], error=row["error"] or None)
        if entry.ok:
            entry.metrics = {m: float(row[m]) for m in METRICS}
            if row["model_file"]:
                entry.model_file = row["model_file"]
                entry.model = load_model(os.path.join(base, row["model_file"])).model
        entries.append(entry)
    entries.sort(key=lambda e: e.index)
    if not len(frame):
        return SearchResult(entries)
    return SearchResult(entries, frame["selection"].iloc[0], int(frame["search_seed"].iloc[0]))


def _py(value):
    return value.item() if isinstance(value, np.generic) else value
