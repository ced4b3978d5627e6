"""
Task-tagged choice datasets, CSV ingestion, stratified splitting,
standardization and accuracy metrics.

RP and SP rows share one input dimension ``d``. Features that only exist in
the SP survey (the attributes of the SP-only alternative) are listed in the
schema as AV-specific and are identically zero in RP rows.
"""


import enum
import json
import warnings
from dataclasses import dataclass
from hashlib import md5

import numpy as np
import pandas as pd

from mtlchoice.exceptions import (
    DomainError,
    IngestionError,
    InputError,
    SchemaError,
    ZeroVarianceWarning,
)


class Task(str, enum.Enum):
    """The two choice tasks. The string values are those used in CSV files."""

    RP = "rp"
    SP = "sp"

    @property
    def code(self):
        return 0 if self is Task.RP else 1


@dataclass(frozen=True)
class FeatureSchema:
    """Names of the input features and which of them are AV-specific.

    Examples
    --------
    >>> schema = FeatureSchema(["age", "av_cost"], av_specific=["av_cost"])
    >>> schema.d, schema.av_indices
    (2, (1,))
    """

    names: tuple
    av_specific: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        object.__setattr__(self, "av_specific", tuple(str(n) for n in self.av_specific))
        if len(set(self.names)) != len(self.names):
            raise SchemaError(f"Feature names must be unique, received {list(self.names)}.")
        unknown = [n for n in self.av_specific if n not in self.names]
        if unknown:
            raise SchemaError(f"AV-specific features {unknown} are not in the schema.")
        reserved = {"task", "choice", "intercept"} & set(self.names)
        if reserved:
            raise SchemaError(f"Feature names {sorted(reserved)} are reserved.")

    @property
    def d(self):
        return len(self.names)

    @property
    def av_indices(self):
        return tuple(self.names.index(n) for n in self.av_specific)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise InputError(f"Unknown feature '{name}'.") from None

    @property
    def schema_hash(self):
        """md5 digest identifying the feature layout"""
        m = md5()
        m.update(json.dumps([self.names, self.av_specific]).encode("utf8"))
        return m.hexdigest()

    def to_dict(self):
        return {"names": list(self.names), "av_specific": list(self.av_specific)}

    @classmethod
    def from_dict(cls, data):
        return cls(data["names"], data.get("av_specific", ()))


def _readonly(arr, dtype):
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable table of RP and SP choice observations.

    Parameters
    ----------
    task : array-like of int
        0 for RP rows and 1 for SP rows (see :attr:`Task.code`).
    X : array-like, shape (n, d)
    y : array-like of int
        Index of the chosen alternative, 0-based.
    K_r, K_s : int
        Number of RP and SP alternatives. The first ``K_r`` SP alternatives
        are the RP alternatives, in the same order.
    schema : :class:`FeatureSchema`
    alternatives : sequence of str, optional
        ``K_s`` alternative names; defaults to ``alt0``, ``alt1``, ...
    """

    task: np.ndarray
    X: np.ndarray
    y: np.ndarray
    K_r: int
    K_s: int
    schema: FeatureSchema
    alternatives: tuple = ()

    def __post_init__(self):
        task = _readonly(self.task, np.int8).reshape(-1)
        try:
            X = _readonly(self.X, np.float64).reshape(len(task), self.schema.d)
        except ValueError:
            raise SchemaError(
                f"Data of shape {np.shape(self.X)} does not match {len(task)} rows "
                f"of dimension {self.schema.d}."
            ) from None
        y = _readonly(self.y, np.intp).reshape(-1)
        object.__setattr__(self, "task", task)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.alternatives:
            object.__setattr__(
                self, "alternatives", tuple(f"alt{k}" for k in range(self.K_s))
            )
        else:
            object.__setattr__(self, "alternatives", tuple(self.alternatives))
        self._validate()

    def _validate(self):
        if not 0 < self.K_r <= self.K_s:
            raise SchemaError(f"Expected 0 < K_r <= K_s, received {self.K_r}, {self.K_s}.")
        if len(self.alternatives) != self.K_s:
            raise SchemaError(f"Expected {self.K_s} alternative names.")
        if self.X.shape[1] != self.schema.d or len(self.y) != len(self.task):
            raise SchemaError(
                f"Data of shape {self.X.shape} does not match the schema dimension "
                f"{self.schema.d}."
            )
        if not np.all(np.isin(self.task, (0, 1))):
            raise SchemaError("Task codes must be 0 (RP) or 1 (SP).")
        rp = self.task == 0
        bad = rp & ((self.y < 0) | (self.y >= self.K_r))
        bad |= ~rp & ((self.y < 0) | (self.y >= self.K_s))
        if bad.any():
            raise SchemaError(f"Choice index out of range at row {int(np.argmax(bad))}.")
        av = list(self.schema.av_indices)
        if av and np.any(self.X[np.ix_(rp, av)] != 0.0):
            row = int(np.argmax(rp & np.any(self.X[:, av] != 0.0, axis=1)))
            raise SchemaError(f"RP row {row} has nonzero AV-specific features.")

    def __len__(self):
        return len(self.y)

    @property
    def n_rp(self):
        return int(np.sum(self.task == 0))

    @property
    def n_sp(self):
        return int(np.sum(self.task == 1))

    def n_alternatives(self, task):
        return self.K_r if Task(task) is Task.RP else self.K_s

    def rows(self, task):
        """``(X, y)`` of one task, as read-only views"""
        mask = self.task == Task(task).code
        return self.X[mask], self.y[mask]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.intp)
        return self.replace(self.task[indices], self.X[indices], self.y[indices])

    def only(self, task):
        return self.subset(np.flatnonzero(self.task == Task(task).code))

    def replace(self, task=None, X=None, y=None):
        return Dataset(
            self.task if task is None else task,
            self.X if X is None else X,
            self.y if y is None else y,
            self.K_r,
            self.K_s,
            self.schema,
            self.alternatives,
        )

    def alternative_index(self, alternative):
        """Resolve an alternative given by name or index."""
        if isinstance(alternative, (int, np.integer)):
            if not 0 <= alternative < self.K_s:
                raise InputError(f"Alternative index {alternative} out of range.")
            return int(alternative)
        try:
            return self.alternatives.index(alternative)
        except ValueError:
            raise InputError(f"Unknown alternative '{alternative}'.") from None


def load_csv(path, schema, K_r, K_s, alternatives=()):
    """Read a choice data file.

    The header must contain ``task``, ``choice`` and every schema feature.
    Lines starting with ``#`` are comments.

    Parameters
    ----------
    path : str or path-like
    schema : :class:`FeatureSchema`
    K_r, K_s : int
        Number of RP and SP alternatives, used to range-check choices.
    alternatives : sequence of str, optional

    Raises
    ------
    IngestionError
        Unreadable or non-UTF-8 files, missing columns, unparseable numbers, invalid tasks, out-of-range
        choices, or AV-specific values in RP rows. The error names the
        1-based data row.
    """
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, comment="#", skipinitialspace=True,
            encoding="utf-8",
        )
    except (
        OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError
    ) as exc:
        raise IngestionError(path, str(exc)) from exc
    expected = ["task", "choice"] + list(schema.names)
    for column in expected:
        if column not in frame.columns:
            raise IngestionError(path, "missing column", row=0, column=column)
    for column in frame.columns:
        if column not in expected:
            raise IngestionError(path, "unexpected column", row=0, column=column)

    tasks = frame["task"].str.strip().str.lower()
    bad = ~tasks.isin([t.value for t in Task])
    if bad.any():
        raise IngestionError(path, "task must be 'rp' or 'sp'", _first(bad), "task")
    task = np.where(tasks == Task.RP.value, 0, 1)

    choice = pd.to_numeric(frame["choice"], errors="coerce")
    integral = choice.notna() & (choice == choice.round())
    if not integral.all():
        raise IngestionError(path, "unparseable choice", _first(~integral), "choice")
    choice = choice.to_numpy(dtype=np.int64)
    limit = np.where(task == 0, K_r, K_s)
    bad = (choice < 0) | (choice >= limit)
    if bad.any():
        raise IngestionError(path, "choice index out of range", _first(bad), "choice")

    X = np.empty((len(frame), schema.d))
    for j, name in enumerate(schema.names):
        values = pd.to_numeric(frame[name], errors="coerce")
        bad = values.isna() | ~np.isfinite(values)
        if bad.any():
            raise IngestionError(path, "unparseable number", _first(bad), name)
        X[:, j] = values.to_numpy(dtype=np.float64)

    av = list(schema.av_indices)
    if av:
        bad = (task == 0) & np.any(X[:, av] != 0.0, axis=1)
        if bad.any():
            raise IngestionError(path, "RP row has nonzero AV-specific values", _first(bad))
    return Dataset(task, X, choice, K_r, K_s, schema, alternatives)


def _first(mask):
    return int(np.argmax(np.asarray(mask))) + 1


def write_csv(dataset, path, header_comment=None):
    """Write ``dataset`` in the format read by :func:`load_csv`."""
    frame = pd.DataFrame(dataset.X, columns=list(dataset.schema.names))
    frame.insert(0, "choice", dataset.y)
    frame.insert(0, "task", np.where(dataset.task == 0, Task.RP.value, Task.SP.value))
    write_frame(frame, path, header_comment)


def split(dataset, ratio=0.8, seed=0):
    """Split into train and test sets, stratified by task.

    Each task is permuted with a generator seeded by ``seed`` and its first
    ``round(ratio * n_task)`` rows go to the training set. Row order within
    each part follows the input.

    Examples
    --------
    >>> from mtlchoice.synth import generate, preset
    >>> data = generate(preset("tiny"), 100, 100, seed=1)
    >>> train, test = split(data, 0.8, seed=0)
    >>> train.n_rp, train.n_sp, test.n_rp, test.n_sp
    (80, 80, 20, 20)
    """
    parts = split_indices(dataset, (ratio,), seed)
    return dataset.subset(parts[0]), dataset.subset(parts[1])


def split_three(dataset, ratios=(0.6, 0.2), seed=0):
    """Split into train, validation and test sets, stratified by task."""
    parts = split_indices(dataset, ratios, seed)
    return tuple(dataset.subset(p) for p in parts)


def split_indices(dataset, ratios, seed):
    ratios = tuple(float(r) for r in ratios)
    if any(r <= 0 for r in ratios) or not sum(ratios) < 1.0:
        raise DomainError("split ratios", ratios, "(0, 1) with a sum below 1")
    rng = np.random.default_rng(seed)
    parts = [[] for _ in range(len(ratios) + 1)]
    for t in Task:
        idx = np.flatnonzero(dataset.task == t.code)
        if idx.size == 0:
            raise InputError(f"Cannot split: the {t.name} stratum is empty.")
        perm = rng.permutation(idx)
        cuts = np.round(np.cumsum(ratios) * idx.size).astype(int)
        for part, chunk in zip(parts, np.split(perm, cuts)):
            part.append(chunk)
    return [np.sort(np.concatenate(p)) for p in parts]


@dataclass(frozen=True, eq=False)
class Scaler:
    """Column-wise affine standardization fitted on a training set.

    AV-specific columns are only transformed in SP rows, so RP rows keep
    their zeros.
    """

    mean: np.ndarray
    scale: np.ndarray
    av_columns: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "mean", _readonly(self.mean, np.float64))
        object.__setattr__(self, "scale", _readonly(self.scale, np.float64))
        object.__setattr__(self, "av_columns", tuple(int(c) for c in self.av_columns))

    @classmethod
    def identity(cls, d, av_columns=()):
        return cls(np.zeros(d), np.ones(d), av_columns)

    @classmethod
    def fit(cls, dataset):
        X = dataset.X
        sp = dataset.task == 1
        mean = X.mean(axis=0) if len(X) else np.zeros(dataset.schema.d)
        sd = X.std(axis=0) if len(X) else np.ones(dataset.schema.d)
        for j in dataset.schema.av_indices:
            if sp.any():
                mean[j], sd[j] = X[sp, j].mean(), X[sp, j].std()
            else:
                mean[j], sd[j] = 0.0, 0.0
        constant = ~(sd > 1e-12 * np.maximum(1.0, np.abs(mean)))
        for j in np.flatnonzero(constant):
            warnings.warn(
                f"Feature '{dataset.schema.names[j]}' has zero variance in the "
                "training set and is left unscaled.",
                ZeroVarianceWarning,
                stacklevel=3,
            )
        mean[constant] = 0.0
        sd[constant] = 1.0
        return cls(mean, sd, dataset.schema.av_indices)

    def _mask(self, task_codes):
        # True where a column is transformed
        mask = np.ones((len(task_codes), len(self.mean)), dtype=bool)
        if self.av_columns:
            mask[np.ix_(np.asarray(task_codes) == 0, list(self.av_columns))] = False
        return mask

    def transform_array(self, X, task):
        """Standardize the rows of ``X``, all of which belong to ``task``."""
        X = np.asarray(X, dtype=np.float64)
        codes = np.full(len(X), Task(task).code)
        return np.where(self._mask(codes), (X - self.mean) / self.scale, X)

    def transform(self, dataset):
        mask = self._mask(dataset.task)
        return dataset.replace(X=np.where(mask, (dataset.X - self.mean) / self.scale, dataset.X))

    def inverse_transform(self, dataset):
        mask = self._mask(dataset.task)
        return dataset.replace(X=np.where(mask, dataset.X * self.scale + self.mean, dataset.X))

    def derivative(self, column):
        """d(standardized value) / d(raw value) of one column"""
        return 1.0 / self.scale[column]

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "av_columns": list(self.av_columns),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["mean"], data["scale"], data.get("av_columns", ()))


def standardize(train, test):
    """Standardize both sets with statistics of the training set.

    Returns ``(train', test', scaler)``. Zero-variance columns are left
    unchanged and a :class:`~mtlchoice.exceptions.ZeroVarianceWarning` is
    issued.
    """
    if len(train) == 0:
        raise InputError("Cannot standardize with an empty training set.")
    scaler = Scaler.fit(train)
    return scaler.transform(train), scaler.transform(test), scaler


def accuracy(probs, labels):
    """Fraction of rows whose most probable alternative is the label.

    Ties are resolved in favour of the lowest alternative index. ``probs``
    may be a 2-d array or a list of vectors of different lengths.

    Examples
    --------
    >>> accuracy([[0.2, 0.8], [0.6, 0.4]], [1, 0])
    1.0
    """
    labels = np.asarray(labels, dtype=np.intp)
    if len(probs) != len(labels):
        raise InputError(f"Received {len(probs)} probability rows and {len(labels)} labels.")
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(_argmax_rows(probs) == labels))


def _argmax_rows(probs):
    if isinstance(probs, np.ndarray) and probs.ndim == 2:
        return np.argmax(probs, axis=1)
    return np.array([int(np.argmax(p)) for p in probs], dtype=np.intp)


def task_accuracies(model, dataset, mask_rp=False):
    """RP, SP and pooled accuracy of ``model`` on ``dataset``.

    ``model`` is anything with a ``predict(X, task, mask_rp=...)`` method.
    The pooled figure weighs every observation equally.
    """
    correct = {}
    counts = {}
    for t in Task:
        X, y = dataset.rows(t)
        counts[t] = len(y)
        if len(y):
            P = model.predict(X, t, mask_rp=mask_rp)
            correct[t] = int(np.sum(np.argmax(P, axis=1) == y))
        else:
            correct[t] = 0
    n = counts[Task.RP] + counts[Task.SP]
    return {
        "joint": (correct[Task.RP] + correct[Task.SP]) / n if n else float("nan"),
        "rp": correct[Task.RP] / counts[Task.RP] if counts[Task.RP] else float("nan"),
        "sp": correct[Task.SP] / counts[Task.SP] if counts[Task.SP] else float("nan"),
    }


def write_frame(frame, path, header_comment=None):
    """Write a table as CSV, preceded by a ``#`` comment line if given."""
    with open(path, "w", encoding="utf8", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        frame.to_csv(f, index=False, lineterminator="\n")
