"""
Saving and loading fitted models.

A model file is a JSON document holding the format version, the model type,
the feature schema and its hash, the fitted scaler, free-form metadata (for
instance the hash of the experiment configuration and the seed) and the
model parameters. Floats are written with ``repr`` precision, so a round trip
reproduces every parameter bit for bit.
"""


import json
from collections import OrderedDict
from dataclasses import dataclass, field

from packaging.version import InvalidVersion, Version

from mtlchoice.data import FeatureSchema, Scaler
from mtlchoice.exceptions import ModelFormatError

#: version of the model file layout written by :func:`save_model`
FORMAT_VERSION = "1.0"

model_registry = OrderedDict()


class _RegisteredModel(type):
    def __init__(cls, name, b, d):
        type.__init__(cls, name, b, d)
        if getattr(cls, "model_type", None):
            model_registry[cls.model_type] = cls


class SerializableModel(metaclass=_RegisteredModel):
    """Base class of every fitted model that can be written to disk.

    Subclasses define a ``model_type`` string and implement ``to_dict`` and
    the ``from_dict`` classmethod.
    """

    model_type = None

    def to_dict(self):
        raise NotImplementedError

    @classmethod
    def from_dict(cls, data):
        raise NotImplementedError

    def to_json(self):
        """Returns a json-serialized version of the model"""
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, json_text):
        return cls.from_dict(json.loads(json_text))


@dataclass
class ModelFile:
    """The contents of a model file."""

    model: SerializableModel
    schema: FeatureSchema
    scaler: Scaler
    metadata: dict = field(default_factory=dict)


def save_model(model, path, schema, scaler=None, metadata=None):
    """Write ``model`` and its preprocessing state to ``path``.

    Parameters
    ----------
    model : :class:`SerializableModel`
    path : str or path-like
    schema : :class:`~mtlchoice.data.FeatureSchema`
        Schema of the raw data the model was fitted on.
    scaler : :class:`~mtlchoice.data.Scaler`, optional
        Standardization applied before the model; identity if omitted.
    metadata : dict, optional
        Extra JSON-serializable entries, e.g. the config hash and seed.
    """
    if scaler is None:
        scaler = Scaler.identity(schema.d, schema.av_indices)
    payload = {
        "format_version": FORMAT_VERSION,
        "model_type": model.model_type,
        "schema": schema.to_dict(),
        "schema_hash": schema.schema_hash,
        "scaler": scaler.to_dict(),
        "metadata": dict(metadata or {}),
        "model": model.to_dict(),
    }
    with open(path, "w", encoding="utf8") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def load_model(path):
    """Read a file written by :func:`save_model`.

    Returns
    -------
    :class:`ModelFile`

    Raises
    ------
    ModelFormatError
        The file is not a model file, was written by a newer major format
        version, names an unknown model type, or its schema does not match
        the stored schema hash.
    """
    try:
        with open(path, encoding="utf8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"'{path}' is not a model file: {exc}") from exc
    try:
        version = Version(str(payload["format_version"]))
    except (KeyError, TypeError, InvalidVersion) as exc:
        raise ModelFormatError(f"'{path}' has no valid format version.") from exc
    if version.major > Version(FORMAT_VERSION).major:
        raise ModelFormatError(
            f"'{path}' uses format version {version}, but this version of "
            f"mtlchoice reads format {FORMAT_VERSION} and older."
        )
    try:
        cls = model_registry[payload["model_type"]]
    except KeyError:
        raise ModelFormatError(
            f"'{path}' holds an unknown model type {payload.get('model_type')!r}."
        ) from None
    schema = FeatureSchema.from_dict(payload["schema"])
    if schema.schema_hash != payload.get("schema_hash"):
        raise ModelFormatError(f"The schema stored in '{path}' does not match its hash.")
    return ModelFile(
        cls.from_dict(payload["model"]),
        schema,
        Scaler.from_dict(payload["scaler"]),
        payload.get("metadata", {}),
    )
