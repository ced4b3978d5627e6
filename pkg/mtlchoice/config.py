"""
Experiment configuration files.

An experiment is described by a JSON object. Exactly one of ``csv`` and
``synth`` names the data source; the remaining keys select the model kind
and its parameters. Unknown keys are rejected so that typos do not pass
silently.

.. code-block:: json

    {
      "synth": {"preset": "travel", "kind": "Nonlinear", "n_r": 2000, "n_s": 8000},
      "model": "mtldnn",
      "hyper": {"M1": 3, "M2": 2, "width": 25, "n_iter": 2000},
      "seed": 7
    }
"""


import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from hashlib import md5

from mtlchoice.data import FeatureSchema, Task
from mtlchoice.exceptions import ConfigurationError, MtlchoiceError
from mtlchoice.interpret import CurveSpec
from mtlchoice.mnl import OptConfig
from mtlchoice.mtldnn import DNN_JOINT, DNN_SPT, MTLDNN, HyperConfig
from mtlchoice.nl import Tie
from mtlchoice.search import SELECTIONS, TEST_RISK, SearchSpace
from mtlchoice.synth import DgpKind, DgpSpec, preset

#: environment variable holding the default output directory
OUTPUT_DIR_ENV = "MTLCHOICE_OUTPUT_DIR"

NL_C = "nl-c"
NL_NC = "nl-nc"
MNL_SPT = "mnl-spt"
MNL_JOINT = "mnl-joint"

MODEL_KINDS = (MTLDNN, DNN_SPT, DNN_JOINT, NL_C, NL_NC, MNL_SPT, MNL_JOINT)
NETWORK_KINDS = (MTLDNN, DNN_SPT, DNN_JOINT)
LOGIT_KINDS = (NL_C, NL_NC, MNL_SPT, MNL_JOINT)

_SYNTH_KEYS = {"preset", "kind", "spec", "n_r", "n_s", "seed"}
_CURVE_KEYS = {"variable", "grid", "task", "alternatives"}
_ELASTICITY_KEYS = {"variables", "alternative", "task"}
_UNHASHED = ("output_dir", "workers")


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment description.

    Parameters
    ----------
    csv : str, optional
        Path of a dataset in the ingestion format, relative to the
        directory of the config file. Requires ``schema``, ``K_r`` and
        ``K_s``.
    schema : dict, optional
        ``{"names": [...], "av_specific": [...]}``.
    K_r, K_s : int, optional
    alternatives : list of str, optional
    synth : dict, optional
        ``preset`` and ``kind`` of a built-in generator, or a full generator
        ``spec``, plus ``n_r``, ``n_s`` and an optional ``seed``.
    ratio : float
        Training share of the train/test split.
    split_seed : int, optional
        Seed of the split; ``seed`` when omitted.
    standardize : bool
        Standardize features with training-split statistics.
    model : str
        One of :data:`MODEL_KINDS`.
    hyper : dict
        Overrides of the :class:`~mtlchoice.mtldnn.HyperConfig` defaults.
    space : dict
        Overrides of the :class:`~mtlchoice.search.SearchSpace` defaults.
    S, selection, workers, k : search size, ranking criterion, worker
        processes and ensemble size.
    ties : list of [feature, alternative]
        Coefficients shared by RP and SP; only valid for ``nl-c``.
    opt : dict
        Overrides of the :class:`~mtlchoice.mnl.OptConfig` defaults.
    phi_degree : int
        Degree of the polynomial features of the logit models.
    curves : list of dict
        Probability curves to trace in ``interpret``.
    elasticities : dict, optional
        ``{"variables": [...], "alternative": ..., "task": "sp"}``.
    output_dir : str, optional
        Defaults to ``$MTLCHOICE_OUTPUT_DIR`` and then to ``"output"``.
    seed : int
        Master seed.
    mask_rp : bool
        Renormalize pooled RP predictions over the RP alternatives.

    Examples
    --------
    >>> cfg = ExperimentConfig.from_dict({"synth": {"preset": "tiny", "n_r": 50, "n_s": 50}})
    >>> cfg.model, cfg.data_source
    ('mtldnn', 'synth')
    >>> ExperimentConfig.from_dict({"model": "mnl-spt"})  # doctest: +IGNORE_EXCEPTION_DETAIL +NORMALIZE_WHITESPACE
    Traceback (most recent call last):
    ...
    mtlchoice.exceptions.ConfigurationError: Invalid value for 'data': exactly
    one of 'csv' and 'synth' is required.
    """

    csv: str = None
    schema: dict = None
    K_r: int = None
    K_s: int = None
    alternatives: tuple = ()
    synth: dict = None
    ratio: float = 0.8
    split_seed: int = None
    standardize: bool = True
    model: str = MTLDNN
    hyper: dict = field(default_factory=dict)
    space: dict = field(default_factory=dict)
    S: int = 20
    selection: str = TEST_RISK
    workers: int = 1
    k: int = 10
    ties: tuple = ()
    opt: dict = field(default_factory=dict)
    phi_degree: int = 1
    curves: tuple = ()
    elasticities: dict = None
    output_dir: str = None
    seed: int = 0
    mask_rp: bool = False
    base_dir: str = field(default=".", compare=False, repr=False)

    def __post_init__(self):
        if (self.csv is None) == (self.synth is None):
            raise ConfigurationError("data", "exactly one of 'csv' and 'synth' is required")
        if self.csv is not None:
            for name in ("schema", "K_r", "K_s"):
                if getattr(self, name) is None:
                    raise ConfigurationError(name, "is required with a csv data source")
        else:
            unknown = set(self.synth) - _SYNTH_KEYS
            if unknown:
                raise ConfigurationError("synth", f"unknown keys {sorted(unknown)}")
            for name in ("n_r", "n_s"):
                value = self.synth.get(name)
                if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                    raise ConfigurationError(f"synth.{name}", "must be a positive integer", value)
            if "spec" in self.synth and ("preset" in self.synth or "kind" in self.synth):
                raise ConfigurationError("synth", "give either 'spec' or 'preset'/'kind'")
        if not 0 < self.ratio < 1:
            raise ConfigurationError("ratio", "must lie strictly between 0 and 1", self.ratio)
        if self.model not in MODEL_KINDS:
            raise ConfigurationError("model", f"must be one of {list(MODEL_KINDS)}", self.model)
        if self.ties and self.model != NL_C:
            raise ConfigurationError("ties", "are only valid for model 'nl-c'")
        if self.selection not in SELECTIONS:
            raise ConfigurationError(
                "selection", f"must be one of {list(SELECTIONS)}", self.selection
            )
        for name in ("S", "workers", "k"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigurationError(name, "must be a positive integer", value)
        if self.phi_degree not in (1, 2):
            raise ConfigurationError("phi_degree", "must be 1 or 2", self.phi_degree)
        object.__setattr__(self, "alternatives", tuple(self.alternatives))
        object.__setattr__(self, "ties", tuple(tuple(t) for t in self.ties))
        object.__setattr__(self, "curves", tuple(self.curves))
        # build every sub-configuration once so errors surface at load time
        self.hyper_config()
        self.search_space()
        self.opt_config()
        self.tie_list()
        self.curve_specs()
        self.elasticity_request()
        if self.csv is not None:
            self.feature_schema()
        else:
            self.dgp_spec()

    @property
    def data_source(self):
        return "csv" if self.csv is not None else "synth"

    @classmethod
    def from_dict(cls, data, base_dir="."):
        if not isinstance(data, dict):
            raise ConfigurationError("config", "must be a JSON object")
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError("config", f"unknown keys {sorted(unknown)}")
        return cls(**data, base_dir=base_dir)

    @classmethod
    def from_file(cls, path):
        """Load and validate a JSON config file.

        Relative paths inside the file are resolved against its directory.
        """
        try:
            with open(path, encoding="utf8") as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigurationError("config", f"is not valid JSON ({exc})") from None
        return cls.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))

    def to_dict(self):
        data = asdict(self)
        del data["base_dir"]
        data["alternatives"] = list(self.alternatives)
        data["ties"] = [list(t) for t in self.ties]
        data["curves"] = list(self.curves)
        return data

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def config_hash(self):
        """md5 of the canonical JSON encoding.

        The output directory and the number of workers do not change any
        result and are left out.
        """
        data = self.to_dict()
        for name in _UNHASHED:
            del data[name]
        return md5(json.dumps(data, sort_keys=True).encode("utf8")).hexdigest()

    def with_overrides(self, **overrides):
        """A copy with the non-``None`` overrides applied and revalidated."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **changes) if changes else self

    @property
    def resolved_output_dir(self):
        return self.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "output"

    @property
    def resolved_split_seed(self):
        return self.seed if self.split_seed is None else self.split_seed

    def resolve_path(self, path):
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def feature_schema(self):
        try:
            return FeatureSchema.from_dict(self.schema)
        except (TypeError, KeyError, AttributeError, MtlchoiceError) as exc:
            raise ConfigurationError("schema", f"is malformed ({exc})") from None

    def dgp_spec(self):
        try:
            if "spec" in self.synth:
                return DgpSpec.from_dict(self.synth["spec"])
            kind = DgpKind(self.synth.get("kind", DgpKind.LINEAR_MNL.value))
            return preset(self.synth.get("preset", "travel"), kind)
        except ConfigurationError:
            raise
        except (ValueError, TypeError, KeyError, MtlchoiceError) as exc:
            raise ConfigurationError("synth", str(exc)) from None

    @property
    def synth_seed(self):
        return self.synth.get("seed", self.seed)

    def hyper_config(self):
        try:
            return HyperConfig(**{"seed": self.seed, **self.hyper})
        except TypeError as exc:
            raise ConfigurationError("hyper", str(exc)) from None

    def search_space(self):
        try:
            return SearchSpace.from_dict(self.space)
        except TypeError as exc:
            raise ConfigurationError("space", str(exc)) from None

    def opt_config(self):
        try:
            return OptConfig(**{"seed": self.seed, **self.opt})
        except TypeError as exc:
            raise ConfigurationError("opt", str(exc)) from None

    def tie_list(self):
        try:
            return tuple(Tie.coerce(t) for t in self.ties)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError("ties", str(exc)) from None

    def curve_specs(self):
        specs = []
        for i, curve in enumerate(self.curves):
            if not isinstance(curve, dict) or set(curve) - _CURVE_KEYS:
                raise ConfigurationError(f"curves[{i}]", f"accepts the keys {sorted(_CURVE_KEYS)}")
            try:
                specs.append(CurveSpec(**curve))
            except (TypeError, ValueError, MtlchoiceError) as exc:
                raise ConfigurationError(f"curves[{i}]", str(exc)) from None
        return tuple(specs)

    def elasticity_request(self):
        """``(variables, alternative, task)`` or ``None``."""
        if self.elasticities is None:
            return None
        req = self.elasticities
        if not isinstance(req, dict) or set(req) - _ELASTICITY_KEYS:
            raise ConfigurationError(
                "elasticities", f"accepts the keys {sorted(_ELASTICITY_KEYS)}"
            )
        if not req.get("variables") or "alternative" not in req:
            raise ConfigurationError("elasticities", "needs 'variables' and 'alternative'")
        try:
            task = Task(req.get("task", Task.SP.value))
        except ValueError:
            raise ConfigurationError("elasticities.task", "must be 'rp' or 'sp'") from None
        return tuple(req["variables"]), req["alternative"], task
