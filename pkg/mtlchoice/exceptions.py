"""
Exception and warning classes defined by mtlchoice



"""


class MtlchoiceError(Exception):
    """
    A generic exception type that all mtlchoice exceptions are derived from.
    It may be raised directly in rare situations that do not fit any existing
    exceptions and don't justify the creation of a new one.

    Since it serves as a base class for all mtlchoice exceptions, it may be
    used as a catch-all exception type in dependent code. For instance

    >>> import numpy as np
    >>> from mtlchoice.core import softmax_t
    >>> from mtlchoice.exceptions import MtlchoiceError
    >>> try:
    ...     softmax_t(np.zeros(3), -1.0)
    ... except MtlchoiceError:
    ...     pass

    However, it is generally recommended to only capture exceptions as
    specific as possible.
    """

    pass


class ShapeError(MtlchoiceError, ValueError):
    """Raised when array dimensions do not line up with a layer stack

    Example
    -------

    >>> import numpy as np
    >>> from mtlchoice.core import DenseLayer, forward_stack
    >>> layer = DenseLayer(np.eye(2), np.zeros(2), "relu")
    >>> forward_stack(np.ones(3), [layer])\
 # doctest: +IGNORE_EXCEPTION_DETAIL +NORMALIZE_WHITESPACE
    Traceback (most recent call last):
    ...
    mtlchoice.exceptions.ShapeError: Layer 0 expects inputs of dimension 2
    but received dimension 3.
    """

    def __init__(self, layer_index, expected, received):
        self.layer_index = layer_index
        self.expected = expected
        self.received = received
        super().__init__()

    def __str__(self):
        return (
            f"Layer {self.layer_index} expects inputs of dimension "
            f"{self.expected} but received dimension {self.received}."
        )


class DomainError(MtlchoiceError, ValueError):
    """Raised when a scalar parameter lies outside of its domain

    Example
    -------

    >>> import numpy as np
    >>> from mtlchoice.core import softmax_t
    >>> softmax_t(np.zeros(2), 0.0)\
 # doctest: +IGNORE_EXCEPTION_DETAIL +NORMALIZE_WHITESPACE
    Traceback (most recent call last):
    ...
    mtlchoice.exceptions.DomainError: The temperature must lie in (0, inf),
    received 0.0.
    """

    def __init__(self, name, value, domain):
        self.name = name
        self.value = value
        self.domain = domain
        super().__init__()

    def __str__(self):
        return f"The {self.name} must lie in {self.domain}, received {self.value!r}."


class InputError(MtlchoiceError, ValueError):
    """Raised when numeric input data is malformed

    Example
    -------

    >>> import numpy as np
    >>> from mtlchoice.core import cross_entropy
    >>> cross_entropy(np.array([0.5, 0.5]), np.array([1.0, 1.0]))\
 # doctest: +IGNORE_EXCEPTION_DETAIL +NORMALIZE_WHITESPACE
    Traceback (most recent call last):
    ...
    mtlchoice.exceptions.InputError: Labels must be one-hot vectors.
    """

    pass


class IngestionError(MtlchoiceError):
    """Raised when a choice data file cannot be ingested

    ``row`` is the 1-based data row (the header is row 0), or None when the
    problem concerns the file as a whole.
    """

    def __init__(self, path, reason, row=None, column=None):
        self.path = path
        self.reason = reason
        self.row = row
        self.column = column
        super().__init__()

    def __str__(self):
        where = ""
        if self.row is not None:
            where += f" at row {self.row}"
        if self.column is not None:
            where += f", column '{self.column}'"
        return f"Could not ingest '{self.path}'{where}: {self.reason}"


class SchemaError(MtlchoiceError):
    """Raised when a feature schema or a dataset violates its invariants

    Example
    -------

    >>> from mtlchoice.data import FeatureSchema
    >>> FeatureSchema(["cost", "cost"])\
 # doctest: +IGNORE_EXCEPTION_DETAIL +NORMALIZE_WHITESPACE
    Traceback (most recent call last):
    ...
    mtlchoice.exceptions.SchemaError: Feature names must be unique,
    received ['cost', 'cost'].
    """

    pass


class ConfigurationError(MtlchoiceError):
    """Raised when a configuration field holds an invalid value

    Example
    -------

    >>> from mtlchoice.mtldnn import HyperConfig
    >>> HyperConfig(M1=0, M2=0)\
 # doctest: +IGNORE_EXCEPTION_DETAIL +NORMALIZE_WHITESPACE
    Traceback (most recent call last):
    ...
    mtlchoice.exceptions.ConfigurationError: Invalid value for 'M1+M2': at
    least one layer is required, received 0.
    """

    def __init__(self, field, reason, value=None):
        self.field = field
        self.reason = reason
        self.value = value
        super().__init__()

    def __str__(self):
        err = f"Invalid value for '{self.field}': {self.reason}"
        if self.value is not None:
            err += f", received {self.value!r}"
        return err + "."


class TrainingDivergedError(MtlchoiceError, FloatingPointError):
    """Raised when a loss component becomes NaN or infinite during training"""

    def __init__(self, iteration, component, value):
        self.iteration = iteration
        self.component = component
        self.value = value
        super().__init__()

    def __str__(self):
        return (
            f"Training diverged at iteration {self.iteration}: loss component "
            f"'{self.component}' evaluated to {self.value}."
        )


class ModelFormatError(MtlchoiceError):
    """Raised when a serialized model cannot be read by this version"""

    pass


class InterpretationError(MtlchoiceError):
    """Raised when an interpretation query cannot be answered

    Example
    -------

    >>> from mtlchoice.interpret import CurveSpec
    >>> CurveSpec("cost", [2.0, 1.0], "sp")\
 # doctest: +IGNORE_EXCEPTION_DETAIL +NORMALIZE_WHITESPACE
    Traceback (most recent call last):
    ...
    mtlchoice.exceptions.InterpretationError: The curve grid must be
    strictly increasing.
    """

    pass


class ZeroVarianceWarning(UserWarning):
    """A feature column had zero variance and was left unscaled"""


class ConvergenceWarning(RuntimeWarning):
    """An estimator stopped at its iteration cap before converging"""


class SeparationWarning(RuntimeWarning):
    """Coefficients diverged, which indicates perfectly separated data"""


class ScaleDivergenceWarning(RuntimeWarning):
    """The estimated scale factor drifted out of its plausible range"""
