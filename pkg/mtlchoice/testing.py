"""
Utilities for writing tests

"""


import numpy as np

from mtlchoice.core import RELU, GradientTape, forward_cache

#: magnitudes below this are compared absolutely rather than relatively
RELATIVE_FLOOR = 1e-4


def _flat(value):
    if isinstance(value, GradientTape):
        return value.flat()
    return np.ravel(np.asarray(value, dtype=np.float64))


def relative_errors(actual, desired, floor=RELATIVE_FLOOR):
    """Elementwise ``|a - b| / max(|a|, |b|, floor)``.

    ``actual`` and ``desired`` may be arrays or
    :class:`~mtlchoice.core.GradientTape` objects.
    """
    a, b = _flat(actual), _flat(desired)
    if a.shape != b.shape:
        raise AssertionError(f"Shapes differ: {a.shape} and {b.shape}.")
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def max_relative_error(actual, desired, floor=RELATIVE_FLOOR):
    """Largest elementwise relative error; 0 for empty inputs.

    Examples
    --------
    >>> max_relative_error([1.0, 2.0], [1.0, 2.5])
    0.2
    """
    err = relative_errors(actual, desired, floor)
    return float(err.max()) if err.size else 0.0


def assert_tape_close(actual, desired, rtol=1e-5, floor=RELATIVE_FLOOR):
    """Raise an error if two gradients differ by more than ``rtol``.

    Parameters
    ----------
    actual, desired : :class:`~mtlchoice.core.GradientTape` or array-like
    rtol : float, optional
        Largest accepted relative error, defaults to 1e-5
    floor : float, optional
        Lower bound of the denominator of the relative error.
    """
    err = relative_errors(actual, desired, floor)
    if err.size and err.max() >= rtol:
        worst = int(np.argmax(err))
        raise AssertionError(
            f"Relative error {err[worst]:.3e} at flat index {worst} exceeds {rtol:.1e}: "
            f"{_flat(actual)[worst]!r} vs {_flat(desired)[worst]!r}."
        )


def nearest_kink(model, X_rp=None, X_sp=None):
    """Smallest absolute ReLU pre-activation of a model on a batch.

    Central differences are unreliable when it is below the step size.
    """
    smallest = np.inf
    paths = []
    if model.rp_head:
        paths = [(X_rp, model.rp_head), (X_sp, model.sp_head)]
    else:
        X = [x for x in (X_rp, X_sp) if x is not None and len(x)]
        paths = [(np.vstack(X), [])] if X else []
    for X, head in paths:
        if X is None or not len(X):
            continue
        layers = list(model.shared) + list(head)
        _, (_, pre) = forward_cache(np.asarray(X, dtype=np.float64), layers)
        for layer, Z in zip(layers, pre):
            if layer.activation == RELU and Z.size:
                smallest = min(smallest, float(np.abs(Z).min()))
    return smallest
