"""
The mtlchoice package.

Joint modelling of revealed preference (RP) and stated preference (SP)
choice data with multitask neural networks, and the logit models they are
compared against::

    >>> from mtlchoice import generate, preset
    >>> data = generate(preset("travel"), 40, 60, seed=0)
    >>> data.K_r, data.K_s, data.alternatives[-1]
    (4, 5, 'av')

The following functions and classes are importable from the top-level
``mtlchoice`` namespace:

* :class:`mtlchoice.data.Dataset`
* :class:`mtlchoice.data.FeatureSchema`
* :class:`mtlchoice.data.Task`
* :func:`mtlchoice.data.load_csv`
* :func:`mtlchoice.data.split`
* :func:`mtlchoice.data.standardize`
* :func:`mtlchoice.synth.generate`
* :func:`mtlchoice.synth.preset`
* :func:`mtlchoice.mnl.fit_mnl`
* :func:`mtlchoice.nl.fit_nl`
* :class:`mtlchoice.mtldnn.HyperConfig`
* :func:`mtlchoice.mtldnn.build`
* :func:`mtlchoice.mtldnn.train`
* :func:`mtlchoice.search.random_search`
* :func:`mtlchoice.search.ensemble_topk`
* :func:`mtlchoice.interpret.prob_curve`
* :func:`mtlchoice.interpret.elasticity`
* :func:`mtlchoice.serialization.save_model`
* :func:`mtlchoice.serialization.load_model`
* :func:`mtlchoice.test`
"""


from mtlchoice.data import (  # NOQA: F401
    Dataset,
    FeatureSchema,
    Task,
    load_csv,
    split,
    standardize,
)
from mtlchoice.interpret import elasticity, prob_curve  # NOQA: F401
from mtlchoice.mnl import fit_mnl  # NOQA: F401
from mtlchoice.mtldnn import HyperConfig, build, train  # NOQA: F401
from mtlchoice.nl import fit_nl  # NOQA: F401
from mtlchoice.search import ensemble_topk, random_search  # NOQA: F401
from mtlchoice.serialization import load_model, save_model  # NOQA: F401
from mtlchoice.synth import generate, preset  # NOQA: F401

from ._version import __version__


def test():  # pragma: no cover
    """Execute the unit tests on an installed copy of mtlchoice.

    Note that this function requires pytest to run. If pytest is not
    installed this function will raise ImportError.
    """
    import os

    import pytest

    pytest.main([os.path.dirname(os.path.abspath(__file__))])
