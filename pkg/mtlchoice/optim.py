"""
Parameter-wise Adam optimizer over lists of numpy arrays.
"""


import numpy as np

from mtlchoice.exceptions import DomainError


class Adam:
    """Adam with bias-corrected moment estimates.

    Parameters are updated in place. The state of every array is independent
    of the others, so parameters whose gradients never interact evolve
    exactly as they would under separate optimizers.

    Parameters
    ----------
    params : list of ndarray
        Arrays updated in place by :meth:`step`.
    lr : float
    beta1, beta2 : float
        Decay rates of the first and second moment estimates.
    eps : float

    Examples
    --------
    >>> import numpy as np
    >>> x = np.array([1.0])
    >>> opt = Adam([x], lr=0.1)
    >>> opt.step([2 * x])
    >>> x.round(6)
    array([0.9])
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if not lr > 0:
            raise DomainError("learning rate", lr, "(0, inf)")
        for name, value in (("beta1", beta1), ("beta2", beta2)):
            if not 0 <= value < 1:
                raise DomainError(name, value, "[0, 1)")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
