"""Bias-corrected Adam over named parameter tensors."""

import numpy as np

from .errors import DimensionError, NumericError

ADAM_EPS = 1e-8


class AdamState:
    """First/second moment buffers plus a shared step counter."""

    def __init__(self, lr=1e-4, beta1=0.5, beta2=0.98, eps=ADAM_EPS):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {}
        self.v = {}


def adam_step(params, grads, state):
    """One Adam update over parallel lists of tensors and gradient arrays.

    Parameters with a missing (None) or identically-zero gradient are left
    untouched, moments included, so an absent gradient signal never moves a
    parameter. Raises NumericError naming the offending parameter on a
    non-finite gradient.
    """
    if len(params) != len(grads):
        raise DimensionError(f"adam_step: {len(params)} params vs {len(grads)} grads")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise DimensionError(f"adam_step: grad shape {g.shape} != param shape {p.data.shape} at index {i}")
        if not np.isfinite(g).all():
            raise NumericError(f"adam_step: non-finite gradient for parameter index {i}")
        if not np.any(g):
            continue
        m = state.m.get(i)
        if m is None:
            m = state.m[i] = np.zeros_like(p.data)
            state.v[i] = np.zeros_like(p.data)
        v = state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bias1
        vhat = v / bias2
        p.data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return state


class Adam:
    """Convenience wrapper binding an AdamState to a fixed named-parameter dict."""

    def __init__(self, named_params, lr=1e-4, beta1=0.5, beta2=0.98, eps=ADAM_EPS):
        self.names = sorted(named_params)
        self.params = [named_params[n] for n in self.names]
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self):
        grads = [p.grad for p in self.params]
        try:
            adam_step(self.params, grads, self.state)
        except NumericError as exc:
            # re-raise with the parameter name, more useful than the index
            idx = int(str(exc).rsplit(" ", 1)[-1])
            raise NumericError(f"adam_step: non-finite gradient for parameter '{self.names[idx]}'") from None

    def zero_grad(self):
        for p in self.params:
            p.grad = None
