"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Provides exactly the primitives the gesture model needs: dense linear maps,
leaky ReLU, layer normalization, row softmax, elementwise math, row
gather/concat (for recurrent cells and attention built on top), and a
gradient-reversal node. Backward visits nodes in exact reverse construction
order, so gradients are bit-deterministic.
"""

import itertools

import numpy as np
from scipy.special import expit

from .errors import DimensionError, NumericError

LEAKY_SLOPE = 0.01
LAYER_NORM_EPS = 1e-5

_order_counter = itertools.count()
_grad_enabled = True


class no_grad:
    """Context manager that skips graph construction inside its scope."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """A float64 array plus optional gradient buffer and graph linkage."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn", "_order", "_track")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward_fn = None
        self._order = next(_order_counter)
        self._track = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return self.data.item()

    def detach(self):
        """Return a graph-free tensor sharing this tensor's values."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse pass from a scalar output, accumulating into leaf .grad."""
        if self.data.size != 1:
            raise DimensionError(f"backward requires a scalar output, got shape {self.data.shape}")
        nodes = _reachable_graph(self)
        self.grad = np.ones_like(self.data)
        for node in nodes:
            fn = node._backward_fn
            if fn is not None and node.grad is not None:
                fn(node.grad)
                node.grad = None  # intermediate buffers are recomputed per pass

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _reachable_graph(root):
    """Graph nodes reachable from root, sorted by descending construction order."""
    seen = {id(root): root}
    stack = [root]
    while stack:
        node = stack.pop()
        for p in node._parents:
            if p._track and id(p) not in seen:
                seen[id(p)] = p
                stack.append(p)
    return sorted(seen.values(), key=lambda n: n._order, reverse=True)


def _accum(t, g):
    if t._track:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def _node(data, parents, backward_fn):
    out = Tensor(data)
    if _grad_enabled and any(p._track for p in parents):
        out._parents = parents
        out._backward_fn = backward_fn
        out._track = True
    return out


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    if not isinstance(b, Tensor):
        b_const = float(b)

        def back_const(g):
            _accum(a, g)

        return _node(a.data + b_const, (a,), back_const)

    if a.data.shape == b.data.shape:

        def back_same(g):
            _accum(a, g)
            _accum(b, g)

        return _node(a.data + b.data, (a, b), back_same)

    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        # matrix + bias row
        def back_bias(g):
            _accum(a, g)
            _accum(b, g.sum(axis=0))

        return _node(a.data + b.data, (a, b), back_bias)

    raise DimensionError(f"add: incompatible shapes {a.data.shape} and {b.data.shape}")


def sub(a, b):
    if not isinstance(b, Tensor):
        return add(a, -float(b))

    if a.data.shape != b.data.shape:
        raise DimensionError(f"sub: incompatible shapes {a.data.shape} and {b.data.shape}")

    def back(g):
        _accum(a, g)
        _accum(b, -g)

    return _node(a.data - b.data, (a, b), back)


def mul(a, b):
    if not isinstance(b, Tensor):
        s = float(b)

        def back_scalar(g):
            _accum(a, g * s)

        return _node(a.data * s, (a,), back_scalar)

    if a.data.shape != b.data.shape:
        raise DimensionError(f"mul: incompatible shapes {a.data.shape} and {b.data.shape}")

    def back(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _node(a.data * b.data, (a, b), back)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")

    def back(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), back)


def transpose(a):
    if a.data.ndim != 2:
        raise DimensionError(f"transpose: expected a matrix, got shape {a.data.shape}")

    def back(g):
        _accum(a, np.ascontiguousarray(g.T))

    return _node(np.ascontiguousarray(a.data.T), (a,), back)


def linear(x, w, b):
    """y[t] = x[t] @ w + b, fused into a single graph node."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise DimensionError(f"linear: input {x.data.shape} incompatible with weight {w.data.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise DimensionError(f"linear: bias {b.data.shape} incompatible with weight {w.data.shape}")

    def back(g):
        _accum(x, g @ w.data.T)
        _accum(w, x.data.T @ g)
        _accum(b, g.sum(axis=0))

    return _node(x.data @ w.data + b.data, (x, w, b), back)


# ---------------------------------------------------------------------------
# nonlinearities

def leaky_relu(x, slope=LEAKY_SLOPE):
    factor = np.where(x.data >= 0.0, 1.0, slope)

    def back(g):
        _accum(x, g * factor)

    return _node(x.data * factor, (x,), back)


def sigmoid(x):
    y = expit(x.data)

    def back(g):
        _accum(x, g * (y * (1.0 - y)))

    return _node(y, (x,), back)


def tanh(x):
    y = np.tanh(x.data)

    def back(g):
        _accum(x, g * (1.0 - y * y))

    return _node(y, (x,), back)


def log(x):
    def back(g):
        _accum(x, g / x.data)

    return _node(np.log(x.data), (x,), back)


def clip(x, lo, hi):
    """Clamp values to [lo, hi]; gradient passes through unclipped entries."""
    mask = (x.data >= lo) & (x.data <= hi)

    def back(g):
        _accum(x, g * mask)

    return _node(np.clip(x.data, lo, hi), (x,), back)


def huber(x, delta=1.0):
    """Elementwise Huber penalty: quadratic inside |x| <= delta, linear outside."""
    a = np.abs(x.data)
    inside = a <= delta
    y = np.where(inside, 0.5 * x.data * x.data, delta * (a - 0.5 * delta))

    def back(g):
        _accum(x, g * np.clip(x.data, -delta, delta))

    return _node(y, (x,), back)


# ---------------------------------------------------------------------------
# normalization and softmax

def layer_norm(x, gain, bias, eps=LAYER_NORM_EPS):
    """Per-row standardization over the feature axis, then affine gain/bias."""
    if x.data.ndim != 2:
        raise DimensionError(f"layer_norm: expected a matrix, got shape {x.data.shape}")
    d = x.data.shape[1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise DimensionError(f"layer_norm: gain/bias must have shape ({d},)")
    if not np.isfinite(x.data).all():
        raise NumericError("layer_norm: non-finite input")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def back(g):
        dxhat = g * gain.data
        t1 = dxhat.sum(axis=1, keepdims=True)
        t2 = (dxhat * xhat).sum(axis=1, keepdims=True)
        _accum(x, (inv / d) * (d * dxhat - t1 - xhat * t2))
        _accum(gain, (g * xhat).sum(axis=0))
        _accum(bias, g.sum(axis=0))

    return _node(xhat * gain.data + bias.data, (x, gain, bias), back)


def softmax_rows(x):
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def back(g):
        dot = (g * s).sum(axis=1, keepdims=True)
        _accum(x, s * (g - dot))

    return _node(s, (x,), back)


def log_softmax_rows(x):
    m = x.data.max(axis=1, keepdims=True)
    z = x.data - m
    e = np.exp(z)
    se = e.sum(axis=1, keepdims=True)
    y = z - np.log(se)
    s = e / se

    def back(g):
        _accum(x, g - s * g.sum(axis=1, keepdims=True))

    return _node(y, (x,), back)


# ---------------------------------------------------------------------------
# structural ops

class _GrlProbeContext:
    """grad_check support: realizes each reversal node as its linearization.

    A gradient-reversal node has value h and Jacobian -I, which no smooth
    function satisfies globally; locally it is h_rev(v) = 2*h_base - v with
    h_base frozen at the unperturbed forward value. Recording captures
    h_base per reversal site (in invocation order); replaying applies the
    reflector so central differences measure the defined reversed gradient.
    """

    def __init__(self):
        self.mode = "record"
        self.cache = []
        self.index = 0

    def start_replay(self):
        self.mode = "replay"
        self.index = 0


_grl_probe = None


def grad_reverse(x):
    """Identity forward (bit-for-bit); backward negates the incoming gradient."""
    ctx = _grl_probe
    if ctx is None:
        data = x.data
    elif ctx.mode == "record":
        ctx.cache.append(x.data.copy())
        data = x.data
    else:
        base = ctx.cache[ctx.index]
        ctx.index += 1
        data = 2.0 * base - x.data

    def back(g):
        _accum(x, -g)

    return _node(data, (x,), back)


def take_rows(x, idx):
    """Gather rows by index array; backward scatter-adds (duplicates allowed)."""
    idx = np.asarray(idx, dtype=np.intp)

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        _accum(x, gx)

    return _node(x.data[idx], (x,), back)


def slice_cols(x, start, stop):
    def back(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        _accum(x, gx)

    return _node(np.ascontiguousarray(x.data[:, start:stop]), (x,), back)


def concat_rows(tensors):
    offsets = np.cumsum([0] + [t.data.shape[0] for t in tensors])

    def back(g):
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            _accum(t, g[a:b])

    return _node(np.concatenate([t.data for t in tensors], axis=0), tuple(tensors), back)


def concat_cols(tensors):
    offsets = np.cumsum([0] + [t.data.shape[1] for t in tensors])

    def back(g):
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            _accum(t, np.ascontiguousarray(g[:, a:b]))

    return _node(np.concatenate([t.data for t in tensors], axis=1), tuple(tensors), back)


# ---------------------------------------------------------------------------
# reductions

def sum_all(x):
    def back(g):
        _accum(x, np.broadcast_to(g, x.data.shape))

    return _node(x.data.sum(), (x,), back)


def mean_all(x):
    n = x.data.size

    def back(g):
        _accum(x, np.broadcast_to(g / n, x.data.shape))

    return _node(x.data.mean(), (x,), back)


# ---------------------------------------------------------------------------
# initialization and verification

def xavier_uniform(rng, fan_in, fan_out):
    """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def grad_check(f, x, eps=1e-5, coords=None, rng=None):
    """Max relative error between analytic and central-difference gradients.

    f maps a Tensor to a scalar Tensor. The error for each coordinate is
    |analytic - numeric| / max(1, |analytic|); the max over checked
    coordinates is returned (all coordinates unless `coords` caps the count,
    in which case a seeded subset is probed). Gradient-reversal sites are
    linearized during the numeric probes (see _GrlProbeContext), so the
    reported error measures agreement with the defined, reversed gradient.
    Raises NumericError if f evaluates non-finite at x +- eps.
    """
    global _grl_probe
    if not (0.0 < eps <= 1e-2):
        raise ValueError(f"grad_check: eps must be in (0, 1e-2], got {eps}")
    ctx = _GrlProbeContext()
    try:
        _grl_probe = ctx
        probe = Tensor(x.data.copy(), requires_grad=True)
        out = f(probe)
        if out.data.size != 1:
            raise DimensionError("grad_check: f must return a scalar")
        out.backward()
        analytic = probe.grad.reshape(-1).copy()

        flat = x.data.reshape(-1)
        indices = range(flat.size)
        if coords is not None and coords < flat.size:
            chooser = rng if rng is not None else np.random.default_rng(0)
            indices = np.sort(chooser.choice(flat.size, size=coords, replace=False))
        worst = 0.0
        for i in indices:
            shifted = flat.copy()
            shifted[i] = flat[i] + eps
            ctx.start_replay()
            fp = f(Tensor(shifted.reshape(x.data.shape))).item()
            shifted[i] = flat[i] - eps
            ctx.start_replay()
            fm = f(Tensor(shifted.reshape(x.data.shape))).item()
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"grad_check: non-finite evaluation at coordinate {i}")
            numeric = (fp - fm) / (2.0 * eps)
            err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
            worst = max(worst, err)
        return worst
    finally:
        _grl_probe = None
