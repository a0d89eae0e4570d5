import numpy as np
import pytest

from gesturegen import autodiff as ad
from gesturegen.errors import DimensionError, NumericError


def param(values):
    return ad.Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


# ---------------------------------------------------------------------------
# gradient reversal

def test_grad_reverse_forward_is_bit_identical():
    x = param([1.5, -2.0])
    y = ad.grad_reverse(x)
    assert y.data is x.data  # exact same buffer, no copy


def test_grad_reverse_flips_analytic_gradient():
    x = param([3.0])
    y = ad.sum_all(ad.mul(ad.grad_reverse(x), ad.grad_reverse(x)))
    # the two grad_reverse nodes each feed -2x back, but forward-equal paths:
    # f = sum(r(x) * r(x)), df/dx through each factor is -r(x) = -x
    y.backward()
    assert np.allclose(x.grad, [-6.0])


def test_double_grad_reverse_cancels():
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=(3, 4))

    x = param(x0)
    ad.sum_all(ad.mul(x, x)).backward()
    plain = x.grad.copy()

    x = param(x0)
    rr = ad.grad_reverse(ad.grad_reverse(x))
    ad.sum_all(ad.mul(rr, rr)).backward()
    assert np.array_equal(x.grad, plain)


def test_grad_reverse_negates_bitwise():
    rng = np.random.default_rng(1)
    x0 = rng.normal(size=(5, 3))
    w0 = rng.normal(size=(3, 2))
    b0 = np.zeros(2)

    def loss(use_grl):
        x = param(x0)
        w, b = param(w0), param(b0)
        h = ad.grad_reverse(x) if use_grl else x
        out = ad.sigmoid(ad.linear(h, w, b))
        ad.mean_all(ad.mul(out, out)).backward()
        return x.grad, w.grad

    gx_rev, gw_rev = loss(True)
    gx_plain, gw_plain = loss(False)
    assert np.array_equal(gx_rev, -gx_plain)
    assert np.array_equal(gw_rev, gw_plain)


# ---------------------------------------------------------------------------
# linear

def test_linear_identity_map():
    x = param([[1.0, 2.0]])
    w = param(np.eye(2))
    b = param(np.zeros(2))
    y = ad.linear(x, w, b)
    assert np.array_equal(y.data, [[1.0, 2.0]])


def test_linear_hand_product():
    x = param([[1.0, 1.0]])
    w = param([[1.0], [1.0]])
    b = param([0.5])
    y = ad.linear(x, w, b)
    assert np.array_equal(y.data, [[2.5]])


def test_linear_bias_gradient_is_ones():
    x = param([[0.3, -0.7]])
    w = param(np.eye(2))
    b = param(np.zeros(2))
    ad.sum_all(ad.linear(x, w, b)).backward()
    assert np.array_equal(b.grad, np.ones(2))


def test_linear_shape_mismatch_names_both_shapes():
    x = param(np.zeros((2, 3)))
    w = param(np.zeros((4, 5)))
    b = param(np.zeros(5))
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
        ad.linear(x, w, b)


# ---------------------------------------------------------------------------
# layer norm

def test_layer_norm_constant_row_is_zero():
    x = param([[1.0, 1.0, 1.0, 1.0]])
    y = ad.layer_norm(x, param(np.ones(4)), param(np.zeros(4)))
    assert np.allclose(y.data, 0.0)


def test_layer_norm_fixed_point():
    x = param([[-1.0, 1.0]])
    y = ad.layer_norm(x, param(np.ones(2)), param(np.zeros(2)), eps=1e-12)
    assert np.allclose(y.data, [[-1.0, 1.0]], atol=1e-9)


def test_layer_norm_gradient_check():
    rng = np.random.default_rng(7)
    x0 = rng.normal(size=(3, 8))
    gain = param(rng.normal(size=8))
    bias = param(rng.normal(size=8))

    def f(x):
        return ad.sum_all(ad.sigmoid(ad.layer_norm(x, gain, bias, eps=1e-5)))

    assert ad.grad_check(f, ad.Tensor(x0), eps=1e-5) < 1e-5


def test_layer_norm_rejects_non_finite():
    x = param([[np.nan, 1.0]])
    with pytest.raises(NumericError):
        ad.layer_norm(x, param(np.ones(2)), param(np.zeros(2)))


# ---------------------------------------------------------------------------
# leaky relu

def test_leaky_relu_slope_one_is_identity():
    rng = np.random.default_rng(3)
    x = param(rng.normal(size=(4, 4)))
    y = ad.leaky_relu(x, slope=1.0)
    assert np.array_equal(y.data, x.data)


def test_leaky_relu_negative_branch():
    x = param([[-2.0, 3.0]])
    y = ad.leaky_relu(x, slope=0.01)
    assert np.allclose(y.data, [[-0.02, 3.0]])


# ---------------------------------------------------------------------------
# grad_check oracle cases

def test_grad_check_quadratic():
    x = ad.Tensor([1.0, 2.0, 3.0])
    err = ad.grad_check(lambda t: ad.sum_all(ad.mul(t, t)), x, eps=1e-5)
    assert err < 1e-6


def test_grad_check_grad_reverse_constant_derivative():
    x = ad.Tensor([0.4, -1.2, 2.2])
    err = ad.grad_check(lambda t: ad.sum_all(ad.grad_reverse(t)), x, eps=1e-5)
    assert err < 1e-8


def test_grad_check_composite_stack():
    rng = np.random.default_rng(11)
    w = param(ad.xavier_uniform(rng, 4, 4))
    b = param(np.zeros(4))
    gain = param(np.ones(4))
    bias = param(np.zeros(4))

    def f(x):
        h = ad.leaky_relu(ad.linear(x, w, b))
        return ad.sum_all(ad.layer_norm(h, gain, bias))

    x = ad.Tensor(rng.normal(size=(2, 4)))
    assert ad.grad_check(f, x, eps=1e-5) < 1e-4


def test_grad_check_rejects_non_finite_probe():
    x = ad.Tensor([1e-9])
    with pytest.raises(NumericError):
        # log goes non-finite once the probe crosses zero
        ad.grad_check(lambda t: ad.sum_all(ad.log(t)), x, eps=1e-5)


# ---------------------------------------------------------------------------
# every primitive passes a finite-difference check on N(0,1) inputs

def _rand(rng, *shape):
    return rng.normal(size=shape)


PRIMITIVE_CASES = {
    "add": lambda rng, x: ad.add(x, ad.Tensor(_rand(rng, 3, 4))),
    "add_bias": lambda rng, x: ad.add(x, ad.Tensor(_rand(rng, 4))),
    "add_scalar": lambda rng, x: ad.add(x, 0.7),
    "sub": lambda rng, x: ad.sub(x, ad.Tensor(_rand(rng, 3, 4))),
    "mul": lambda rng, x: ad.mul(x, ad.Tensor(_rand(rng, 3, 4))),
    "mul_scalar": lambda rng, x: ad.mul(x, -1.3),
    "matmul": lambda rng, x: ad.matmul(x, ad.Tensor(_rand(rng, 4, 2))),
    "transpose": lambda rng, x: ad.transpose(x),
    "linear": lambda rng, x: ad.linear(x, ad.Tensor(_rand(rng, 4, 2)), ad.Tensor(_rand(rng, 2))),
    "leaky_relu": lambda rng, x: ad.leaky_relu(x),
    "sigmoid": lambda rng, x: ad.sigmoid(x),
    "tanh": lambda rng, x: ad.tanh(x),
    "log": lambda rng, x: ad.log(ad.add(ad.mul(x, x), 0.5)),
    "clip": lambda rng, x: ad.clip(x, -0.75, 0.75),
    "huber": lambda rng, x: ad.huber(x, delta=1.0),
    "layer_norm": lambda rng, x: ad.layer_norm(x, ad.Tensor(_rand(rng, 4)), ad.Tensor(_rand(rng, 4))),
    "softmax": lambda rng, x: ad.mul(ad.softmax_rows(x), ad.Tensor(_rand(rng, 3, 4))),
    "log_softmax": lambda rng, x: ad.mul(ad.log_softmax_rows(x), ad.Tensor(_rand(rng, 3, 4))),
    "grad_reverse": lambda rng, x: ad.grad_reverse(x),
    "grad_reverse_downstream": lambda rng, x: ad.sigmoid(ad.grad_reverse(x)),
    "take_rows": lambda rng, x: ad.take_rows(x, [2, 0, 0, 1]),
    "slice_cols": lambda rng, x: ad.slice_cols(x, 1, 3),
    "concat_rows": lambda rng, x: ad.concat_rows([x, ad.mul(x, 2.0)]),
    "concat_cols": lambda rng, x: ad.concat_cols([x, ad.mul(x, x)]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
def test_primitive_gradient(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    build = PRIMITIVE_CASES[name]

    def f(x):
        local = np.random.default_rng(1234)  # constants fixed across evaluations
        return ad.mean_all(build(local, x))

    x = ad.Tensor(rng.normal(size=(3, 4)))
    assert ad.grad_check(f, x, eps=1e-5) < 1e-4


# ---------------------------------------------------------------------------
# backward determinism

def test_backward_is_bit_deterministic():
    rng = np.random.default_rng(21)
    x = param(rng.normal(size=(5, 6)))
    w = param(ad.xavier_uniform(rng, 6, 6))
    b = param(np.zeros(6))
    gain, bias = param(np.ones(6)), param(np.zeros(6))

    h = ad.layer_norm(ad.leaky_relu(ad.linear(x, w, b)), gain, bias)
    loss = ad.mean_all(ad.mul(h, h))

    loss.backward()
    first = {id(p): p.grad.copy() for p in (x, w, b, gain, bias)}
    for p in (x, w, b, gain, bias):
        p.zero_grad()
    loss.backward()
    for p in (x, w, b, gain, bias):
        assert np.array_equal(p.grad, first[id(p)])


def test_gradient_accumulates_across_backwards():
    x = param([2.0])
    y = ad.sum_all(ad.mul(x, x))
    y.backward()
    y.backward()
    assert np.allclose(x.grad, [8.0])  # 2 passes x 2x
