"""Built-in verification suites: finite-difference gradient checks for every
primitive and for a miniature end-to-end model, plus the bitwise
gradient-reversal pairing check. The CLI `selftest` command runs these."""

import numpy as np

from . import autodiff as ad
from . import model as M
from .autodiff import Tensor


def _rand(rng, *shape):
    return rng.normal(size=shape)


def primitive_checks():
    """name -> graph builder taking (rng, x) for a 3x4 N(0,1) input."""
    return {
        "add": lambda rng, x: ad.add(x, Tensor(_rand(rng, 3, 4))),
        "add_bias": lambda rng, x: ad.add(x, Tensor(_rand(rng, 4))),
        "sub": lambda rng, x: ad.sub(x, Tensor(_rand(rng, 3, 4))),
        "mul": lambda rng, x: ad.mul(x, Tensor(_rand(rng, 3, 4))),
        "mul_scalar": lambda rng, x: ad.mul(x, -1.7),
        "matmul": lambda rng, x: ad.matmul(x, Tensor(_rand(rng, 4, 3))),
        "transpose": lambda rng, x: ad.transpose(x),
        "linear": lambda rng, x: ad.linear(x, Tensor(_rand(rng, 4, 2)), Tensor(_rand(rng, 2))),
        "leaky_relu": lambda rng, x: ad.leaky_relu(x),
        "sigmoid": lambda rng, x: ad.sigmoid(x),
        "tanh": lambda rng, x: ad.tanh(x),
        "log": lambda rng, x: ad.log(ad.add(ad.mul(x, x), 0.5)),
        "clip": lambda rng, x: ad.clip(x, -0.75, 0.75),
        "huber": lambda rng, x: ad.huber(x, delta=1.0),
        "layer_norm": lambda rng, x: ad.layer_norm(x, Tensor(_rand(rng, 4)), Tensor(_rand(rng, 4))),
        "softmax": lambda rng, x: ad.mul(ad.softmax_rows(x), Tensor(_rand(rng, 3, 4))),
        "log_softmax": lambda rng, x: ad.mul(ad.log_softmax_rows(x), Tensor(_rand(rng, 3, 4))),
        "grad_reverse": lambda rng, x: ad.grad_reverse(x),
        "grad_reverse_deep": lambda rng, x: ad.sigmoid(ad.grad_reverse(x)),
        "take_rows": lambda rng, x: ad.take_rows(x, np.array([2, 0, 0, 1])),
        "slice_cols": lambda rng, x: ad.slice_cols(x, 1, 3),
        "concat_rows": lambda rng, x: ad.concat_rows([x, ad.mul(x, 2.0)]),
        "concat_cols": lambda rng, x: ad.concat_cols([x, ad.mul(x, x)]),
    }


def check_primitives(eps=1e-5, seed=0):
    """Gradient-check every primitive; returns {name: max relative error}."""
    errors = {}
    for name, build in sorted(primitive_checks().items()):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.normal(size=(3, 4)))

        def f(t, build=build):
            return ad.mean_all(build(np.random.default_rng(1234), t))

        errors[name] = ad.grad_check(f, x, eps=eps)
    return errors


# ---------------------------------------------------------------------------
# miniature end-to-end model

def miniature_config(**overrides):
    """Full architecture at T=4 / d_h=8 scale for fast exact verification."""
    kw = dict(
        text_raw=6, text_feat=4, audio_mel=5, audio_feat=8, gesture_feat=12,
        d_h=8, conv_kernel=3, gen_layers=1, gen_heads=2, gen_model=16,
        gen_ffn=32, disc_layers=1, disc_hidden=6,
    )
    kw.update(overrides)
    return M.ModelConfig(**kw)


def miniature_batch(cfg, seed=0, batch=1, length=4):
    rng = np.random.default_rng(seed)
    layout = M.SequenceLayout(batch, length)
    n = layout.rows
    return layout, {
        "text": rng.normal(size=(n, cfg.text_raw)),
        "logmel": rng.normal(size=(n, cfg.audio_mel)),
        "gesture_in": rng.normal(size=(n, cfg.gesture_feat)),
        "rhythm": rng.normal(size=(n, M.RHYTHM_WIDTH)),
        "target": rng.normal(size=(n, cfg.gesture_feat)),
        "fake": rng.normal(size=(n, cfg.gesture_feat)),
    }


def generator_objective(params, cfg, layout, data, gamma=5.0, delta=0.1, epsilon=0.1):
    """The full generator-side training objective as one graph (no detaching)."""
    g_hat, pairs, us = M.forward_generator(
        params, cfg, layout,
        Tensor(data["text"]), Tensor(data["logmel"]),
        Tensor(data["gesture_in"]), Tensor(data["rhythm"]),
    )
    total = M.gesture_loss(Tensor(data["target"]), g_hat, huber_delta=cfg.huber_delta)
    if gamma and cfg.use_gan:
        d_fake = M.discriminate(g_hat, params, cfg, layout)
        total = ad.add(total, ad.mul(M.gan_generator_loss(d_fake), gamma))
    if pairs is not None and delta:
        total = ad.add(total, ad.mul(M.domain_adversary_loss(pairs, params, cfg), delta))
    if pairs is not None and epsilon:
        total = ad.add(total, ad.mul(M.reconstruct_and_loss(pairs, us, params, cfg), epsilon))
    return total


def discriminator_objective(params, cfg, layout, data):
    d_real = M.discriminate(Tensor(data["target"]), params, cfg, layout)
    d_fake = M.discriminate(Tensor(data["fake"]), params, cfg, layout)
    return M.gan_losses(d_real, d_fake)[0]


def check_full_model(seed=0, coords_per_param=8, eps=1e-5):
    """Gradient-check every parameter of the miniature model.

    Generator-side parameters (and the discriminator, which the adversarial
    term reaches) are checked through the full training objective; the
    discriminator is additionally checked through its own loss. Returns
    {qualified parameter name: max relative error}.
    """
    cfg = miniature_config()
    params = M.init_params(cfg, np.random.default_rng(seed))
    layout, data = miniature_batch(cfg, seed=seed + 1)
    errors = {}
    objectives = {
        "total": lambda p: generator_objective(p, cfg, layout, data),
        "disc": lambda p: discriminator_objective(p, cfg, layout, data),
    }
    for tag, objective in objectives.items():
        names = sorted(params) if tag == "total" else M.discriminator_names(params)
        for name in names:
            def f(x, name=name, objective=objective):
                substituted = dict(params)
                substituted[name] = x
                return objective(substituted)

            rng = np.random.default_rng((seed, hash(name) % 2**32))
            errors[f"{tag}:{name}"] = ad.grad_check(
                f, params[name], eps=eps, coords=coords_per_param, rng=rng
            )
    return errors


def check_reversal_pairing(adversary_target="invariant", seed=0):
    """Paired-run check: encoder-side gradients of the domain loss with the
    reversal are the exact bitwise negation of the gradients without it,
    while classifier gradients match bitwise. Returns True on success."""
    cfg = miniature_config(adversary_target=adversary_target)
    params = M.init_params(cfg, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    us_data = [rng.normal(size=(5, cfg.d_h)) for _ in M.MODALITIES]

    def run(use_grl):
        for p in params.values():
            p.zero_grad()
        us = [Tensor(d, requires_grad=True) for d in us_data]
        pairs = [M.project_repr(u, m, params, cfg) for u, m in zip(us, M.MODALITIES)]
        M.domain_adversary_loss(pairs, params, cfg, use_grl=use_grl).backward()
        encoder = [u.grad.copy() for u in us] + [
            params[n].grad.copy() for n in sorted(params)
            if n.startswith(("shared/", "priv_")) and params[n].grad is not None
        ]
        classifier = [params[n].grad.copy() for n in sorted(params) if n.startswith("dom/")]
        return encoder, classifier

    enc_rev, cls_rev = run(True)
    enc_plain, cls_plain = run(False)
    ok = len(enc_rev) == len(enc_plain)
    ok = ok and all(np.array_equal(a, -b) for a, b in zip(enc_rev, enc_plain))
    ok = ok and all(np.array_equal(a, b) for a, b in zip(cls_rev, cls_plain))
    return ok
