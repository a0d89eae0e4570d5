"""The gesture generation network.

Three modalities (text, audio, gesture) are projected to a common width,
split into a shared (modality-invariant) and a private (modality-specific)
representation, regularized by a gradient-reversal domain classifier and a
reconstruction decoder, and fed together with audio rhythm features into a
self-attention generator. A bidirectional GRU discriminator provides the
adversarial signal. Sequences are processed as stacked (windows * frames) x
width matrices; attention and recurrence recover the window structure from
(batch, length) bookkeeping.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError

MODALITIES = ("text", "audio", "gesture")
GESTURE_WIDTH = 216
RHYTHM_WIDTH = 3
PROB_CLAMP = 1e-7


@dataclass
class ModelConfig:
    text_raw: int = 300
    text_feat: int = 32
    audio_mel: int = 80
    audio_feat: int = 128
    gesture_feat: int = GESTURE_WIDTH
    d_h: int = 48
    conv_kernel: int = 3
    gen_layers: int = 2
    gen_heads: int = 4
    gen_model: int = 256
    gen_ffn: int = 512
    disc_layers: int = 2
    disc_hidden: int = 64
    leaky_slope: float = 0.01
    ln_eps: float = 1e-5
    huber_delta: float = 1.0
    adversary_target: str = "invariant"  # or "specific" (the literal equation)
    use_repr: bool = True
    use_gan: bool = True  # controls whether discriminator parameters exist

    def __post_init__(self):
        if self.gen_model % self.gen_heads:
            raise ConfigError(f"gen_model {self.gen_model} not divisible by {self.gen_heads} heads")
        if self.conv_kernel % 2 != 1:
            raise ConfigError("conv_kernel must be odd")
        if self.adversary_target not in ("invariant", "specific"):
            raise ConfigError(f"adversary_target must be 'invariant' or 'specific', got '{self.adversary_target}'")

    def modality_width(self, m):
        return {"text": self.text_feat, "audio": self.audio_feat, "gesture": self.gesture_feat}[m]

    @property
    def generator_input_width(self):
        reps = 2 if self.use_repr else 1
        return 3 * reps * self.d_h + RHYTHM_WIDTH


@dataclass
class ReprPair:
    h_c: Tensor  # modality-invariant, from the shared encoder
    h_p: Tensor  # modality-specific, from the private encoder
    modality: str


@dataclass
class SequenceLayout:
    """Row bookkeeping for stacked windows: row b * length + t."""

    batch: int
    length: int

    @property
    def rows(self):
        return self.batch * self.length

    def window_rows(self, b):
        return np.arange(b * self.length, (b + 1) * self.length)


# ---------------------------------------------------------------------------
# parameters

def _linear_params(rng, name, fan_in, fan_out, params):
    params[f"{name}/w"] = Tensor(ad.xavier_uniform(rng, fan_in, fan_out), requires_grad=True)
    params[f"{name}/b"] = Tensor(np.zeros(fan_out), requires_grad=True)


def _norm_params(name, width, params):
    params[f"{name}/gain"] = Tensor(np.ones(width), requires_grad=True)
    params[f"{name}/bias"] = Tensor(np.zeros(width), requires_grad=True)


def init_params(cfg, rng):
    """Seeded parameter dict; layout depends only on the config."""
    params = {}
    for k in range(cfg.conv_kernel):
        params[f"conv_text/w{k}"] = Tensor(ad.xavier_uniform(rng, cfg.text_raw, cfg.text_feat), requires_grad=True)
    params["conv_text/b"] = Tensor(np.zeros(cfg.text_feat), requires_grad=True)
    for k in range(cfg.conv_kernel):
        params[f"conv_audio/w{k}"] = Tensor(ad.xavier_uniform(rng, cfg.audio_mel, cfg.audio_feat), requires_grad=True)
    params["conv_audio/b"] = Tensor(np.zeros(cfg.audio_feat), requires_grad=True)

    for m in MODALITIES:
        _linear_params(rng, f"enc_{m}", cfg.modality_width(m), cfg.d_h, params)
        _norm_params(f"enc_{m}", cfg.d_h, params)

    if cfg.use_repr:
        _linear_params(rng, "shared", cfg.d_h, cfg.d_h, params)
        for m in MODALITIES:
            _linear_params(rng, f"priv_{m}", cfg.d_h, cfg.d_h, params)
        _linear_params(rng, "dom/h", cfg.d_h, cfg.d_h, params)
        _linear_params(rng, "dom/out", cfg.d_h, len(MODALITIES), params)
        _linear_params(rng, "dec/h", cfg.d_h, cfg.d_h, params)
        _linear_params(rng, "dec/out", cfg.d_h, cfg.d_h, params)

    _linear_params(rng, "gen/in", cfg.generator_input_width, cfg.gen_model, params)
    for layer in range(cfg.gen_layers):
        base = f"gen/l{layer}"
        _linear_params(rng, f"{base}/qkv", cfg.gen_model, 3 * cfg.gen_model, params)
        _linear_params(rng, f"{base}/proj", cfg.gen_model, cfg.gen_model, params)
        _norm_params(f"{base}/ln1", cfg.gen_model, params)
        _linear_params(rng, f"{base}/ffn1", cfg.gen_model, cfg.gen_ffn, params)
        _linear_params(rng, f"{base}/ffn2", cfg.gen_ffn, cfg.gen_model, params)
        _norm_params(f"{base}/ln2", cfg.gen_model, params)
    _linear_params(rng, "gen/out", cfg.gen_model, cfg.gesture_feat, params)

    if cfg.use_gan:
        d_in = cfg.gesture_feat
        for layer in range(cfg.disc_layers):
            for direction in ("fw", "bw"):
                base = f"disc/l{layer}/{direction}"
                params[f"{base}/wx"] = Tensor(ad.xavier_uniform(rng, d_in, 3 * cfg.disc_hidden), requires_grad=True)
                params[f"{base}/bx"] = Tensor(np.zeros(3 * cfg.disc_hidden), requires_grad=True)
                params[f"{base}/u_rz"] = Tensor(ad.xavier_uniform(rng, cfg.disc_hidden, 2 * cfg.disc_hidden), requires_grad=True)
                params[f"{base}/u_n"] = Tensor(ad.xavier_uniform(rng, cfg.disc_hidden, cfg.disc_hidden), requires_grad=True)
            d_in = 2 * cfg.disc_hidden
        _linear_params(rng, "disc/out", 2 * cfg.disc_hidden, 1, params)
    return params


def discriminator_names(params):
    return [n for n in params if n.startswith("disc/")]


def generator_side_names(params):
    return [n for n in params if not n.startswith("disc/")]


# ---------------------------------------------------------------------------
# constant caches (index arrays, positional encodings, zero pads)

_cache = {}


def _conv_indices(layout, offset):
    key = ("conv", layout.batch, layout.length, offset)
    if key not in _cache:
        t = np.arange(layout.rows) % layout.length
        idx = np.arange(layout.rows) + offset
        # out-of-window taps hit the appended zero row
        idx[(t + offset < 0) | (t + offset >= layout.length)] = layout.rows
        _cache[key] = idx
    return _cache[key]


def _zero_row(width):
    key = ("zero", width)
    if key not in _cache:
        _cache[key] = Tensor(np.zeros((1, width)))
    return _cache[key]


def _step_rows(layout, t):
    key = ("step", layout.batch, layout.length, t)
    if key not in _cache:
        _cache[key] = np.arange(layout.batch) * layout.length + t
    return _cache[key]


def _time_major_to_window_major(layout):
    key = ("perm", layout.batch, layout.length)
    if key not in _cache:
        b = np.arange(layout.rows) // layout.length
        t = np.arange(layout.rows) % layout.length
        _cache[key] = t * layout.batch + b
    return _cache[key]


def positional_encoding(layout, width):
    """Sinusoidal positions tiled across the stacked windows."""
    key = ("pe", layout.batch, layout.length, width)
    if key not in _cache:
        pos = np.arange(layout.length)[:, None]
        dim = np.arange(width // 2)[None, :]
        angle = pos / np.power(10000.0, 2.0 * dim / width)
        pe = np.zeros((layout.length, width))
        pe[:, 0::2] = np.sin(angle)
        pe[:, 1::2] = np.cos(angle[:, : width - width // 2])
        _cache[key] = Tensor(np.tile(pe, (layout.batch, 1)))
    return _cache[key]


# ---------------------------------------------------------------------------
# building blocks

def conv1d_same(x, taps, bias, layout):
    """Per-window 1-D convolution (zero padded) as a sum of shifted matmuls."""
    k = len(taps)
    padded = ad.concat_rows([x, _zero_row(x.data.shape[1])])
    acc = None
    for j, w in enumerate(taps):
        shifted = ad.take_rows(padded, _conv_indices(layout, j - k // 2))
        term = ad.matmul(shifted, w)
        acc = term if acc is None else ad.add(acc, term)
    return ad.add(acc, bias)


def input_features(params, cfg, layout, text_raw, logmel, gesture_in):
    """Raw aligned modalities -> (U_text 32, U_audio 128, U_gesture 216)."""
    u_text = conv1d_same(
        text_raw,
        [params[f"conv_text/w{k}"] for k in range(cfg.conv_kernel)],
        params["conv_text/b"],
        layout,
    )
    u_audio = conv1d_same(
        logmel,
        [params[f"conv_audio/w{k}"] for k in range(cfg.conv_kernel)],
        params["conv_audio/b"],
        layout,
    )
    return u_text, u_audio, gesture_in


def encode_modality(u_raw, modality, params, cfg):
    """Linear + leaky ReLU + layer norm down to the common width d_h."""
    expected = cfg.modality_width(modality)
    if u_raw.data.shape[1] != expected:
        raise DimensionError(
            f"{modality} features are {u_raw.data.shape[1]}-wide, expected {expected}"
        )
    h = ad.leaky_relu(ad.linear(u_raw, params[f"enc_{modality}/w"], params[f"enc_{modality}/b"]), cfg.leaky_slope)
    return ad.layer_norm(h, params[f"enc_{modality}/gain"], params[f"enc_{modality}/bias"], cfg.ln_eps)


def project_repr(u, modality, params, cfg):
    """Shared-encoder and private-encoder views of one modality sequence."""
    if modality not in MODALITIES:
        raise ConfigError(f"unknown modality '{modality}'")
    h_c = ad.leaky_relu(ad.linear(u, params["shared/w"], params["shared/b"]), cfg.leaky_slope)
    h_p = ad.leaky_relu(ad.linear(u, params[f"priv_{modality}/w"], params[f"priv_{modality}/b"]), cfg.leaky_slope)
    return ReprPair(h_c, h_p, modality)


def domain_adversary_loss(pairs, params, cfg, use_grl=True):
    """3-way cross-entropy of the domain classifier on reversed representations.

    use_grl=False computes the same cross-entropy without the reversal
    (paired-run verification of the reversal contract).
    """
    total = None
    for label, pair in enumerate(pairs):
        h = pair.h_c if cfg.adversary_target == "invariant" else pair.h_p
        d = ad.grad_reverse(h) if use_grl else h
        hidden = ad.leaky_relu(ad.linear(d, params["dom/h/w"], params["dom/h/b"]), cfg.leaky_slope)
        logp = ad.log_softmax_rows(ad.linear(hidden, params["dom/out/w"], params["dom/out/b"]))
        picked = ad.mean_all(ad.slice_cols(logp, label, label + 1))
        term = ad.mul(picked, -1.0)
        total = term if total is None else ad.add(total, term)
    return total


def reconstruct_and_loss(pairs, us, params, cfg):
    """Decode h_c + h_p back to u_m; mean squared residual over frames / d_h."""
    total = None
    for pair, u in zip(pairs, us):
        mixed = ad.add(pair.h_c, pair.h_p)
        hidden = ad.leaky_relu(ad.linear(mixed, params["dec/h/w"], params["dec/h/b"]), cfg.leaky_slope)
        decoded = ad.linear(hidden, params["dec/out/w"], params["dec/out/b"])
        res = ad.sub(u, decoded)
        term = ad.mean_all(ad.mul(res, res))  # == mean_t ||res_t||^2 / d_h
        total = term if total is None else ad.add(total, term)
    return ad.mul(total, 1.0 / len(pairs))


def _attention_layer(x, layer, params, cfg, layout):
    base = f"gen/l{layer}"
    m = cfg.gen_model
    dk = m // cfg.gen_heads
    scale = 1.0 / np.sqrt(dk)
    qkv = ad.linear(x, params[f"{base}/qkv/w"], params[f"{base}/qkv/b"])
    windows = []
    for b in range(layout.batch):
        rows = ad.take_rows(qkv, layout.window_rows(b))
        heads = []
        for h in range(cfg.gen_heads):
            q = ad.slice_cols(rows, h * dk, (h + 1) * dk)
            k = ad.slice_cols(rows, m + h * dk, m + (h + 1) * dk)
            v = ad.slice_cols(rows, 2 * m + h * dk, 2 * m + (h + 1) * dk)
            scores = ad.mul(ad.matmul(q, ad.transpose(k)), scale)
            heads.append(ad.matmul(ad.softmax_rows(scores), v))
        windows.append(ad.concat_cols(heads))
    attended = ad.concat_rows(windows)
    projected = ad.linear(attended, params[f"{base}/proj/w"], params[f"{base}/proj/b"])
    x = ad.layer_norm(ad.add(x, projected), params[f"{base}/ln1/gain"], params[f"{base}/ln1/bias"], cfg.ln_eps)
    ff = ad.leaky_relu(ad.linear(x, params[f"{base}/ffn1/w"], params[f"{base}/ffn1/b"]), cfg.leaky_slope)
    ff = ad.linear(ff, params[f"{base}/ffn2/w"], params[f"{base}/ffn2/b"])
    return ad.layer_norm(ad.add(x, ff), params[f"{base}/ln2/gain"], params[f"{base}/ln2/bias"], cfg.ln_eps)


def generate_gestures(rep_seqs, rhythm, params, cfg, layout):
    """Self-attention generator over concatenated representations + rhythm."""
    for seq in rep_seqs:
        if seq.data.shape[0] != rhythm.data.shape[0]:
            raise DimensionError("representation and rhythm lengths disagree")
    joined = ad.concat_cols(list(rep_seqs) + [rhythm])
    if joined.data.shape[1] != cfg.generator_input_width:
        raise DimensionError(
            f"generator input width {joined.data.shape[1]}, expected {cfg.generator_input_width}"
        )
    x = ad.linear(joined, params["gen/in/w"], params["gen/in/b"])
    x = ad.add(x, positional_encoding(layout, cfg.gen_model))
    for layer in range(cfg.gen_layers):
        x = _attention_layer(x, layer, params, cfg, layout)
    return ad.linear(x, params["gen/out/w"], params["gen/out/b"])


def _gru_direction(x, base, params, cfg, layout, reverse):
    hidden = cfg.disc_hidden
    xw = ad.linear(x, params[f"{base}/wx"], params[f"{base}/bx"])
    u_rz, u_n = params[f"{base}/u_rz"], params[f"{base}/u_n"]
    h = Tensor(np.zeros((layout.batch, hidden)))
    states = [None] * layout.length
    steps = range(layout.length - 1, -1, -1) if reverse else range(layout.length)
    for t in steps:
        xt = ad.take_rows(xw, _step_rows(layout, t))
        hu = ad.matmul(h, u_rz)
        r = ad.sigmoid(ad.add(ad.slice_cols(xt, 0, hidden), ad.slice_cols(hu, 0, hidden)))
        z = ad.sigmoid(ad.add(ad.slice_cols(xt, hidden, 2 * hidden), ad.slice_cols(hu, hidden, 2 * hidden)))
        n = ad.tanh(ad.add(ad.slice_cols(xt, 2 * hidden, 3 * hidden), ad.matmul(ad.mul(r, h), u_n)))
        h = ad.add(n, ad.mul(z, ad.sub(h, n)))  # (1 - z) * n + z * h
        states[t] = h
    stacked = ad.concat_rows(states)  # time-major
    return ad.take_rows(stacked, _time_major_to_window_major(layout))


def discriminate(g, params, cfg, layout):
    """Per-frame realness probabilities from a bidirectional GRU stack."""
    x = g
    for layer in range(cfg.disc_layers):
        fw = _gru_direction(x, f"disc/l{layer}/fw", params, cfg, layout, reverse=False)
        bw = _gru_direction(x, f"disc/l{layer}/bw", params, cfg, layout, reverse=True)
        x = ad.concat_cols([fw, bw])
    return ad.sigmoid(ad.linear(x, params["disc/out/w"], params["disc/out/b"]))


# ---------------------------------------------------------------------------
# losses

def gesture_loss(target, predicted, alpha=300.0, beta=50.0, huber_delta=1.0):
    """alpha * mean Huber + beta * mean squared error, means over both axes."""
    if target.data.shape != predicted.data.shape:
        raise DimensionError(f"gesture_loss shapes differ: {target.data.shape} vs {predicted.data.shape}")
    res = ad.sub(predicted, target)
    h = ad.mean_all(ad.huber(res, huber_delta))
    m = ad.mean_all(ad.mul(res, res))
    return ad.add(ad.mul(h, alpha), ad.mul(m, beta))


def gan_losses(d_real, d_fake):
    """Discriminator cross-entropy and the non-saturating generator term."""
    pr = ad.clip(d_real, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pf = ad.clip(d_fake, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss_real = ad.mul(ad.mean_all(ad.log(pr)), -1.0)
    one_minus = ad.add(ad.mul(pf, -1.0), 1.0)
    loss_fake = ad.mul(ad.mean_all(ad.log(one_minus)), -1.0)
    disc = ad.add(loss_real, loss_fake)
    gen = ad.mul(ad.mean_all(ad.log(pf)), -1.0)
    return disc, gen


def gan_generator_loss(d_fake):
    """Non-saturating adversarial term for the generator alone."""
    pf = ad.clip(d_fake, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return ad.mul(ad.mean_all(ad.log(pf)), -1.0)


# ---------------------------------------------------------------------------
# full forward

def forward_generator(params, cfg, layout, text_raw, logmel, gesture_in, rhythm):
    """Run everything up to the generated gestures.

    Returns (g_hat, pairs, us): pairs / us are None without representation
    learning (the u_m sequences feed the generator directly then).
    """
    u_t_raw, u_a_raw, u_g_raw = input_features(params, cfg, layout, text_raw, logmel, gesture_in)
    us = [
        encode_modality(u_t_raw, "text", params, cfg),
        encode_modality(u_a_raw, "audio", params, cfg),
        encode_modality(u_g_raw, "gesture", params, cfg),
    ]
    if cfg.use_repr:
        pairs = [project_repr(u, m, params, cfg) for u, m in zip(us, MODALITIES)]
        rep_seqs = []
        for pair in pairs:
            rep_seqs.extend([pair.h_c, pair.h_p])
    else:
        pairs = None
        rep_seqs = us
    g_hat = generate_gestures(rep_seqs, rhythm, params, cfg, layout)
    return g_hat, pairs, us
