"""Training schedule, the epoch loop, chained long-form synthesis, and
checkpoint persistence."""

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt
from . import model as M
from .autodiff import Tensor
from .errors import ConfigError, DataError, NumericError
from .features import NormStats
from .optim import Adam


@dataclass
class TrainSettings:
    alpha: float = 300.0
    beta: float = 50.0
    gamma: float = 5.0
    delta: float = 0.1
    epsilon: float = 0.1
    lr: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.98
    adam_eps: float = 1e-8
    batch_size: int = 128
    epochs: int = 100
    warmup_epochs: int = 10
    seed: int = 0
    no_gan: bool = False
    no_recon: bool = False
    no_domain: bool = False


@dataclass
class LossBreakdown:
    """Per-step (or per-epoch mean) loss record; total is the exact weighted
    sum of the stored component floats."""

    gesture: float
    gan: float
    domain: float
    recon: float
    gamma: float
    delta: float
    epsilon: float

    @property
    def total(self):
        return self.gesture + self.gamma * self.gan + self.delta * self.domain + self.epsilon * self.recon


def stack_windows(windows, seed_len):
    """Stack training windows into (B*T) x width arrays plus row bookkeeping.

    Gesture input has every frame beyond the seed region zeroed; the full
    gesture stays available as the prediction target.
    """
    t = windows[0].length
    if any(w.length != t for w in windows):
        raise DataError("all windows in a batch must share their length")
    layout = M.SequenceLayout(len(windows), t)
    text = np.concatenate([w.text for w in windows])
    logmel = np.concatenate([w.logmel for w in windows])
    rhythm = np.concatenate([w.rhythm for w in windows])
    target = np.concatenate([w.gesture for w in windows])
    gesture_in = target.copy()
    mask = (np.arange(layout.rows) % t) >= seed_len
    gesture_in[mask] = 0.0
    generated_rows = np.flatnonzero(mask)
    return layout, text, logmel, rhythm, target, gesture_in, generated_rows


class Trainer:
    """Alternating discriminator / generator optimization with the warm-up
    schedule: the adversarial weight is 0 for the first warmup_epochs."""

    def __init__(self, cfg, settings, seed_params=None):
        self.cfg = cfg
        self.settings = settings
        rng = np.random.default_rng(settings.seed)
        self.params = seed_params if seed_params is not None else M.init_params(cfg, rng)
        adam_kw = dict(
            lr=settings.lr,
            beta1=settings.adam_beta1,
            beta2=settings.adam_beta2,
            eps=settings.adam_eps,
        )
        gen_names = M.generator_side_names(self.params)
        self.opt_gen = Adam({n: self.params[n] for n in gen_names}, **adam_kw)
        disc_names = M.discriminator_names(self.params)
        self.opt_disc = Adam({n: self.params[n] for n in disc_names}, **adam_kw) if disc_names else None
        self.log = []

    def effective_gamma(self, epoch):
        if self.settings.no_gan or self.opt_disc is None:
            return 0.0
        return 0.0 if epoch < self.settings.warmup_epochs else self.settings.gamma

    def run_epoch(self, windows, epoch, seed_len):
        s = self.settings
        gamma_eff = self.effective_gamma(epoch)
        order = np.random.default_rng((s.seed, epoch)).permutation(len(windows))
        sums = np.zeros(4)
        n_batches = 0
        for lo in range(0, len(order), s.batch_size):
            batch = [windows[i] for i in order[lo:lo + s.batch_size]]
            parts = self._train_batch(batch, gamma_eff, seed_len)
            sums += parts
            n_batches += 1
        mean = sums / max(n_batches, 1)
        row = LossBreakdown(
            float(mean[0]), float(mean[1]), float(mean[2]), float(mean[3]),
            gamma_eff, self._delta_eff(), self._epsilon_eff(),
        )
        self.log.append(row)
        return row

    def _delta_eff(self):
        if self.settings.no_domain or not self.cfg.use_repr:
            return 0.0
        return self.settings.delta

    def _epsilon_eff(self):
        if self.settings.no_recon or not self.cfg.use_repr:
            return 0.0
        return self.settings.epsilon

    def _train_batch(self, batch, gamma_eff, seed_len):
        s = self.settings
        layout, text, logmel, rhythm, target, gesture_in, gen_rows = stack_windows(batch, seed_len)
        g_hat, pairs, us = M.forward_generator(
            self.params, self.cfg, layout,
            Tensor(text), Tensor(logmel), Tensor(gesture_in), Tensor(rhythm),
        )

        if gamma_eff > 0.0:
            d_real = M.discriminate(Tensor(target), self.params, self.cfg, layout)
            d_fake = M.discriminate(g_hat.detach(), self.params, self.cfg, layout)
            l_disc, _ = M.gan_losses(d_real, d_fake)
            self._check_finite("l_gan(discriminator)", l_disc)
            self.opt_disc.zero_grad()
            l_disc.backward()
            self.opt_disc.step()

        l_gesture = M.gesture_loss(
            Tensor(target[gen_rows]),
            ad.take_rows(g_hat, gen_rows),
            alpha=s.alpha, beta=s.beta, huber_delta=self.cfg.huber_delta,
        )
        self._check_finite("l_gesture", l_gesture)
        total = l_gesture

        gan_value = 0.0
        if gamma_eff > 0.0:
            l_gan = M.gan_generator_loss(M.discriminate(g_hat, self.params, self.cfg, layout))
            self._check_finite("l_gan(generator)", l_gan)
            gan_value = l_gan.item()
            total = ad.add(total, ad.mul(l_gan, gamma_eff))

        domain_value = 0.0
        if self._delta_eff() > 0.0:
            l_domain = M.domain_adversary_loss(pairs, self.params, self.cfg)
            self._check_finite("l_domain", l_domain)
            domain_value = l_domain.item()
            total = ad.add(total, ad.mul(l_domain, s.delta))

        recon_value = 0.0
        if self._epsilon_eff() > 0.0:
            l_recon = M.reconstruct_and_loss(pairs, us, self.params, self.cfg)
            self._check_finite("l_recon", l_recon)
            recon_value = l_recon.item()
            total = ad.add(total, ad.mul(l_recon, s.epsilon))

        self.opt_gen.zero_grad()
        total.backward()
        self.opt_gen.step()
        return np.array([l_gesture.item(), gan_value, domain_value, recon_value])

    @staticmethod
    def _check_finite(name, loss):
        if not np.isfinite(loss.item()):
            raise NumericError(f"non-finite {name}")


LOG_COLUMNS = ["epoch", "l_gesture", "l_gan", "l_domain", "l_recon", "l_total", "gamma_effective"]


def write_training_log(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for epoch, row in enumerate(rows):
            writer.writerow([
                epoch,
                repr(row.gesture), repr(row.gan), repr(row.domain), repr(row.recon),
                repr(row.total), repr(row.gamma),
            ])


def read_training_log(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != LOG_COLUMNS:
            raise DataError(f"unexpected training log columns: {header}")
        return [[float(v) for v in row] for row in reader]


# ---------------------------------------------------------------------------
# synthesis

def synthesize_long(params, cfg, text_raw, logmel, rhythm, chunk=100, seed_len=10, initial_seed=None):
    """Generate a full-length gesture sequence by chaining fixed-size chunks.

    Each chunk's first seed_len gesture-input frames are the previously
    generated tail (or `initial_seed` / the normalized-space zero pose for
    the first chunk); the final chunk shifts back to end exactly at T.
    Returns T x 216 in normalized feature space.
    """
    t_total = text_raw.shape[0]
    if logmel.shape[0] != t_total or rhythm.shape[0] != t_total:
        raise DataError("modality streams disagree on length")
    if t_total < chunk:
        raise DataError(f"stream of {t_total} frames is shorter than one {chunk}-frame window")
    out = np.zeros((t_total, cfg.gesture_feat))
    if initial_seed is not None:
        if initial_seed.shape != (seed_len, cfg.gesture_feat):
            raise DataError(f"initial seed must be {seed_len} x {cfg.gesture_feat}")
        out[:seed_len] = initial_seed
    produced = seed_len
    layout = M.SequenceLayout(1, chunk)
    with ad.no_grad():
        while produced < t_total:
            start = min(produced - seed_len, t_total - chunk)
            stop = start + chunk
            gesture_in = np.zeros((chunk, cfg.gesture_feat))
            gesture_in[:seed_len] = out[start:start + seed_len]
            g_hat, _, _ = M.forward_generator(
                params, cfg, layout,
                Tensor(text_raw[start:stop]), Tensor(logmel[start:stop]),
                Tensor(gesture_in), Tensor(rhythm[start:stop]),
            )
            fresh = max(start + seed_len, produced)
            out[fresh:stop] = g_hat.data[fresh - start:]
            produced = stop
    return out


# ---------------------------------------------------------------------------
# linear probe (used to audit what the representations expose)

def linear_probe_accuracy(x, labels, classes=3, epochs=300, lr=0.05, seed=0):
    """Train a softmax probe on fixed features; returns final train accuracy."""
    n, d = x.shape
    rng = np.random.default_rng(seed)
    w = Tensor(ad.xavier_uniform(rng, d, classes), requires_grad=True)
    b = Tensor(np.zeros(classes), requires_grad=True)
    opt = Adam({"w": w, "b": b}, lr=lr, beta1=0.9, beta2=0.999)
    x_const = Tensor(x)
    pick = np.zeros((n, classes))
    pick[np.arange(n), labels] = 1.0 / n
    pick_const = Tensor(pick)
    for _ in range(epochs):
        opt.zero_grad()
        logp = ad.log_softmax_rows(ad.linear(x_const, w, b))
        loss = ad.mul(ad.sum_all(ad.mul(logp, pick_const)), -1.0)
        loss.backward()
        opt.step()
    logits = x @ w.data + b.data
    return float((logits.argmax(axis=1) == labels).mean())


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, params, stats=None, extra=None):
    arrays = {name: p.data for name, p in params.items()}
    if stats is not None:
        arrays["norm/mean"] = stats.mean
        arrays["norm/std"] = stats.std
    if extra:
        arrays.update(extra)
    ckpt.save_arrays(path, arrays)


def load_checkpoint(path, cfg):
    """Restore (params, stats) and validate the layout against the config."""
    arrays = ckpt.load_arrays(path)
    stats = None
    if "norm/mean" in arrays and "norm/std" in arrays:
        stats = NormStats(arrays.pop("norm/mean"), arrays.pop("norm/std"))
    expected = M.init_params(cfg, np.random.default_rng(0))
    missing = sorted(set(expected) - set(arrays))
    extra = sorted(set(arrays) - set(expected))
    if missing or extra:
        raise ConfigError(f"checkpoint/config mismatch: missing {missing[:4]}, unexpected {extra[:4]}")
    params = {}
    for name, ref in expected.items():
        if arrays[name].shape != ref.data.shape:
            raise ConfigError(f"checkpoint entry '{name}' has shape {arrays[name].shape}, expected {ref.data.shape}")
        params[name] = Tensor(arrays[name], requires_grad=True)
    return params, stats
