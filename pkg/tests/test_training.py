import numpy as np
import pytest

from gesturegen import model as M
from gesturegen import training, verify
from gesturegen.autodiff import Tensor, no_grad
from gesturegen.errors import ConfigError, DataError, NumericError
from gesturegen.features import NormStats, TrainWindow


def tiny_windows(cfg, seed=0, count=4, length=12, seed_len=3):
    rng = np.random.default_rng(seed)
    t = np.arange(length) / 30.0
    windows = []
    for k in range(count):
        phase = rng.uniform(0, 2 * np.pi, size=cfg.gesture_feat)
        freq = rng.uniform(0.5, 2.0, size=cfg.gesture_feat)
        gesture = np.sin(2 * np.pi * freq * t[:, None] + phase)
        windows.append(
            TrainWindow(
                f"w{k}", 0, seed_len,
                gesture,
                rng.normal(size=(length, cfg.text_raw)),
                rng.normal(size=(length, cfg.audio_mel)),
                rng.normal(size=(length, 3)),
            )
        )
    return windows


def quick_settings(**overrides):
    kw = dict(batch_size=4, epochs=4, warmup_epochs=2, lr=1e-3, seed=0)
    kw.update(overrides)
    return training.TrainSettings(**kw)


def run_training(cfg=None, settings=None, epochs=None, seed_len=3, windows=None):
    cfg = cfg or verify.miniature_config()
    settings = settings or quick_settings()
    trainer = training.Trainer(cfg, settings)
    windows = windows if windows is not None else tiny_windows(cfg)
    for epoch in range(epochs if epochs is not None else settings.epochs):
        trainer.run_epoch(windows, epoch, seed_len)
    return trainer


# ---------------------------------------------------------------------------
# determinism and schedule

def test_same_seed_identical_loss_trace():
    a = run_training()
    b = run_training()
    for ra, rb in zip(a.log, b.log):
        assert ra.total == rb.total
        assert (ra.gesture, ra.gan, ra.domain, ra.recon) == (rb.gesture, rb.gan, rb.domain, rb.recon)


def test_warmup_gamma_schedule():
    settings = quick_settings(epochs=4, warmup_epochs=2, gamma=5.0)
    trainer = run_training(settings=settings)
    gammas = [row.gamma for row in trainer.log]
    assert gammas == [0.0, 0.0, 5.0, 5.0]
    assert trainer.log[0].gan == 0.0
    assert trainer.log[-1].gan != 0.0


def test_eq7_identity_per_logged_row(tmp_path):
    trainer = run_training()
    path = tmp_path / "log.csv"
    training.write_training_log(path, trainer.log)
    rows = training.read_training_log(path)
    assert len(rows) == len(trainer.log)
    for _, l_gesture, l_gan, l_domain, l_recon, l_total, gamma in rows:
        expected = l_gesture + gamma * l_gan + trainer.settings.delta * l_domain + trainer.settings.epsilon * l_recon
        assert l_total == expected  # exact: same-precision arithmetic


def test_losses_move():
    trainer = run_training(settings=quick_settings(epochs=6, no_gan=True))
    assert trainer.log[-1].gesture < trainer.log[0].gesture


# ---------------------------------------------------------------------------
# ablation flags

def test_no_gan_zeroes_gan_column():
    trainer = run_training(settings=quick_settings(no_gan=True))
    assert all(row.gan == 0.0 and row.gamma == 0.0 for row in trainer.log)
    assert all(row.domain > 0.0 and row.recon > 0.0 for row in trainer.log)


def test_no_recon_zeroes_recon_only():
    trainer = run_training(settings=quick_settings(no_recon=True))
    assert all(row.recon == 0.0 for row in trainer.log)
    assert all(row.domain > 0.0 for row in trainer.log)
    assert all(np.isfinite(row.total) for row in trainer.log)


def test_no_domain_zeroes_domain_only():
    trainer = run_training(settings=quick_settings(no_domain=True))
    assert all(row.domain == 0.0 for row in trainer.log)
    assert all(row.recon > 0.0 for row in trainer.log)


def test_no_repr_leaves_only_gesture_loss():
    cfg = verify.miniature_config(use_repr=False, use_gan=False)
    trainer = run_training(cfg=cfg)
    assert all(row.gan == 0.0 and row.domain == 0.0 and row.recon == 0.0 for row in trainer.log)
    assert all(row.total == row.gesture for row in trainer.log)
    assert not any(n.startswith(("shared/", "priv_", "dom/", "disc/", "dec/")) for n in trainer.params)


def test_non_finite_loss_names_component():
    cfg = verify.miniature_config()
    trainer = training.Trainer(cfg, quick_settings())
    trainer.params["gen/out/b"].data[:] = np.inf
    with pytest.raises(NumericError, match="l_gesture"):
        trainer.run_epoch(tiny_windows(cfg), 0, 3)


# ---------------------------------------------------------------------------
# overfit smoke (small version; the acceptance suite runs the full one)

def test_small_overfit_halves_gesture_loss():
    cfg = verify.miniature_config()
    settings = quick_settings(epochs=50, warmup_epochs=5, lr=3e-3, gamma=1.0)
    trainer = run_training(cfg=cfg, settings=settings)
    assert trainer.log[-1].gesture < 0.5 * trainer.log[0].gesture
    assert trainer.log[-1].recon < trainer.log[0].recon


# ---------------------------------------------------------------------------
# synthesis chaining

def _streams(cfg, t_total, seed=0):
    rng = np.random.default_rng(seed)
    return (
        rng.normal(size=(t_total, cfg.text_raw)),
        rng.normal(size=(t_total, cfg.audio_mel)),
        rng.normal(size=(t_total, 3)),
    )


def test_synthesize_single_chunk():
    cfg = verify.miniature_config()
    params = M.init_params(cfg, np.random.default_rng(0))
    text, logmel, rhythm = _streams(cfg, 12)
    out = training.synthesize_long(params, cfg, text, logmel, rhythm, chunk=12, seed_len=3)
    assert out.shape == (12, cfg.gesture_feat)
    assert np.all(out[:3] == 0.0)  # first-chunk seed: normalized-space zero pose


def test_synthesize_chained_chunks_reuse_generated_tail():
    cfg = verify.miniature_config()
    params = M.init_params(cfg, np.random.default_rng(1))
    chunk, seed_len = 12, 3
    t_total = chunk + (chunk - seed_len)  # exactly two chunks
    text, logmel, rhythm = _streams(cfg, t_total, seed=2)
    out = training.synthesize_long(params, cfg, text, logmel, rhythm, chunk=chunk, seed_len=seed_len)
    assert out.shape == (t_total, cfg.gesture_feat)

    # chunk 2 covers [9, 21); its seed rows are chunk 1's last generated frames
    start = chunk - seed_len
    gesture_in = np.zeros((chunk, cfg.gesture_feat))
    gesture_in[:seed_len] = out[start:start + seed_len]
    layout = M.SequenceLayout(1, chunk)
    with no_grad():
        g_hat, _, _ = M.forward_generator(
            params, cfg, layout,
            Tensor(text[start:start + chunk]), Tensor(logmel[start:start + chunk]),
            Tensor(gesture_in), Tensor(rhythm[start:start + chunk]),
        )
    assert np.array_equal(out[chunk:], g_hat.data[chunk - start:])
    # boundary frame: first frame after chunk 1 is chunk 2's first generated frame
    assert np.array_equal(out[chunk], g_hat.data[seed_len + (chunk - seed_len - start)])


def test_synthesize_partial_final_chunk():
    cfg = verify.miniature_config()
    params = M.init_params(cfg, np.random.default_rng(3))
    text, logmel, rhythm = _streams(cfg, 17, seed=4)
    out = training.synthesize_long(params, cfg, text, logmel, rhythm, chunk=12, seed_len=3)
    assert out.shape == (17, cfg.gesture_feat)
    assert np.isfinite(out).all()


def test_synthesize_rejects_short_stream():
    cfg = verify.miniature_config()
    params = M.init_params(cfg, np.random.default_rng(5))
    text, logmel, rhythm = _streams(cfg, 8)
    with pytest.raises(DataError, match="shorter"):
        training.synthesize_long(params, cfg, text, logmel, rhythm, chunk=12, seed_len=3)


def test_synthesize_deterministic():
    cfg = verify.miniature_config()
    params = M.init_params(cfg, np.random.default_rng(6))
    text, logmel, rhythm = _streams(cfg, 21, seed=7)
    a = training.synthesize_long(params, cfg, text, logmel, rhythm, chunk=12, seed_len=3)
    b = training.synthesize_long(params, cfg, text, logmel, rhythm, chunk=12, seed_len=3)
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# checkpoints

def test_checkpoint_round_trip(tmp_path):
    cfg = verify.miniature_config()
    trainer = run_training(cfg=cfg, epochs=2)
    stats = NormStats(np.zeros(cfg.gesture_feat), np.ones(cfg.gesture_feat))
    path = tmp_path / "model.bin"
    training.save_checkpoint(path, trainer.params, stats)
    params, stats_back = training.load_checkpoint(path, cfg)
    assert sorted(params) == sorted(trainer.params)
    for name in params:
        assert np.array_equal(params[name].data, trainer.params[name].data)
    assert np.array_equal(stats_back.mean, stats.mean)


def test_checkpoint_layout_mismatch_rejected(tmp_path):
    cfg = verify.miniature_config()
    trainer = training.Trainer(cfg, quick_settings())
    path = tmp_path / "model.bin"
    training.save_checkpoint(path, trainer.params)
    with pytest.raises(ConfigError, match="mismatch"):
        training.load_checkpoint(path, verify.miniature_config(use_repr=False))


def test_checkpoint_without_stats_loads_none(tmp_path):
    cfg = verify.miniature_config()
    trainer = training.Trainer(cfg, quick_settings())
    path = tmp_path / "model.bin"
    training.save_checkpoint(path, trainer.params)
    _, stats = training.load_checkpoint(path, cfg)
    assert stats is None


# ---------------------------------------------------------------------------
# probe

def test_probe_separates_separable_data():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(300, 8))
    labels = np.repeat(np.arange(3), 100)
    x[:, 0] = labels * 2.0 + 0.05 * rng.normal(size=300)
    acc = training.linear_probe_accuracy(x, labels, epochs=200, seed=0)
    assert acc > 0.95


def test_probe_at_chance_for_pure_noise():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(600, 8))
    labels = np.repeat(np.arange(3), 200)
    acc = training.linear_probe_accuracy(x, labels, epochs=100, seed=0)
    assert acc < 0.5
