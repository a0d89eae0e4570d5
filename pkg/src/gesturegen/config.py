"""Run configuration: every tunable across the pipeline as typed keys with
defaults, persisted as an INI-style file with [data], [model], [train],
[loss], and [metrics] sections. Unknown sections or keys are rejected and
parsed values are type-checked; the effective config is echoed into every
run directory."""

import configparser
from dataclasses import dataclass, fields

from .errors import ConfigError
from .model import ModelConfig
from .synth import LEFT_FACING_JOINT, RIGHT_FACING_JOINT, UPPER_BODY_JOINTS
from .training import TrainSettings


def _parse_bool(raw):
    v = raw.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: '{raw}'")


def _parse_names(raw):
    return tuple(n.strip() for n in raw.split(",") if n.strip())


# (section, key) -> (field name, parser)
SCHEMA = {
    ("data", "fps"): float,
    ("data", "joints"): _parse_names,
    ("data", "left_shoulder_joint"): str,
    ("data", "right_shoulder_joint"): str,
    ("data", "speaker_filter"): str,
    ("data", "word_vectors"): str,
    ("data", "window"): int,
    ("data", "stride"): int,
    ("data", "seed_frames"): int,
    ("data", "std_floor"): float,
    ("data", "root_relative"): _parse_bool,
    ("data", "pitch_min_hz"): float,
    ("data", "pitch_max_hz"): float,
    ("data", "voicing_threshold"): float,
    ("model", "d_h"): int,
    ("model", "text_raw"): int,
    ("model", "text_feat"): int,
    ("model", "audio_mel"): int,
    ("model", "audio_feat"): int,
    ("model", "conv_kernel"): int,
    ("model", "gen_layers"): int,
    ("model", "gen_heads"): int,
    ("model", "gen_model"): int,
    ("model", "gen_ffn"): int,
    ("model", "disc_layers"): int,
    ("model", "disc_hidden"): int,
    ("model", "leaky_slope"): float,
    ("model", "ln_eps"): float,
    ("model", "huber_delta"): float,
    ("model", "adversary_target"): str,
    ("train", "lr"): float,
    ("train", "adam_beta1"): float,
    ("train", "adam_beta2"): float,
    ("train", "adam_eps"): float,
    ("train", "batch_size"): int,
    ("train", "epochs"): int,
    ("train", "warmup_epochs"): int,
    ("train", "seed"): int,
    ("train", "no_gan"): _parse_bool,
    ("train", "no_recon"): _parse_bool,
    ("train", "no_domain"): _parse_bool,
    ("train", "no_repr"): _parse_bool,
    ("loss", "alpha"): float,
    ("loss", "beta"): float,
    ("loss", "gamma"): float,
    ("loss", "delta"): float,
    ("loss", "epsilon"): float,
    ("metrics", "hist_bins"): int,
    ("metrics", "cca_ridge"): float,
    ("metrics", "fgd_ae_window"): int,
    ("metrics", "fgd_ae_hidden"): int,
    ("metrics", "fgd_ae_code"): int,
    ("metrics", "fgd_ae_epochs"): int,
}


@dataclass
class RunConfig:
    # [data]
    fps: float = 30.0
    joints: tuple = tuple(UPPER_BODY_JOINTS)
    left_shoulder_joint: str = LEFT_FACING_JOINT
    right_shoulder_joint: str = RIGHT_FACING_JOINT
    speaker_filter: str = "1"
    word_vectors: str = "wordvecs.txt"
    window: int = 100
    stride: int = 10
    seed_frames: int = 10
    std_floor: float = 1e-6
    root_relative: bool = False
    pitch_min_hz: float = 60.0
    pitch_max_hz: float = 500.0
    voicing_threshold: float = 0.45
    # [model]
    d_h: int = 48
    text_raw: int = 300
    text_feat: int = 32
    audio_mel: int = 80
    audio_feat: int = 128
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
    adversary_target: str = "invariant"
    # [train]
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
    no_repr: bool = False
    # [loss]
    alpha: float = 300.0
    beta: float = 50.0
    gamma: float = 5.0
    delta: float = 0.1
    epsilon: float = 0.1
    # [metrics]
    hist_bins: int = 50
    cca_ridge: float = 1e-6
    fgd_ae_window: int = 30
    fgd_ae_hidden: int = 300
    fgd_ae_code: int = 64
    fgd_ae_epochs: int = 50

    def __post_init__(self):
        if len(self.joints) != 18:
            raise ConfigError(f"joint list must name 18 joints, got {len(self.joints)}")
        if self.window <= self.seed_frames:
            raise ConfigError("window must exceed seed_frames")

    def model_config(self):
        return ModelConfig(
            text_raw=self.text_raw,
            text_feat=self.text_feat,
            audio_mel=self.audio_mel,
            audio_feat=self.audio_feat,
            d_h=self.d_h,
            conv_kernel=self.conv_kernel,
            gen_layers=self.gen_layers,
            gen_heads=self.gen_heads,
            gen_model=self.gen_model,
            gen_ffn=self.gen_ffn,
            disc_layers=self.disc_layers,
            disc_hidden=self.disc_hidden,
            leaky_slope=self.leaky_slope,
            ln_eps=self.ln_eps,
            huber_delta=self.huber_delta,
            adversary_target=self.adversary_target,
            use_repr=not self.no_repr,
            use_gan=not (self.no_gan or self.no_repr),
        )

    def train_settings(self):
        return TrainSettings(
            alpha=self.alpha,
            beta=self.beta,
            gamma=self.gamma,
            delta=self.delta,
            epsilon=self.epsilon,
            lr=self.lr,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            batch_size=self.batch_size,
            epochs=self.epochs,
            warmup_epochs=self.warmup_epochs,
            seed=self.seed,
            no_gan=self.no_gan or self.no_repr,
            no_recon=self.no_recon,
            no_domain=self.no_domain,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def load_config(path, overrides=None):
    """Parse an INI config; missing keys keep defaults, unknown keys fail."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    values = {}
    known_sections = {s for s, _ in SCHEMA}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if (section, key) not in SCHEMA:
                raise ConfigError(f"unknown config key '{key}' in [{section}]")
            try:
                values[key] = SCHEMA[(section, key)](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {exc}") from None
    if overrides:
        values.update(overrides)
    return RunConfig(**values)


def default_config(**overrides):
    return RunConfig(**overrides)


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_config(path, cfg):
    """Echo the effective config, every key in its section."""
    lines = []
    current = None
    for (section, key), _ in SCHEMA.items():
        if section != current:
            if current is not None:
                lines.append("")
            lines.append(f"[{section}]")
            current = section
        lines.append(f"{key} = {_format_value(getattr(cfg, key))}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
