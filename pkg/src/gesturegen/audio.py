"""Audio front-end: WAV ingestion, polyphase resampling to 16 kHz, log-mel
frames aligned to the 30 fps gesture clock, and rhythm features (pitch,
energy, volume)."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import DataError

TARGET_RATE = 16000
MEL_BANDS = 80
MEL_WINDOW_S = 0.025
MEL_LOG_FLOOR = 1e-6
RHYTHM_WINDOW_S = 0.040
ENERGY_FLOOR = 1e-8
PITCH_MIN_HZ = 60.0
PITCH_MAX_HZ = 500.0
VOICING_THRESHOLD = 0.45


@dataclass
class AudioBuffer:
    samples: np.ndarray  # mono float64 in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DataError("AudioBuffer requires mono samples")
        if not np.isfinite(self.samples).all():
            raise DataError("audio samples must be finite")

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


def read_wav(path):
    """Load a PCM or float WAV; stereo input keeps the first channel."""
    rate, data = wavfile.read(path)
    if data.ndim == 2:
        data = data[:, 0]
    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        samples = data.astype(np.float64)
    return AudioBuffer(samples, int(rate))


def resample_to_16k(audio):
    """Linear-phase polyphase resampling to 16 kHz."""
    if audio.samples.size == 0:
        raise DataError("cannot resample an empty buffer")
    if audio.sample_rate < 8000:
        raise DataError(f"source rate {audio.sample_rate} below 8 kHz")
    if audio.sample_rate == TARGET_RATE:
        return audio
    g = math.gcd(TARGET_RATE, audio.sample_rate)
    out = resample_poly(audio.samples, TARGET_RATE // g, audio.sample_rate // g)
    return AudioBuffer(out, TARGET_RATE)


def frame_count(audio, fps=30.0):
    """Gesture frames spanned by the buffer (matches motion length +-1)."""
    return int(round(audio.samples.size * fps / audio.sample_rate))


def _window_at(samples, center, width):
    """width samples centered at `center`, zero-padded at the edges."""
    lo = center - width // 2
    hi = lo + width
    out = np.zeros(width)
    a, b = max(lo, 0), min(hi, samples.size)
    if a < b:
        out[a - lo:b - lo] = samples[a:b]
    return out


def mel_filterbank(n_mels, n_fft, rate, f_lo=0.0, f_hi=None):
    """Triangular HTK-mel filters over rfft bins."""
    if f_hi is None:
        f_hi = rate / 2.0

    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    points = to_hz(np.linspace(to_mel(f_lo), to_mel(f_hi), n_mels + 2))
    bins = np.floor((n_fft + 1) * points / rate).astype(int)
    n_bins = n_fft // 2 + 1
    weights = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, mid, hi = bins[m], bins[m + 1], bins[m + 2]
        for k in range(lo, mid):
            if mid > lo:
                weights[m, k] = (k - lo) / (mid - lo)
        for k in range(mid, hi):
            if hi > mid:
                weights[m, k] = (hi - k) / (hi - mid)
    return weights


def logmel_frames(audio, fps=30.0, n_mels=MEL_BANDS):
    """T x n_mels log mel-power frames centered at gesture-frame times."""
    if audio.sample_rate != TARGET_RATE:
        raise DataError(f"logmel_frames expects {TARGET_RATE} Hz input")
    width = int(round(MEL_WINDOW_S * audio.sample_rate))
    if audio.samples.size < width:
        raise DataError(f"audio shorter than one {MEL_WINDOW_S * 1000:.0f} ms window")
    t_frames = frame_count(audio, fps)
    n_fft = 1 << (width - 1).bit_length()
    window = np.hanning(width)
    filters = mel_filterbank(n_mels, n_fft, audio.sample_rate, f_hi=8000.0)
    out = np.empty((t_frames, n_mels))
    for t in range(t_frames):
        center = int(round(t * audio.sample_rate / fps))
        seg = _window_at(audio.samples, center, width) * window
        spectrum = np.fft.rfft(seg, n_fft)
        power = spectrum.real**2 + spectrum.imag**2
        out[t] = np.log(filters @ power + MEL_LOG_FLOOR)
    return out


@dataclass
class RhythmFeatures:
    frames: np.ndarray  # T x 3: pitch Hz (0 when unvoiced), log-energy, RMS volume
    fps: float


def rhythm_features(audio, fps=30.0, pitch_min=PITCH_MIN_HZ, pitch_max=PITCH_MAX_HZ,
                    voicing_threshold=VOICING_THRESHOLD):
    """Per-frame pitch / log-energy / volume over 40 ms windows."""
    if audio.sample_rate != TARGET_RATE:
        raise DataError(f"rhythm_features expects {TARGET_RATE} Hz input")
    rate = audio.sample_rate
    width = int(round(RHYTHM_WINDOW_S * rate))
    t_frames = frame_count(audio, fps)
    lag_lo = int(math.ceil(rate / pitch_max))
    lag_hi = int(rate // pitch_min)
    out = np.zeros((t_frames, 3))
    for t in range(t_frames):
        center = int(round(t * rate / fps))
        seg = _window_at(audio.samples, center, width)
        power = float(seg @ seg)
        out[t, 1] = np.log(power + ENERGY_FLOOR)
        out[t, 2] = math.sqrt(power / width)
        if power < 1e-10:
            continue  # silence: unvoiced
        corr = np.correlate(seg, seg, mode="full")[width - 1:]
        peak_lag = lag_lo + int(np.argmax(corr[lag_lo:lag_hi + 1]))
        if corr[peak_lag] / corr[0] > voicing_threshold:
            out[t, 0] = rate / peak_lag
    return RhythmFeatures(out, fps)
