"""Objective motion-quality metrics: average jerk and acceleration, global
and per-sequence canonical correlation, Hellinger distance between velocity
histograms, and the Fréchet gesture distance on raw features or on codes
from a small learned autoencoder.

Every metric comparing a motion set with itself returns its ideal value
(jerk/accel equality, CCA 1, Hellinger 0, FGD 0) within 1e-6.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError, NumericError
from .optim import Adam

CCA_RIDGE = 1e-6
HIST_BINS = 50
AE_WINDOW = 30
AE_HIDDEN = 300
AE_CODE = 64
AE_EPOCHS = 50


@dataclass
class MetricsReport:
    name: str
    avg_jerk: tuple  # (mean, std)
    avg_accel: tuple
    global_cca: float
    cca_per_seq: tuple
    hellinger_avg: float
    fgd_feature: float
    fgd_raw: float


@dataclass
class GaussianSummary:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        if not np.allclose(self.covariance, self.covariance.T, atol=1e-9):
            raise NumericError("covariance must be symmetric")


# ---------------------------------------------------------------------------
# derivatives of position

def _diff_magnitudes(positions, order, fps):
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 3:
        raise DataError(f"positions must be T x J x 3, got shape {positions.shape}")
    if positions.shape[0] < order + 1:
        raise DataError(f"need at least {order + 1} frames for order-{order} differences")
    d = np.diff(positions, n=order, axis=0) * fps**order
    return np.linalg.norm(d, axis=2).mean(axis=1)  # per-frame mean over joints


def average_jerk(positions, fps):
    """Mean and std over frames of the third-difference magnitude (units/s^3)."""
    per_frame = _diff_magnitudes(positions, 3, fps)
    return float(per_frame.mean()), float(per_frame.std())


def average_acceleration(positions, fps):
    """Mean and std over frames of the second-difference magnitude (units/s^2)."""
    per_frame = _diff_magnitudes(positions, 2, fps)
    return float(per_frame.mean()), float(per_frame.std())


def jerk_stats(position_seqs, fps):
    """Pooled jerk statistics over a set of clips (frame-order invariant)."""
    pooled = np.concatenate([_diff_magnitudes(p, 3, fps) for p in position_seqs])
    return float(pooled.mean()), float(pooled.std())


def accel_stats(position_seqs, fps):
    pooled = np.concatenate([_diff_magnitudes(p, 2, fps) for p in position_seqs])
    return float(pooled.mean()), float(pooled.std())


# ---------------------------------------------------------------------------
# canonical correlation

def _inv_sqrt_psd(c, ridge_scale):
    vals, vecs = np.linalg.eigh(c)
    vals = np.maximum(vals, 0.0) + ridge_scale
    return vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T


def global_cca(x, y, ridge=CCA_RIDGE):
    """First canonical correlation via whitened cross-covariance SVD.

    The ridge is scaled by the mean eigenvalue of each covariance so the
    self-comparison fixed point holds to 1e-6 regardless of data scale.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise DataError(f"global_cca: {x.shape[0]} vs {y.shape[0]} frames")
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    n = max(x.shape[0] - 1, 1)
    cxx = xc.T @ xc / n
    cyy = yc.T @ yc / n
    cxy = xc.T @ yc / n
    sx = np.trace(cxx) / cxx.shape[0]
    sy = np.trace(cyy) / cyy.shape[0]
    if not (np.isfinite(sx) and np.isfinite(sy)) or sx <= 0.0 or sy <= 0.0:
        raise NumericError("global_cca: rank collapse, covariance has no signal")
    m = _inv_sqrt_psd(cxx, ridge * sx) @ cxy @ _inv_sqrt_psd(cyy, ridge * sy)
    top = np.linalg.svd(m, compute_uv=False)[0]
    return float(np.clip(top, 0.0, 1.0))


def cca_per_sequence(pairs, ridge=CCA_RIDGE):
    """global_cca per (X_i, Y_i) pair; returns (mean, std) over pairs."""
    values = []
    for i, (x, y) in enumerate(pairs):
        try:
            values.append(global_cca(x, y, ridge))
        except (DataError, NumericError) as exc:
            raise type(exc)(f"sequence {i}: {exc}") from None
    if not values:
        raise DataError("cca_per_sequence: no pairs")
    arr = np.array(values)
    return float(arr.mean()), float(arr.std())


# ---------------------------------------------------------------------------
# Hellinger distance on velocity histograms

def hellinger_from_hist(p, q):
    """sqrt(1 - sum(sqrt(p * q))) for two probability vectors."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    bc = np.sqrt(p * q).sum()
    return float(np.sqrt(max(0.0, 1.0 - bc)))


def _pooled_velocities(seqs):
    if isinstance(seqs, np.ndarray) and seqs.ndim == 2:
        seqs = [seqs]
    vels = [np.diff(np.asarray(s, dtype=np.float64), axis=0) for s in seqs]
    vels = [v for v in vels if v.shape[0] > 0]
    if not vels:
        raise DataError("hellinger_avg: sequences too short for velocities")
    return np.concatenate(vels, axis=0)


def hellinger_avg(a_seqs, b_seqs, bins=HIST_BINS):
    """Mean over feature dimensions of the Hellinger distance between
    velocity histograms (bins span the pooled range of both sets)."""
    va = _pooled_velocities(a_seqs)
    vb = _pooled_velocities(b_seqs)
    if va.shape[1] != vb.shape[1]:
        raise DataError(f"hellinger_avg: widths differ ({va.shape[1]} vs {vb.shape[1]})")
    total = 0.0
    for dim in range(va.shape[1]):
        lo = min(va[:, dim].min(), vb[:, dim].min())
        hi = max(va[:, dim].max(), vb[:, dim].max())
        if hi <= lo:
            continue  # identical degenerate distributions contribute 0
        pa, _ = np.histogram(va[:, dim], bins=bins, range=(lo, hi))
        pb, _ = np.histogram(vb[:, dim], bins=bins, range=(lo, hi))
        total += hellinger_from_hist(pa / pa.sum(), pb / pb.sum())
    return total / va.shape[1]


# ---------------------------------------------------------------------------
# Fréchet gesture distance

def _sqrt_psd(c):
    vals, vecs = np.linalg.eigh(c)
    vals = np.maximum(vals, 0.0)
    return (vecs * np.sqrt(vals)) @ vecs.T


def gaussian_summary(x):
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise NumericError("gaussian_summary: non-finite inputs")
    cov = np.cov(x, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    return GaussianSummary(x.mean(axis=0), 0.5 * (cov + cov.T))


def fgd_from_summaries(a, b):
    """||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2)."""
    mean_term = float(np.sum((a.mean - b.mean) ** 2))
    root_a = _sqrt_psd(a.covariance)
    cross = _sqrt_psd(root_a @ b.covariance @ root_a)
    cov_term = float(np.trace(a.covariance + b.covariance - 2.0 * cross))
    return mean_term + max(cov_term, 0.0)


def fgd(a, b):
    """Fréchet distance between Gaussian fits of two feature matrices."""
    return fgd_from_summaries(gaussian_summary(a), gaussian_summary(b))


# ---------------------------------------------------------------------------
# feature-space FGD autoencoder

def slice_feature_windows(seqs, window=AE_WINDOW, stride=AE_WINDOW):
    """Cut sequences into fixed-length windows, flattened per window."""
    if isinstance(seqs, np.ndarray) and seqs.ndim == 2:
        seqs = [seqs]
    out = []
    for s in seqs:
        s = np.asarray(s, dtype=np.float64)
        for start in range(0, s.shape[0] - window + 1, stride):
            out.append(s[start:start + window].reshape(-1))
    if not out:
        raise DataError(f"no {window}-frame windows available")
    return np.stack(out)


class FgdFeatureModel:
    """Window autoencoder whose 64-D bottleneck defines the feature space."""

    def __init__(self, input_dim, hidden=AE_HIDDEN, code=AE_CODE, seed=0):
        rng = np.random.default_rng(seed)
        self.params = {
            "enc/w1": Tensor(ad.xavier_uniform(rng, input_dim, hidden), requires_grad=True),
            "enc/b1": Tensor(np.zeros(hidden), requires_grad=True),
            "enc/w2": Tensor(ad.xavier_uniform(rng, hidden, code), requires_grad=True),
            "enc/b2": Tensor(np.zeros(code), requires_grad=True),
            "dec/w1": Tensor(ad.xavier_uniform(rng, code, hidden), requires_grad=True),
            "dec/b1": Tensor(np.zeros(hidden), requires_grad=True),
            "dec/w2": Tensor(ad.xavier_uniform(rng, hidden, input_dim), requires_grad=True),
            "dec/b2": Tensor(np.zeros(input_dim), requires_grad=True),
        }
        self.code = code
        self.input_dim = input_dim

    def _forward(self, x):
        p = self.params
        z = ad.linear(ad.leaky_relu(ad.linear(x, p["enc/w1"], p["enc/b1"])), p["enc/w2"], p["enc/b2"])
        y = ad.linear(ad.leaky_relu(ad.linear(z, p["dec/w1"], p["dec/b1"])), p["dec/w2"], p["dec/b2"])
        return z, y

    def train(self, windows, epochs=AE_EPOCHS, lr=1e-3):
        """Full-batch reconstruction training; returns (initial, final) MSE."""
        x = Tensor(np.asarray(windows, dtype=np.float64))
        opt = Adam(self.params, lr=lr, beta1=0.9, beta2=0.999)
        first = last = None
        for _ in range(epochs):
            opt.zero_grad()
            _, y = self._forward(x)
            res = ad.sub(y, x)
            loss = ad.mean_all(ad.mul(res, res))
            if first is None:
                first = loss.item()
            last = loss.item()
            loss.backward()
            opt.step()
        return first, last

    def encode(self, windows):
        with ad.no_grad():
            z, _ = self._forward(Tensor(np.asarray(windows, dtype=np.float64)))
        return z.data


def build_fgd_feature_model(training_windows, min_windows=100, hidden=AE_HIDDEN,
                            code=AE_CODE, epochs=AE_EPOCHS, seed=0):
    """Train the feature-space encoder on flattened gesture windows."""
    windows = np.asarray(training_windows, dtype=np.float64)
    if windows.ndim != 2:
        raise DataError("training windows must be flattened to N x (frames * width)")
    if windows.shape[0] < min_windows:
        raise DataError(f"need at least {min_windows} windows, got {windows.shape[0]}")
    model = FgdFeatureModel(windows.shape[1], hidden=hidden, code=code, seed=seed)
    model.train(windows, epochs=epochs)
    return model


# ---------------------------------------------------------------------------
# report output

REPORT_COLUMNS = [
    "name",
    "avg_jerk_mean", "avg_jerk_std",
    "avg_accel_mean", "avg_accel_std",
    "global_cca",
    "cca_per_seq_mean", "cca_per_seq_std",
    "hellinger_avg",
    "fgd_feature",
    "fgd_raw",
]


def report_row(report):
    return [
        report.name,
        f"{report.avg_jerk[0]:.6g}", f"{report.avg_jerk[1]:.6g}",
        f"{report.avg_accel[0]:.6g}", f"{report.avg_accel[1]:.6g}",
        f"{report.global_cca:.6g}",
        f"{report.cca_per_seq[0]:.6g}", f"{report.cca_per_seq[1]:.6g}",
        f"{report.hellinger_avg:.6g}",
        f"{report.fgd_feature:.6g}",
        f"{report.fgd_raw:.6g}",
    ]


def write_report_csv(path, reports):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for report in reports:
            writer.writerow(report_row(report))


def format_report_table(reports):
    headers = [
        "name", "avg jerk", "avg accel", "global CCA",
        "CCA/seq", "Hellinger", "FGD feat", "FGD raw",
    ]
    rows = [headers]
    for r in reports:
        rows.append([
            r.name,
            f"{r.avg_jerk[0]:.2f} ± {r.avg_jerk[1]:.2f}",
            f"{r.avg_accel[0]:.2f} ± {r.avg_accel[1]:.2f}",
            f"{r.global_cca:.3f}",
            f"{r.cca_per_seq[0]:.2f} ± {r.cca_per_seq[1]:.2f}",
            f"{r.hellinger_avg:.3f}",
            f"{r.fgd_feature:.3f}",
            f"{r.fgd_raw:.3f}",
        ])
    widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
    lines = []
    for k, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_report_svg(path, reports, metric, title=None):
    """Minimal standalone bar chart for one scalar metric column."""
    getters = {
        "avg_jerk": lambda r: r.avg_jerk[0],
        "avg_accel": lambda r: r.avg_accel[0],
        "global_cca": lambda r: r.global_cca,
        "cca_per_seq": lambda r: r.cca_per_seq[0],
        "hellinger_avg": lambda r: r.hellinger_avg,
        "fgd_feature": lambda r: r.fgd_feature,
        "fgd_raw": lambda r: r.fgd_raw,
    }
    if metric not in getters:
        raise DataError(f"unknown metric '{metric}'")
    values = [getters[metric](r) for r in reports]
    names = [r.name for r in reports]
    top = max(max(values), 1e-12)
    bar_w, gap, height, label_h = 80, 30, 220, 40
    width = gap + len(values) * (bar_w + gap)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height + label_h + 30}">',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="14">{title or metric}</text>',
    ]
    for i, (name, value) in enumerate(zip(names, values)):
        h = max(1.0, height * value / top)
        x = gap + i * (bar_w + gap)
        y = 25 + height - h
        parts.append(f'<rect x="{x}" y="{y:.1f}" width="{bar_w}" height="{h:.1f}" fill="#4878a8"/>')
        parts.append(
            f'<text x="{x + bar_w / 2:.0f}" y="{y - 4:.1f}" text-anchor="middle" font-size="11">{value:.4g}</text>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.0f}" y="{25 + height + 16}" text-anchor="middle" font-size="11">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
