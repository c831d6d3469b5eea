"""Per-channel spectral and amplitude features, flat and as time sequences.

Feature values for channel ``c`` and feature ``j`` live at index
``10 * c + j`` of a feature vector; names render as ``<channel>_<feature>``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal as sps

from .errors import LengthError
from .signals import DEFAULT_CHANNELS

FEATURE_NAMES = ("peak_freq", "total_psd", "theta_psd", "alpha_psd", "beta_psd",
                 "mean", "std", "skew", "max", "min")
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureSpec:
    """Feature definitions and Welch estimator settings.

    Bands are half-open ``[low, high)``; ``total_psd`` and the peak search use
    ``total_band`` so that theta + alpha + beta sums to the total. Zero padding
    to ``freq_resolution`` keeps band integrals meaningful on short segments.
    """

    bands: Dict[str, Tuple[float, float]] = field(default_factory=lambda: {
        "theta": (4.0, 8.0), "alpha": (8.0, 12.0), "beta": (12.0, 30.0)})
    total_band: Tuple[float, float] = (4.0, 30.0)
    segment_seconds: float = 1.0
    overlap: float = 0.5
    taper: str = "hann"
    freq_resolution: float = 1.0
    min_samples: int = 16

    @property
    def names(self) -> Tuple[str, ...]:
        return FEATURE_NAMES


def _welch_params(n: int, fs: float, spec: FeatureSpec):
    if n < spec.min_samples:
        raise LengthError(f"signal of {n} samples is shorter than {spec.min_samples}")
    nperseg = min(int(round(spec.segment_seconds * fs)), n)
    noverlap = int(nperseg * spec.overlap)
    nfft = max(nperseg, int(math.ceil(fs / spec.freq_resolution)))
    return nperseg, noverlap, nfft


def welch_psd(x: np.ndarray, sampling_rate: float = 1000.0,
              spec: FeatureSpec = FeatureSpec()) -> Tuple[np.ndarray, np.ndarray]:
    """One-sided Welch PSD along the last axis (power per Hz)."""
    x = np.asarray(x, dtype=float)
    nperseg, noverlap, nfft = _welch_params(x.shape[-1], sampling_rate, spec)
    return sps.welch(x, fs=sampling_rate, window=spec.taper, nperseg=nperseg,
                     noverlap=noverlap, nfft=nfft, detrend="constant",
                     scaling="density", axis=-1)


def band_power(freqs: np.ndarray, psd: np.ndarray, low: float, high: float) -> np.ndarray:
    mask = (freqs >= low) & (freqs < high)
    df = freqs[1] - freqs[0]
    return psd[..., mask].sum(axis=-1) * df


def _feature_block(x: np.ndarray, fs: float, spec: FeatureSpec):
    """Features for ``x[..., T]``; returns ``(values[..., 10], degenerate[...])``."""
    freqs, psd = welch_psd(x, fs, spec)
    lo, hi = spec.total_band
    in_total = (freqs >= lo) & (freqs < hi)
    peak = freqs[in_total][np.argmax(psd[..., in_total], axis=-1)]
    mean = x.mean(axis=-1)
    centred = x - mean[..., None]
    std = x.std(axis=-1, ddof=1)
    scale = np.maximum(np.abs(x).max(axis=-1), 1e-300)
    degenerate = std <= 1e-12 * scale
    m3 = np.mean(centred ** 3, axis=-1)
    safe = np.where(degenerate, 1.0, std)
    skew = np.where(degenerate, 0.0, m3 / safe ** 3)
    values = np.stack([
        peak,
        band_power(freqs, psd, lo, hi),
        band_power(freqs, psd, *spec.bands["theta"]),
        band_power(freqs, psd, *spec.bands["alpha"]),
        band_power(freqs, psd, *spec.bands["beta"]),
        mean, std, skew, x.max(axis=-1), x.min(axis=-1),
    ], axis=-1)
    return values, degenerate


def feature_names(channels: Sequence[str] = DEFAULT_CHANNELS) -> List[str]:
    return [f"{ch}_{feat}" for ch in channels for feat in FEATURE_NAMES]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    channel_names: Tuple[str, ...] = DEFAULT_CHANNELS
    label: Optional[int] = None
    degenerate: Tuple[bool, ...] = ()

    feature_names = FEATURE_NAMES

    def __post_init__(self):
        if self.values.shape != (len(self.channel_names) * N_FEATURES,):
            raise LengthError(
                f"expected {len(self.channel_names) * N_FEATURES} values, got {self.values.shape}")

    def index(self, channel: str, feature: str) -> int:
        return N_FEATURES * self.channel_names.index(channel) + FEATURE_NAMES.index(feature)

    def locate(self, index: int) -> Tuple[str, str]:
        c, j = divmod(index, N_FEATURES)
        return self.channel_names[c], FEATURE_NAMES[j]

    @property
    def names(self) -> List[str]:
        return feature_names(self.channel_names)

    def __getitem__(self, key):
        if isinstance(key, tuple):
            return self.values[self.index(*key)]
        return self.values[key]


def extract_features(window: np.ndarray, sampling_rate: float = 1000.0,
                     spec: FeatureSpec = FeatureSpec(),
                     channel_names: Sequence[str] = DEFAULT_CHANNELS,
                     label: Optional[int] = None) -> FeatureVector:
    window = np.atleast_2d(np.asarray(window, dtype=float))
    values, degenerate = _feature_block(window, sampling_rate, spec)
    return FeatureVector(values.reshape(-1), tuple(channel_names), label,
                         tuple(bool(d) for d in degenerate))


def feature_matrix(windows: np.ndarray, sampling_rate: float = 1000.0,
                   spec: FeatureSpec = FeatureSpec()) -> np.ndarray:
    """Vectorised :func:`extract_features` for ``windows[N, C, T]`` -> ``[N, 10 C]``."""
    values, _ = _feature_block(np.asarray(windows, dtype=float), sampling_rate, spec)
    return values.reshape(values.shape[0], -1)


@dataclass(frozen=True)
class FeatureSequence:
    values: np.ndarray  # [n_segments, 10 * n_channels]
    segment_seconds: float
    label: Optional[int] = None


def _segment(windows: np.ndarray, n_segments: int, spec: FeatureSpec) -> np.ndarray:
    n = windows.shape[-1]
    if n_segments < 1:
        raise LengthError("n_segments must be at least 1")
    seg = n // n_segments
    if seg < spec.min_samples:
        raise LengthError(
            f"{n_segments} segments of a {n}-sample window leave {seg} samples each "
            f"(minimum {spec.min_samples})")
    trimmed = windows[..., :seg * n_segments]
    shape = windows.shape[:-1] + (n_segments, seg)
    return np.moveaxis(trimmed.reshape(shape), -2, -3 if windows.ndim > 2 else 0)


def feature_sequence(window: np.ndarray, n_segments: int = 6,
                     spec: FeatureSpec = FeatureSpec(), sampling_rate: float = 1000.0,
                     label: Optional[int] = None) -> FeatureSequence:
    """Features of ``n_segments`` contiguous, non-overlapping sub-segments."""
    window = np.atleast_2d(np.asarray(window, dtype=float))
    segments = _segment(window, n_segments, spec)  # [S, C, seg]
    values, _ = _feature_block(segments, sampling_rate, spec)
    return FeatureSequence(values.reshape(n_segments, -1),
                           segments.shape[-1] / sampling_rate, label)


def sequence_tensor(windows: np.ndarray, n_segments: int = 6,
                    spec: FeatureSpec = FeatureSpec(),
                    sampling_rate: float = 1000.0) -> np.ndarray:
    """Vectorised :func:`feature_sequence` for ``windows[N, C, T]`` -> ``[N, S, 10 C]``."""
    windows = np.asarray(windows, dtype=float)
    segments = _segment(windows, n_segments, spec)  # [N, S, C, seg]
    values, _ = _feature_block(segments, sampling_rate, spec)
    return values.reshape(windows.shape[0], n_segments, -1)


POWER_FEATURES = ("total_psd", "theta_psd", "alpha_psd", "beta_psd")


def log_power(values: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """``log10(power + floor)`` on the band-power columns of ``values[..., 10 C]``.

    Band powers span orders of magnitude across windows; the remaining
    columns pass through unchanged.
    """
    values = np.array(values, dtype=float, copy=True)
    if values.shape[-1] % N_FEATURES:
        raise LengthError(f"last axis {values.shape[-1]} is not a multiple of {N_FEATURES}")
    cols = [FEATURE_NAMES.index(name) for name in POWER_FEATURES]
    view = values.reshape(values.shape[:-1] + (-1, N_FEATURES))
    view[..., cols] = np.log10(np.maximum(view[..., cols], 0.0) + floor)
    return view.reshape(values.shape)


def write_feature_csv(path, vectors: Iterable[FeatureVector]) -> None:
    vectors = list(vectors)
    names = vectors[0].names if vectors else feature_names()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ["label"])
        for v in vectors:
            writer.writerow([repr(float(x)) for x in v.values]
                            + ["" if v.label is None else int(v.label)])


def read_feature_csv(path) -> List[FeatureVector]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    channels = []
    for name in header[:-1]:
        ch = name.split("_", 1)[0]
        if ch not in channels:
            channels.append(ch)
    out = []
    for row in body:
        label = int(row[-1]) if row[-1] else None
        out.append(FeatureVector(np.array([float(x) for x in row[:-1]]),
                                 tuple(channels), label))
    return out
