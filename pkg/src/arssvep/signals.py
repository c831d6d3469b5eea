"""EEG session data model, synthetic SSVEP generation and preprocessing.

All arrays stored on an :class:`EpochSet` are read-only views; every
operation here returns a new set and never touches its input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import signal as sps

from .errors import (ConfigError, LengthError, ParameterError, ShapeError,
                     StratificationError)

STIMULUS_FREQUENCIES = (6.0, 8.0, 10.0, 12.0)
DEFAULT_CHANNELS = ("Oz", "O1", "O2", "POz", "PO3", "PO4", "PO5", "PO6")
ANALYSIS_DURATION = 4.0


class Stimulus(IntEnum):
    """Flicker command classes; the integer value is the class label."""

    START = 0
    STOP = 1
    ACTIVE = 2
    PASSIVE = 3

    @property
    def frequency(self) -> float:
        return STIMULUS_FREQUENCIES[self.value]

    @property
    def title(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_frequency(cls, frequency: float) -> "Stimulus":
        for stim in cls:
            if math.isclose(stim.frequency, frequency):
                return stim
        raise ParameterError(f"{frequency} Hz is not a stimulus frequency")


@dataclass(frozen=True)
class ChannelLayout:
    names: Tuple[str, ...] = DEFAULT_CHANNELS
    reference: str = "Cz"
    ground: str = "Fpz"

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if not self.names:
            raise ConfigError("layout.names", "at least one channel required")
        if len(set(self.names)) != len(self.names):
            raise ConfigError("layout.names", "channel names must be unique")

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class SessionMeta:
    sampling_rate: float = 1000.0
    cue_duration: float = 1.5
    flicker_duration: float = 7.0
    rest_duration: float = 3.0
    trials_per_class: int = 10
    layout: ChannelLayout = field(default_factory=ChannelLayout)

    def __post_init__(self):
        if not self.sampling_rate > 0:
            raise ConfigError("sampling_rate", "must be positive")
        for name in ("cue_duration", "flicker_duration", "rest_duration"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be non-negative")
        if self.trials_per_class < 1:
            raise ConfigError("trials_per_class", "must be at least 1")

    @property
    def n_channels(self) -> int:
        return len(self.layout)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EpochSet:
    """Labelled trials (or windows) shaped ``(n_trials, n_channels, n_samples)``.

    ``trial_ids`` records which source trial each row came from, so that
    windows cut from one trial can be traced back to it.
    """

    data: np.ndarray
    labels: np.ndarray
    meta: SessionMeta = field(default_factory=SessionMeta)
    provenance: str = "synthetic"
    trial_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int64)
        if data.ndim != 3:
            raise ShapeError(f"data must be 3-D, got shape {data.shape}")
        if labels.shape != (data.shape[0],):
            raise ShapeError(f"{labels.size} labels for {data.shape[0]} trials")
        if data.shape[1] != self.meta.n_channels:
            raise ShapeError(
                f"{data.shape[1]} channels but layout has {self.meta.n_channels}")
        if labels.size and (labels.min() < 0 or labels.max() > 3):
            raise ShapeError("labels must be in 0..3")
        if not np.all(np.isfinite(data)):
            raise ShapeError("data contains non-finite values")
        if self.provenance not in ("synthetic", "file"):
            raise ShapeError(f"unknown provenance {self.provenance!r}")
        ids = np.arange(data.shape[0]) if self.trial_ids is None else self.trial_ids
        ids = np.asarray(ids, dtype=np.int64)
        if ids.shape != labels.shape:
            raise ShapeError("trial_ids length must equal n_trials")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "trial_ids", _frozen(ids))

    @property
    def n_trials(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    @property
    def duration(self) -> float:
        return self.n_samples / self.meta.sampling_rate

    @property
    def classes(self):
        return [Stimulus(int(v)) for v in self.labels]

    def replace_data(self, data: np.ndarray) -> "EpochSet":
        return EpochSet(data, self.labels, self.meta, self.provenance, self.trial_ids)

    def subset(self, index) -> "EpochSet":
        index = np.asarray(index, dtype=np.int64)
        return EpochSet(self.data[index], self.labels[index], self.meta,
                        self.provenance, self.trial_ids[index])


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic SSVEP generator.

    ``frequencies`` overrides the per-class oscillation frequency (defaults to
    the stimulus frequencies). Background noise is confined to ``noise_band``
    (``None`` leaves it broadband up to Nyquist); a ``noise_coherence`` share
    of its power is one background source projected through the same channel
    gains as the SSVEP, so it cannot be removed by spatial filtering.

    With ``snr_reference="trial"`` the noise of every trial is scaled to that
    trial's clean power; with ``"session"`` all trials share one noise level
    set from the session-mean clean power, so per-class amplitude differences
    survive in the mixture.
    """

    amplitudes: Tuple[float, ...] = (2.0, 2.0, 2.0, 2.0)
    rolloff: float = 0.5
    n_harmonics: int = 2
    noise: str = "mixture"
    snr_db: float = -10.0
    gain_profile: Tuple[float, ...] = (1.0, 0.9, 0.9, 0.8, 0.7, 0.7, 0.6, 0.6)
    seed: int = 0
    phase_jitter: float = 0.1
    frequencies: Optional[Tuple[float, ...]] = None
    snr_reference: str = "trial"
    noise_band: Optional[Tuple[float, float]] = (1.0, 45.0)
    noise_coherence: float = 0.6

    def __post_init__(self):
        for name in ("amplitudes", "gain_profile", "frequencies"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(float(v) for v in value))
        if len(self.amplitudes) != 4:
            raise ConfigError("amplitudes", "need one amplitude per class (4)")
        if any(a < 0 for a in self.amplitudes):
            raise ConfigError("amplitudes", "must be non-negative")
        if self.n_harmonics < 1:
            raise ConfigError("n_harmonics", "must be at least 1")
        if self.rolloff < 0:
            raise ConfigError("rolloff", "must be non-negative")
        if self.noise not in ("white", "pink", "mixture"):
            raise ConfigError("noise", f"unknown noise model {self.noise!r}")
        if not math.isfinite(self.snr_db):
            raise ConfigError("snr_db", "must be finite")
        if self.frequencies is not None and len(self.frequencies) != 4:
            raise ConfigError("frequencies", "need one frequency per class (4)")
        if self.noise_band is not None:
            lo, hi = (float(v) for v in self.noise_band)
            if not 0 <= lo < hi:
                raise ConfigError("noise_band", "need 0 <= low < high")
            object.__setattr__(self, "noise_band", (lo, hi))
        if not 0 <= self.noise_coherence < 1:
            raise ConfigError("noise_coherence", "must be in [0, 1)")
        if self.snr_reference not in ("trial", "session"):
            raise ConfigError("snr_reference", "must be 'trial' or 'session'")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must fit an unsigned 64-bit integer")

    def class_frequency(self, label: int) -> float:
        if self.frequencies is None:
            return STIMULUS_FREQUENCIES[label]
        return self.frequencies[label]


def _unit_noise(kind: str, shape, fs: float, band, rng: np.random.Generator) -> np.ndarray:
    n = shape[-1]
    f = np.fft.rfftfreq(n, 1.0 / fs)
    inside = np.ones(f.shape, dtype=bool) if band is None else (f >= band[0]) & (f <= band[1])
    inside &= f > 0

    def shaped(exponent):
        spectrum = np.fft.rfft(rng.standard_normal(shape), axis=-1)
        gain = np.zeros_like(f)
        gain[inside] = f[inside] ** (-exponent / 2)
        x = np.fft.irfft(spectrum * gain, n=n, axis=-1)
        return x / x.std(axis=-1, keepdims=True)

    if kind == "white":
        return shaped(0.0)
    if kind == "pink":
        return shaped(1.0)
    white = shaped(0.0)
    return (white + shaped(1.0)) / np.sqrt(2.0)


def synthesize_trial(cfg: SynthConfig, meta: SessionMeta, label: int,
                     rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(clean, noise)`` for one trial; noise has unit mean power."""
    fs = meta.sampling_rate
    n = int(round(meta.flicker_duration * fs))
    t = np.arange(n) / fs
    f = cfg.class_frequency(label)
    gains = np.asarray(cfg.gain_profile)[:, None]
    base_phase = rng.uniform(0.0, 2 * np.pi)
    jitter = rng.uniform(-cfg.phase_jitter, cfg.phase_jitter, size=cfg.n_harmonics)
    clean = np.zeros(n)
    for h in range(1, cfg.n_harmonics + 1):
        amp = cfg.amplitudes[label] * cfg.rolloff ** (h - 1)
        clean += amp * np.sin(2 * np.pi * h * f * t + base_phase + jitter[h - 1])
    noise = _unit_noise(cfg.noise, (meta.n_channels, n), fs, cfg.noise_band, rng)
    if cfg.noise_coherence > 0:
        common = _unit_noise(cfg.noise, (1, n), fs, cfg.noise_band, rng)
        pattern = gains / max(np.sqrt(np.mean(gains ** 2)), 1e-300)
        if not np.any(gains):
            pattern = np.ones_like(gains)
        noise = (np.sqrt(cfg.noise_coherence) * pattern * common
                 + np.sqrt(1 - cfg.noise_coherence) * noise)
    noise /= np.sqrt(np.mean(noise ** 2))
    return gains * clean, noise


def session_components(cfg: SynthConfig, meta: SessionMeta = SessionMeta()
                       ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(labels, clean, noise)`` of a synthetic session before mixing.

    ``noise`` is already scaled to the configured SNR. Trial ``i`` draws from
    its own RNG stream derived from ``(seed, i)``, so output is bit-identical
    for a fixed seed regardless of evaluation order.
    """
    if len(cfg.gain_profile) != meta.n_channels:
        raise ConfigError("gain_profile",
                          f"length {len(cfg.gain_profile)} != {meta.n_channels} channels")
    nyquist = meta.sampling_rate / 2
    for label in range(4):
        if cfg.n_harmonics * cfg.class_frequency(label) >= nyquist:
            raise ConfigError("n_harmonics", "highest harmonic reaches Nyquist")
    if cfg.snr_reference == "trial" and (
            min(cfg.amplitudes) == 0 or not any(cfg.gain_profile)):
        raise ConfigError("amplitudes",
                          "trial-referenced SNR needs non-zero clean power in every class")

    labels = np.repeat(np.arange(4), meta.trials_per_class)
    labels = np.random.default_rng(np.random.SeedSequence(cfg.seed)).permutation(labels)
    parts = []
    for i, label in enumerate(labels):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(i,)))
        parts.append(synthesize_trial(cfg, meta, int(label), rng))
    clean = np.stack([c for c, _ in parts])
    clean_power = np.mean(clean ** 2, axis=(1, 2))
    if cfg.snr_reference == "session":
        clean_power[:] = clean_power.mean()
    if not np.all(clean_power > 0):
        raise ConfigError("amplitudes", "clean power is zero")
    noise_power = clean_power / 10 ** (cfg.snr_db / 10)
    noise = np.stack([np.sqrt(p) * nz for (_, nz), p in zip(parts, noise_power)])
    return labels, clean, noise


def generate_synthetic_session(cfg: SynthConfig, meta: SessionMeta = SessionMeta()) -> EpochSet:
    """Generate ``4 * trials_per_class`` flicker-phase trials (clean plus noise)."""
    labels, clean, noise = session_components(cfg, meta)
    return EpochSet(clean + noise, labels, meta, "synthetic")


@lru_cache(maxsize=64)
def _bandpass_sos(low: float, high: float, fs: float, order: int) -> np.ndarray:
    return sps.butter(order, [low, high], btype="bandpass", fs=fs, output="sos")


def settling_length(low: float, fs: float) -> int:
    """Samples covering three periods of the lowest passband edge."""
    return int(math.ceil(3 * fs / low))


def zero_phase_bandpass(x: np.ndarray, fs: float, low: float, high: float,
                        order: int = 4) -> np.ndarray:
    """Butterworth band-pass applied forward and backward along the last axis."""
    if not 0 < low < high < fs / 2:
        raise ParameterError(
            f"band [{low}, {high}] Hz must satisfy 0 < low < high < {fs / 2}")
    x = np.asarray(x, dtype=float)
    padlen = min(settling_length(low, fs), x.shape[-1] - 1)
    return sps.sosfiltfilt(_bandpass_sos(float(low), float(high), float(fs), order), x,
                           axis=-1, padtype="even", padlen=padlen)


def bandpass_filter(epochs: EpochSet, low: float = 4.0, high: float = 25.0) -> EpochSet:
    return epochs.replace_data(
        zero_phase_bandpass(epochs.data, epochs.meta.sampling_rate, low, high))


def extract_analysis_segment(epochs: EpochSet, duration: float = ANALYSIS_DURATION) -> EpochSet:
    """Crop every trial to its centred ``duration`` seconds."""
    keep = int(round(duration * epochs.meta.sampling_rate))
    if epochs.n_samples < keep:
        raise LengthError(
            f"trials are {epochs.duration:g} s long, need at least {duration:g} s")
    start = (epochs.n_samples - keep) // 2
    return epochs.replace_data(epochs.data[:, :, start:start + keep])


def window_count(n_samples: int, window: int, step: int) -> int:
    return (n_samples - window) // step + 1


def slice_windows(epochs: EpochSet, window_len: float, step: float = 0.2) -> EpochSet:
    """Cut every trial into overlapping windows; rows are trial-major."""
    fs = epochs.meta.sampling_rate
    win = int(round(window_len * fs))
    hop = int(round(step * fs))
    if hop <= 0:
        raise ParameterError("step must be positive")
    if win <= 0:
        raise ParameterError("window length must be positive")
    if win > epochs.n_samples:
        raise LengthError(
            f"window of {window_len:g} s exceeds trial length {epochs.duration:g} s")
    n_win = window_count(epochs.n_samples, win, hop)
    starts = np.arange(n_win) * hop
    idx = starts[:, None] + np.arange(win)
    windows = epochs.data[:, :, idx]  # trials, channels, windows, samples
    windows = windows.transpose(0, 2, 1, 3).reshape(-1, epochs.n_channels, win)
    return EpochSet(windows, np.repeat(epochs.labels, n_win), epochs.meta,
                    epochs.provenance, np.repeat(epochs.trial_ids, n_win))


def train_test_split(epochs: EpochSet, train_fraction: float = 0.7,
                     seed: int = 0) -> Tuple[EpochSet, EpochSet]:
    """Stratified trial-level split; call before :func:`slice_windows`."""
    if not 0 < train_fraction < 1:
        raise ParameterError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train = []
    for label in range(4):
        members = np.flatnonzero(epochs.labels == label)
        if members.size == 0:
            continue
        if members.size < 2:
            raise StratificationError(f"class {label} has fewer than 2 trials")
        n_train = int(math.floor(train_fraction * members.size + 0.5))
        n_train = min(max(n_train, 1), members.size - 1)
        train.extend(rng.permutation(members)[:n_train])
    train = np.sort(np.asarray(train, dtype=np.int64))
    test = np.setdiff1d(np.arange(epochs.n_trials), train)
    return epochs.subset(train), epochs.subset(test)


def class_counts(labels: Sequence[int]) -> np.ndarray:
    return np.bincount(np.asarray(labels, dtype=np.int64), minlength=4)
