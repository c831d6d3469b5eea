"""Per-subject data preparation and neural model fitting shared by the runners."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..features import log_power, sequence_tensor
from ..signals import (EpochSet, bandpass_filter, extract_analysis_segment,
                       generate_synthetic_session, slice_windows, train_test_split,
                       zero_phase_bandpass)
from .config import ExperimentConfig, derive_seed, model_config, subject_synth, train_config


def subject_session(cfg: ExperimentConfig, subject: int) -> EpochSet:
    """Raw synthetic flicker trials for one subject."""
    return generate_synthetic_session(subject_synth(cfg, subject), cfg.session)


def preprocess(cfg: ExperimentConfig, raw: EpochSet) -> EpochSet:
    """Band-pass filter, then crop the centred analysis segment."""
    return extract_analysis_segment(bandpass_filter(raw, *cfg.band))


@dataclass(frozen=True)
class SubjectSplit:
    subject: int
    train: EpochSet
    test: EpochSet

    def windows(self, cfg: ExperimentConfig, window_s: float):
        return (slice_windows(self.train, window_s, cfg.step),
                slice_windows(self.test, window_s, cfg.step))


def subject_split(cfg: ExperimentConfig, subject: int,
                  raw: Optional[EpochSet] = None) -> SubjectSplit:
    raw = subject_session(cfg, subject) if raw is None else raw
    seg = preprocess(cfg, raw)
    train, test = train_test_split(seg, cfg.train_fraction, derive_seed(cfg.seed, subject, 2))
    return SubjectSplit(subject, train, test)


def subband_splits(cfg: ExperimentConfig, subject: int, raw: EpochSet) -> List[SubjectSplit]:
    """The filter bank applied to whole trials, then cropped and split like ``subject_split``.

    Filtering before windowing matches the single-band preprocessing, so the
    first band of the default bank reproduces the CCA input exactly.
    """
    spec = cfg.fbcca
    spec.validate(raw.meta.sampling_rate)
    seed = derive_seed(cfg.seed, subject, 2)
    splits = []
    for lo, hi in spec.passbands:
        band = raw.replace_data(zero_phase_bandpass(raw.data, raw.meta.sampling_rate, lo, hi,
                                                    spec.order))
        train, test = train_test_split(extract_analysis_segment(band), cfg.train_fraction, seed)
        splits.append(SubjectSplit(subject, train, test))
    return splits


def raw_features(cfg: ExperimentConfig, windows: EpochSet) -> np.ndarray:
    """Untransformed feature sequences ``[N, seq_len, 80]``."""
    return sequence_tensor(windows.data, cfg.model["seq_len"],
                           sampling_rate=windows.meta.sampling_rate)


def transform_features(cfg: ExperimentConfig, x: np.ndarray) -> np.ndarray:
    return log_power(x) if cfg.feature_transform == "log_power" else np.asarray(x, dtype=float)


class NeuralClassifier:
    """Raw feature sequences to class probabilities through the fitted model."""

    def __init__(self, cfg: ExperimentConfig, model):
        self.cfg = cfg
        self.model = model

    def predict_proba(self, x_raw: np.ndarray) -> np.ndarray:
        return self.model.predict_proba(transform_features(self.cfg, x_raw))

    __call__ = predict_proba

    def predict(self, x_raw: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(x_raw), axis=1)

    def as_float64(self) -> "NeuralClassifier":
        from ..nn.model import MACNNBiLSTM
        copy = MACNNBiLSTM(self.model.config, dtype=np.float64)
        copy.load_state_dict(self.model.state_dict())
        return NeuralClassifier(self.cfg, copy)


def fit_neural(cfg: ExperimentConfig, method: str, subject: int, window_index: int,
               x_train_raw: np.ndarray, y_train: np.ndarray):
    """Train one model; both neural methods share init and shuffle seeds.

    Returns ``(classifier, TrainReport)``.
    """
    from ..nn.model import MACNNBiLSTM
    from ..nn.training import train as train_model

    x = transform_features(cfg, x_train_raw)
    model = MACNNBiLSTM(model_config(cfg, method),
                        seed=derive_seed(cfg.seed, subject, 3, window_index),
                        dtype=np.dtype(cfg.dtype))
    model.fit_normalizer(x)
    report = train_model(model, x, y_train,
                         cfg=train_config(cfg, derive_seed(cfg.seed, subject, 4, window_index)),
                         track_test=False)
    return NeuralClassifier(cfg, model), report
