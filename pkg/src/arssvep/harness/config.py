"""Experiment configuration: JSON schema, built-in presets and seed derivation."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from ..errors import ConfigError, DataError
from ..fbcca import FilterBankSpec
from ..signals import ANALYSIS_DURATION, SessionMeta, SynthConfig

SCHEMA_VERSION = 1
METHODS = ("cca", "fbcca", "cnn_bilstm", "macnn_bilstm")
NEURAL_METHODS = ("cnn_bilstm", "macnn_bilstm")
TRANSFORMS = ("none", "log_power")

# Model and training settings are stored as plain dicts so that this module
# (and CCA-only runs) never import the neural package.
MODEL_DEFAULTS = dict(input_dim=80, seq_len=6, conv_channels=32, kernel_size=3, stride=1,
                      hidden=32, n_heads=4, d_k=16, n_classes=4, dropout=0.1)
TRAIN_DEFAULTS = dict(lr=0.001, weight_decay=1e-5, lr_decay=0.9, lr_step=100, epochs=40,
                      batch_size=16)


@dataclass(frozen=True)
class ShapConfig:
    method: str = "macnn_bilstm"
    subject: int = 0
    window_s: float = 1.5
    n_instances: int = 50
    n_background: int = 50
    n_samples: int = 4096

    def __post_init__(self):
        if self.method not in NEURAL_METHODS:
            raise ConfigError("shap.method", f"must be one of {NEURAL_METHODS}")
        for name in ("n_instances", "n_background", "n_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"shap.{name}", "must be positive")
        if self.subject < 0:
            raise ConfigError("shap.subject", "must be non-negative")


@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthConfig = field(default_factory=lambda: SynthConfig(snr_db=-6.0))
    session: SessionMeta = field(default_factory=SessionMeta)
    band: Tuple[float, float] = (4.0, 25.0)
    window_lengths: Tuple[float, ...] = (0.5, 0.75, 1.0, 1.25, 1.5)
    step: float = 0.2
    methods: Tuple[str, ...] = METHODS
    train_fraction: float = 0.7
    cca_harmonics: int = 2
    fbcca: FilterBankSpec = field(default_factory=FilterBankSpec)
    model: Dict[str, Any] = field(default_factory=lambda: dict(MODEL_DEFAULTS))
    train: Dict[str, Any] = field(default_factory=lambda: dict(TRAIN_DEFAULTS))
    feature_transform: str = "log_power"
    dtype: str = "float32"
    shap: ShapConfig = field(default_factory=ShapConfig)
    n_subjects: int = 7
    gain_jitter: float = 0.2
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "band", tuple(float(v) for v in self.band))
        object.__setattr__(self, "window_lengths", tuple(float(v) for v in self.window_lengths))
        object.__setattr__(self, "methods", tuple(self.methods))
        if len(self.band) != 2 or not 0 < self.band[0] < self.band[1]:
            raise ConfigError("band", "need [low, high] with 0 < low < high")
        if not self.window_lengths:
            raise ConfigError("window_lengths", "at least one window length required")
        for w in self.window_lengths:
            if not 0 < w <= ANALYSIS_DURATION:
                raise ConfigError("window_lengths", f"{w} s is outside (0, {ANALYSIS_DURATION}]")
        if not self.step > 0:
            raise ConfigError("step", "must be positive")
        if not self.methods:
            raise ConfigError("methods", "at least one method required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError("methods", f"unknown method {m!r}; choose from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods", "duplicate method")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction", "must be in (0, 1)")
        if self.cca_harmonics < 1:
            raise ConfigError("cca_harmonics", "must be at least 1")
        for name, known in (("model", MODEL_DEFAULTS), ("train", TRAIN_DEFAULTS)):
            value = getattr(self, name)
            unknown = sorted(set(value) - set(known))
            if unknown:
                raise ConfigError(f"{name}.{unknown[0]}", "unknown field")
            object.__setattr__(self, name, {**known, **value})
        if self.feature_transform not in TRANSFORMS:
            raise ConfigError("feature_transform", f"must be one of {TRANSFORMS}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype", "must be float32 or float64")
        if self.n_subjects < 1:
            raise ConfigError("n_subjects", "must be at least 1")
        if self.shap.subject >= self.n_subjects:
            raise ConfigError("shap.subject", "must be below n_subjects")
        if not 0 <= self.gain_jitter < 1:
            raise ConfigError("gain_jitter", "must be in [0, 1)")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must fit an unsigned 64-bit integer")
        if len(self.synth.gain_profile) != self.session.n_channels:
            raise ConfigError("synth.gain_profile",
                              f"length {len(self.synth.gain_profile)} != "
                              f"{self.session.n_channels} channels")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        session = dataclasses.asdict(self.session)
        session["layout"] = dataclasses.asdict(self.session.layout)
        return {
            "schema_version": SCHEMA_VERSION,
            "synth": dataclasses.asdict(self.synth),
            "session": session,
            "band": self.band,
            "window_lengths": self.window_lengths,
            "step": self.step,
            "methods": self.methods,
            "train_fraction": self.train_fraction,
            "cca_harmonics": self.cca_harmonics,
            "fbcca": dataclasses.asdict(self.fbcca),
            "model": dict(self.model),
            "train": dict(self.train),
            "feature_transform": self.feature_transform,
            "dtype": self.dtype,
            "shap": dataclasses.asdict(self.shap),
            "n_subjects": self.n_subjects,
            "gain_jitter": self.gain_jitter,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def config_hash(self) -> str:
        """SHA-256 of the result-relevant settings (output location excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        text = json.dumps(_jsonable(d), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(prefix, "must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{prefix}.{key}", "unknown field")
    try:
        return cls(**data)
    except ConfigError as exc:
        if exc.field.startswith(prefix):
            raise
        raise ConfigError(f"{prefix}.{exc.field}", str(exc).split(": ", 1)[-1]) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(prefix, str(exc)) from exc


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a JSON object")
    data = dict(data)
    version = data.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key in data:
        if key not in names:
            raise ConfigError(key, "unknown field")
    kwargs = dict(data)
    if "synth" in kwargs:
        kwargs["synth"] = _build(SynthConfig, kwargs["synth"], "synth")
    if "session" in kwargs:
        session = dict(kwargs["session"]) if isinstance(kwargs["session"], dict) else None
        if session is None:
            raise ConfigError("session", "must be a JSON object")
        if "layout" in session:
            from ..signals import ChannelLayout
            session["layout"] = _build(ChannelLayout, session["layout"], "session.layout")
        kwargs["session"] = _build(SessionMeta, session, "session")
    if "fbcca" in kwargs:
        kwargs["fbcca"] = _build(FilterBankSpec, kwargs["fbcca"], "fbcca")
    if "shap" in kwargs:
        kwargs["shap"] = _build(ShapConfig, kwargs["shap"], "shap")
    for name in ("model", "train"):
        if name in kwargs and not isinstance(kwargs[name], dict):
            raise ConfigError(name, "must be a JSON object")
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("config", str(exc)) from exc


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def planted_alpha_config() -> ExperimentConfig:
    """Class information lives only in 10 Hz power on PO4, PO5 and PO6.

    Every class oscillates at the same frequency with amplitudes growing by
    class, and noise is set once per session, so only alpha-band power of
    those three channels separates the classes.
    """
    synth = SynthConfig(amplitudes=(0.0, 1.0, 2.0, 3.0), frequencies=(10.0,) * 4,
                        n_harmonics=1, gain_profile=(0, 0, 0, 0, 0, 1, 1, 1),
                        snr_reference="session", snr_db=-6.0)
    return ExperimentConfig(synth=synth, methods=("macnn_bilstm",), window_lengths=(1.5,),
                            n_subjects=1, gain_jitter=0.0,
                            shap=ShapConfig(n_instances=12, n_background=20, n_samples=1024))


def smoke_config() -> ExperimentConfig:
    """A seconds-scale run for trying the CLI."""
    return ExperimentConfig(window_lengths=(0.5, 1.5), n_subjects=2,
                            train=dict(TRAIN_DEFAULTS, epochs=3),
                            shap=ShapConfig(n_instances=2, n_background=8, n_samples=256))


BUILTIN_CONFIGS = {
    "default": default_config,
    "planted-alpha": planted_alpha_config,
    "smoke": smoke_config,
}


def load_config(source: str) -> ExperimentConfig:
    """A built-in preset name or a path to a JSON file."""
    if source in BUILTIN_CONFIGS:
        return BUILTIN_CONFIGS[source]()
    path = Path(source)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError("config", f"{path} is not valid UTF-8 JSON: {exc}") from exc
    return config_from_dict(data)


def derive_seed(root: int, *key: int) -> int:
    """64-bit seed for the stream addressed by ``key`` under ``root``."""
    words = np.random.SeedSequence(root, spawn_key=tuple(key)).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def subject_synth(cfg: ExperimentConfig, subject: int) -> SynthConfig:
    """Per-subject generator settings: own seed and a jittered gain profile."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(subject, 1)))
    gains = np.asarray(cfg.synth.gain_profile)
    gains = gains * rng.uniform(1 - cfg.gain_jitter, 1 + cfg.gain_jitter, size=gains.shape)
    return dataclasses.replace(cfg.synth, seed=derive_seed(cfg.seed, subject, 0),
                               gain_profile=tuple(float(g) for g in gains))


def model_config(cfg: ExperimentConfig, method: str):
    from ..nn.model import ModelConfig
    params = dict(cfg.model)
    params["attention"] = method == "macnn_bilstm"
    return ModelConfig(**params)


def train_config(cfg: ExperimentConfig, seed: int):
    from ..nn.training import TrainConfig
    return TrainConfig(**cfg.train, seed=seed)
