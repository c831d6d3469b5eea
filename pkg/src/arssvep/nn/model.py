"""MACNN-BiLSTM: conv1d + ReLU -> BiLSTM -> multi-head self-attention ->
temporal mean-pool -> affine head.

With ``attention=False`` the attention block is an identity map, giving the
plain CNN-BiLSTM used as the ablation baseline.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np

from ..errors import ConfigError, ShapeError
from . import functional as F
from .tensor import ParameterStore, check_finite


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 80
    seq_len: int = 6
    conv_channels: int = 32
    kernel_size: int = 3
    stride: int = 1
    hidden: int = 32
    n_heads: int = 4
    d_k: int = 16
    n_classes: int = 4
    dropout: float = 0.1
    attention: bool = True

    def __post_init__(self):
        for name in ("input_dim", "seq_len", "conv_channels", "kernel_size", "stride",
                     "hidden", "n_heads", "d_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name}", "must be positive")
        if self.n_heads * self.d_k != self.d_model:
            raise ConfigError("model.d_k",
                              f"n_heads * d_k = {self.n_heads * self.d_k} but the "
                              f"BiLSTM emits {self.d_model} features")
        if self.n_classes != 4:
            raise ConfigError("model.n_classes", "must be 4")
        if self.kernel_size > self.seq_len:
            raise ConfigError("model.kernel_size", "larger than the sequence length")
        if not 0 <= self.dropout < 1:
            raise ConfigError("model.dropout", "must be in [0, 1)")

    @property
    def d_model(self) -> int:
        return 2 * self.hidden

    @property
    def conv_len(self) -> int:
        return (self.seq_len - self.kernel_size) // self.stride + 1

    def to_dict(self) -> dict:
        return asdict(self)


_ATTN = ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")


class MACNNBiLSTM:
    """Sequence classifier over feature sequences ``x[B, seq_len, input_dim]``.

    Inputs are standardised with ``input_mean`` / ``input_scale`` (set by
    :meth:`fit_normalizer`) before the first convolution.
    """

    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 0, dtype=np.float64):
        self.config = config
        self.dtype = np.dtype(dtype)
        c = config
        H, D = c.hidden, c.d_model
        self.store = ParameterStore(self.dtype)
        self.store.declare("conv.weight", (c.conv_channels, c.input_dim, c.kernel_size))
        self.store.declare("conv.bias", (c.conv_channels,))
        # index 0: forward direction, index 1: backward direction
        self.store.declare("lstm.wx", (2, c.conv_channels, 4 * H))
        self.store.declare("lstm.wh", (2, H, 4 * H))
        self.store.declare("lstm.b", (2, 4 * H))
        if c.attention:
            for name in _ATTN:
                self.store.declare(f"attn.{name}", (D, D) if name[0] == "w" else (D,))
        self.store.declare("head.weight", (D, c.n_classes))
        self.store.declare("head.bias", (c.n_classes,))
        self.params = self.store.allocate()
        self.input_mean = np.zeros(c.input_dim, dtype=self.dtype)
        self.input_scale = np.ones(c.input_dim, dtype=self.dtype)
        self._cache = None
        self.initialize(seed)

    # -- parameters --------------------------------------------------------

    def initialize(self, seed: int) -> None:
        """Uniform fan-in init; LSTM forget-gate biases start at +1."""
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
        c = self.config
        fan_in = {
            "conv": c.input_dim * c.kernel_size,
            "lstm": c.hidden,
            "attn": c.d_model,
            "head": c.d_model,
        }
        for name in self.store.names():
            p = self.params[name]
            bound = 1.0 / np.sqrt(fan_in[name.split(".")[0]])
            p.values[...] = rng.uniform(-bound, bound, size=p.shape)
        H = c.hidden
        self.params["lstm.b"].values[:, H:2 * H] += 1.0

    def parameters(self):
        return list(self.store)

    def zero_grad(self) -> None:
        self.store.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: self.params[name].values.copy() for name in self.store.names()}
        state["norm.mean"] = self.input_mean.copy()
        state["norm.scale"] = self.input_scale.copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        expected = set(self.store.names()) | {"norm.mean", "norm.scale"}
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise ConfigError("checkpoint", f"parameter mismatch; missing {missing}, unexpected {extra}")
        for name in self.store.names():
            value = np.asarray(state[name])
            if value.size != self.params[name].size:
                raise ConfigError("checkpoint", f"{name} has {value.size} values, "
                                                f"expected {self.params[name].size}")
            self.params[name].values[...] = value.reshape(self.params[name].shape)
        self.input_mean = np.asarray(state["norm.mean"], dtype=self.dtype).copy()
        self.input_scale = np.asarray(state["norm.scale"], dtype=self.dtype).copy()

    def fit_normalizer(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float).reshape(-1, self.config.input_dim)
        scale = x.std(axis=0)
        scale[scale <= 1e-12 * np.maximum(np.abs(x).max(axis=0), 1e-300)] = 1.0
        self.input_mean = x.mean(axis=0).astype(self.dtype)
        self.input_scale = scale.astype(self.dtype)

    def _p(self, name):
        return self.params[name].values

    # -- forward / backward ------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False,
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
        c = self.config
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 3 or x.shape[1:] != (c.seq_len, c.input_dim):
            raise ShapeError(f"expected input [B, {c.seq_len}, {c.input_dim}], got {x.shape}")
        drop = train and c.dropout > 0
        if drop and rng is None:
            raise ValueError("training-mode forward needs an rng for dropout")

        z = (x - self.input_mean) / self.input_scale
        conv, conv_cache = F.conv1d_forward(z.transpose(0, 2, 1), self._p("conv.weight"),
                                            self._p("conv.bias"), c.stride)
        relu_mask = conv > 0
        h = (conv * relu_mask).transpose(0, 2, 1)  # [B, T', C]
        mask1 = self._dropout_mask(h.shape, rng) if drop else None
        if mask1 is not None:
            h = h * mask1
        seq, lstm_cache = F.bilstm_stacked_forward(
            h, self._p("lstm.wx"), self._p("lstm.wh"), self._p("lstm.b"))
        check_finite(seq, "bilstm")
        attn_cache = None
        if c.attention:
            params = tuple(self._p(f"attn.{k}") for k in _ATTN)
            seq, attn_cache = F.mha_forward(seq, params, c.n_heads)
            check_finite(seq, "attention")
        mask2 = self._dropout_mask(seq.shape, rng) if drop else None
        if mask2 is not None:
            seq = seq * mask2
        pooled = seq.mean(axis=1)
        logits = pooled @ self._p("head.weight") + self._p("head.bias")
        check_finite(logits, "model head")
        self._cache = (conv_cache, relu_mask, mask1, lstm_cache, attn_cache, mask2, pooled,
                       seq.shape[1])
        return logits

    def _dropout_mask(self, shape, rng):
        keep = 1.0 - self.config.dropout
        return (rng.random(shape) < keep).astype(self.dtype) / keep

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns d loss / d raw input."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        conv_cache, relu_mask, mask1, lstm_cache, attn_cache, mask2, pooled, T = self._cache
        g = self.params
        g["head.weight"].grad += pooled.T @ dlogits
        g["head.bias"].grad += dlogits.sum(axis=0)
        dpooled = dlogits @ self._p("head.weight").T
        dseq = np.repeat(dpooled[:, None, :] / T, T, axis=1)
        if mask2 is not None:
            dseq = dseq * mask2
        if attn_cache is not None:
            dseq, grads = F.mha_backward(dseq, attn_cache)
            for k, gr in zip(_ATTN, grads):
                g[f"attn.{k}"].grad += gr
        dh, *grads = F.bilstm_stacked_backward(dseq, lstm_cache)
        for k, gr in zip(("wx", "wh", "b"), grads):
            g[f"lstm.{k}"].grad += gr
        if mask1 is not None:
            dh = dh * mask1
        dconv = dh.transpose(0, 2, 1) * relu_mask
        dz, dw, db = F.conv1d_backward(dconv, conv_cache)
        g["conv.weight"].grad += dw
        g["conv.bias"].grad += db
        return dz.transpose(0, 2, 1) / self.input_scale

    def predict_proba(self, x: np.ndarray, batch_size: int = 2048) -> np.ndarray:
        """Eval-mode class probabilities; a pure function of parameters and input."""
        x = np.asarray(x)
        out = [F.softmax(self.forward(x[i:i + batch_size]), axis=1)
               for i in range(0, len(x), batch_size)]
        self._cache = None
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.config.n_classes))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)
