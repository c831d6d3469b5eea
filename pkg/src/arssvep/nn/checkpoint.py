"""MACB0001 model checkpoints.

Layout (little-endian)::

    8 bytes   magic b"MACB0001"
    config    u32 input_dim, seq_len, conv_channels, kernel_size, stride,
              hidden, n_heads, d_k, n_classes; f64 dropout; u8 attention
    u32       number of blobs
    blob      u16 name length, UTF-8 name, u32 element count, f32 values

Blobs hold every parameter plus the input normaliser (``norm.mean``,
``norm.scale``).
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ConfigError, FormatError
from .model import MACNNBiLSTM, ModelConfig

MAGIC = b"MACB0001"
_INT_FIELDS = ("input_dim", "seq_len", "conv_channels", "kernel_size", "stride",
               "hidden", "n_heads", "d_k", "n_classes")
_CONFIG = struct.Struct("<9IdB")


def encode_checkpoint(model: MACNNBiLSTM) -> bytes:
    c = model.config
    parts = [MAGIC, _CONFIG.pack(*(getattr(c, f) for f in _INT_FIELDS), c.dropout,
                                 int(c.attention))]
    state = model.state_dict()
    parts.append(struct.pack("<I", len(state)))
    for name, value in state.items():
        raw = name.encode("utf-8")
        flat = np.ascontiguousarray(value, dtype="<f4").reshape(-1)
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<I", flat.size))
        parts.append(flat.tobytes())
    return b"".join(parts)


def peek_config(buf: bytes) -> ModelConfig:
    """The ModelConfig stored in a checkpoint, without reading the blobs."""
    if buf[:len(MAGIC)] != MAGIC:
        raise FormatError("not a MACB0001 checkpoint (bad magic)")
    if len(buf) < len(MAGIC) + _CONFIG.size + 4:
        raise FormatError("truncated checkpoint header")
    *ints, dropout, attention = _CONFIG.unpack_from(buf, len(MAGIC))
    try:
        return ModelConfig(**dict(zip(_INT_FIELDS, ints)), dropout=dropout,
                           attention=bool(attention))
    except ConfigError as exc:
        raise FormatError(f"checkpoint holds an invalid model config: {exc}") from exc


def decode_checkpoint(buf: bytes, expected: Optional[ModelConfig] = None,
                      dtype=np.float64) -> MACNNBiLSTM:
    config = peek_config(buf)
    pos = len(MAGIC) + _CONFIG.size
    if expected is not None and config != expected:
        diff = [k for k, v in config.to_dict().items() if v != getattr(expected, k)]
        raise ConfigError("checkpoint", f"model config mismatch in {', '.join(diff)}")
    (n_blobs,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    state = {}
    for _ in range(n_blobs):
        if len(buf) < pos + 2:
            raise FormatError("truncated checkpoint blob header")
        (length,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        if len(buf) < pos + length + 4:
            raise FormatError("truncated checkpoint blob header")
        name = buf[pos:pos + length].decode("utf-8")
        pos += length
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        if len(buf) < pos + 4 * count:
            raise FormatError(f"truncated values for {name}")
        state[name] = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).astype(float)
        pos += 4 * count
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after the last blob")
    model = MACNNBiLSTM(config, dtype=dtype)
    model.load_state_dict(state)
    return model


def save_checkpoint(path, model: MACNNBiLSTM) -> None:
    Path(path).write_bytes(encode_checkpoint(model))


def load_checkpoint(path, expected: Optional[ModelConfig] = None,
                    dtype=np.float64) -> MACNNBiLSTM:
    return decode_checkpoint(Path(path).read_bytes(), expected, dtype)
