"""SSVP1 binary epoch files.

Layout (all integers little-endian)::

    8 bytes   magic b"SSVP0001"
    u32 x 4   n_trials, n_channels, n_samples, sampling_rate_hz
    u8 x N    one label per trial
    names     per channel: u16 byte length, UTF-8 bytes
    f32       data, trial-major, then channel, then sample
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .signals import ChannelLayout, EpochSet, SessionMeta

MAGIC = b"SSVP0001"
_HEADER = struct.Struct("<8s4I")


def encode_epochs(epochs: EpochSet) -> bytes:
    fs = epochs.meta.sampling_rate
    if fs != int(fs) or not 0 < fs < 2 ** 32:
        raise FormatError(f"sampling rate {fs} cannot be stored as an integer number of Hz")
    parts = [_HEADER.pack(MAGIC, epochs.n_trials, epochs.n_channels, epochs.n_samples, int(fs)),
             epochs.labels.astype(np.uint8).tobytes()]
    for name in epochs.meta.layout.names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    parts.append(np.ascontiguousarray(epochs.data, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_epochs(buf: bytes) -> EpochSet:
    if len(buf) < len(MAGIC) or buf[:len(MAGIC)] != MAGIC:
        raise FormatError("not an SSVP1 file (bad magic)")
    if len(buf) < _HEADER.size:
        raise FormatError("truncated SSVP1 header")
    _, n_trials, n_channels, n_samples, fs = _HEADER.unpack_from(buf)
    pos = _HEADER.size
    if len(buf) < pos + n_trials:
        raise FormatError("truncated SSVP1 label block")
    labels = np.frombuffer(buf, dtype=np.uint8, count=n_trials, offset=pos).astype(np.int64)
    pos += n_trials
    names = []
    for _ in range(n_channels):
        if len(buf) < pos + 2:
            raise FormatError("truncated SSVP1 channel-name block")
        (length,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        if len(buf) < pos + length:
            raise FormatError("truncated SSVP1 channel-name block")
        try:
            names.append(buf[pos:pos + length].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"channel name is not valid UTF-8: {exc}") from exc
        pos += length
    count = n_trials * n_channels * n_samples
    if len(buf) - pos != 4 * count:
        raise FormatError(f"SSVP1 payload holds {len(buf) - pos} bytes, expected {4 * count}")
    if fs == 0:
        raise FormatError("sampling rate is zero")
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).astype(float)
    per_class = np.bincount(labels, minlength=4)
    meta = SessionMeta(sampling_rate=float(fs), flicker_duration=n_samples / fs,
                       trials_per_class=max(int(per_class.max(initial=1)), 1),
                       layout=ChannelLayout(tuple(names)))
    return EpochSet(data.reshape(n_trials, n_channels, n_samples), labels, meta, "file")


def write_epochs(path, epochs: EpochSet) -> None:
    Path(path).write_bytes(encode_epochs(epochs))


def read_epochs(path) -> EpochSet:
    return decode_epochs(Path(path).read_bytes())
