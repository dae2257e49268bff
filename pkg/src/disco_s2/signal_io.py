"""Binary signal files.

Layout (little-endian): magic ``SSIG``, u32 version, u32 L, u32 channels,
u32 dtype tag (1 = float64), then float64 samples ordered
``[channel][t][p]``.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SSIG"
VERSION = 1
DTYPE_F64 = 1
_HEAD = struct.Struct("<4sIIII")


class SignalFormatError(ValueError):
    pass


def signal_to_bytes(x: np.ndarray) -> bytes:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    L = x.shape[1] - 1 if x.ndim == 3 else 0
    if L < 1 or x.shape[2] != 2 * L:
        raise SignalFormatError(f"expected (channels, L+1, 2L) samples, got {x.shape}")
    return _HEAD.pack(MAGIC, VERSION, L, x.shape[0], DTYPE_F64) + x.astype("<f8").tobytes()


def signal_from_bytes(data: bytes) -> np.ndarray:
    """Samples of shape ``(channels, L+1, 2L)``."""
    if len(data) < _HEAD.size:
        raise SignalFormatError("truncated signal header")
    magic, version, L, channels, dtype = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise SignalFormatError("not a signal file (bad magic)")
    if version != VERSION:
        raise SignalFormatError(f"unsupported signal file version {version}")
    if dtype != DTYPE_F64:
        raise SignalFormatError(f"unsupported dtype tag {dtype}")
    if L < 1 or channels < 1:
        raise SignalFormatError("L and channels must be positive")
    n = channels * (L + 1) * 2 * L
    body = data[_HEAD.size:]
    if len(body) != 8 * n:
        raise SignalFormatError(f"payload has {len(body)} bytes, expected {8 * n}")
    return np.frombuffer(body, dtype="<f8").astype(float).reshape(channels, L + 1, 2 * L)


def save_signal(x: np.ndarray, path) -> None:
    Path(path).write_bytes(signal_to_bytes(x))


def load_signal(path) -> np.ndarray:
    return signal_from_bytes(Path(path).read_bytes())
