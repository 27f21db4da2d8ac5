"""WAV and JSON file helpers.

WAVs are written as 32-bit float.  Integer WAVs are read and scaled to
[-1, 1): int16 by 1/32768, int32 by 1/2**31, uint8 as (x - 128)/128.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import BinauralBuffer, SampleBuffer
from .errors import DataError, ParameterError

_INT_SCALE = {np.dtype(np.int16): 32768.0, np.dtype(np.int32): 2.0 ** 31}


def read_wav_array(path) -> tuple[np.ndarray, int]:
    """Samples as float64 ``(n,)`` or ``(n, channels)`` plus the sample rate."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such WAV file: {path}")
    try:
        fs, data = wavfile.read(path)
    except (ValueError, EOFError) as e:
        raise DataError(f"cannot read {path}: {e}") from None
    if data.dtype in _INT_SCALE:
        x = data.astype(np.float64) / _INT_SCALE[data.dtype]
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype.kind == "f":
        x = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported sample format {data.dtype}")
    return x, int(fs)


def read_wav(path) -> SampleBuffer | BinauralBuffer:
    """Mono files give a SampleBuffer, stereo files a BinauralBuffer (left, right)."""
    x, fs = read_wav_array(path)
    if x.ndim == 1:
        return SampleBuffer(x, fs)
    if x.shape[1] == 1:
        return SampleBuffer(x[:, 0], fs)
    if x.shape[1] == 2:
        return BinauralBuffer.from_arrays(x[:, 0], x[:, 1], fs)
    raise DataError(f"{path}: expected 1 or 2 channels, found {x.shape[1]}")


def read_mono(path) -> SampleBuffer:
    b = read_wav(path)
    if isinstance(b, BinauralBuffer):
        raise ParameterError(f"{path}: expected a mono file")
    return b


def read_stereo(path) -> BinauralBuffer:
    b = read_wav(path)
    if isinstance(b, SampleBuffer):
        raise ParameterError(f"{path}: expected a stereo file")
    return b


def write_wav(path, x: SampleBuffer | BinauralBuffer) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = x.as_array() if isinstance(x, BinauralBuffer) else x.samples
    wavfile.write(path, x.sample_rate, np.ascontiguousarray(data, dtype=np.float32))
    return path


def load_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ParameterError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParameterError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(cfg, dict):
        raise ParameterError(f"{path}: top level must be an object")
    return cfg
