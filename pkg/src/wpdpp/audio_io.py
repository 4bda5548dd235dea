"""WAV and flat-tensor file I/O."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.io.wavfile


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a RIFF WAV as float64 (M, N) in [-1, 1] for PCM16, raw values for float."""
    fs, data = scipy.io.wavfile.read(str(path))
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample type {data.dtype} in {path}")
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T
    return np.ascontiguousarray(data), int(fs)


def write_wav(path, samples, sample_rate: int, pcm16: bool = False) -> None:
    """Write (M, N) or (N,) samples as little-endian float32 (default) or PCM16."""
    x = np.asarray(samples)
    if x.ndim == 2:
        x = x.T if x.shape[0] > 1 else x[0]
    if pcm16:
        x = np.clip(np.round(np.asarray(x, dtype=np.float64) * 32768.0), -32768, 32767)
        x = x.astype("<i2")
    else:
        x = x.astype("<f4")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    scipy.io.wavfile.write(str(path), int(sample_rate), np.ascontiguousarray(x))


def write_tensor(path, array: np.ndarray, **meta) -> None:
    """Raw little-endian tensor at ``path`` plus ``path.json`` with shape/dtype."""
    path = Path(path)
    a = np.asarray(array)
    dtype = "complex64" if np.iscomplexobj(a) else "float32"
    a = np.ascontiguousarray(a.astype("<c8" if dtype == "complex64" else "<f4"))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(a.tobytes())
    header = {"shape": list(a.shape), "dtype": dtype, "byte_order": "little", **meta}
    Path(str(path) + ".json").write_text(json.dumps(header, indent=2, sort_keys=True))


def read_tensor(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    header = json.loads(Path(str(path) + ".json").read_text())
    dtype = {"complex64": "<c8", "float32": "<f4"}.get(header.get("dtype"))
    if dtype is None:
        raise ValueError(f"unsupported tensor dtype {header.get('dtype')!r} in {path}")
    data = np.frombuffer(path.read_bytes(), dtype=dtype)
    shape = tuple(header["shape"])
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: {data.size} values do not fill shape {shape}")
    return data.reshape(shape).astype(np.complex128 if dtype == "<c8" else np.float64), header
