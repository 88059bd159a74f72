"""File formats: float WAV, HOAT tensors and tensor bundles.

HOAT layout (all little-endian)::

    b"HOAT" | version u8 = 1 | dtype u8 = 0 (float32) | ndim u8 | pad u8 = 0
    | ndim x u32 dims | row-major data
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np
from scipy.io import wavfile

HOAT_MAGIC = b"HOAT"
HOAT_VERSION = 1
DTYPE_F32 = 0


class FormatError(ValueError):
    pass


def write_wav(path, data, rate: int) -> None:
    """Write (channels, samples) as 32-bit IEEE float WAV."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 1:
        data = data[None, :]
    _atomic_write(path, lambda f: wavfile.write(f, rate, np.ascontiguousarray(data.T)))


def read_wav(path) -> tuple[np.ndarray, int]:
    """Return (channels, samples) float32 data and the sample rate."""
    rate, data = wavfile.read(path)
    if data.dtype != np.float32:
        raise FormatError(f"{path}: expected 32-bit float samples, got {data.dtype}")
    if data.ndim == 1:
        data = data[:, None]
    return np.ascontiguousarray(data.T), rate


def encode_hoat(array) -> bytes:
    a = np.asarray(array, dtype="<f4")
    if a.ndim > 255:
        raise FormatError("too many dimensions")
    header = HOAT_MAGIC + bytes([HOAT_VERSION, DTYPE_F32, a.ndim, 0])
    dims = struct.pack(f"<{a.ndim}I", *a.shape)
    return header + dims + np.ascontiguousarray(a).tobytes()


def decode_hoat(blob: bytes) -> np.ndarray:
    if len(blob) < 8 or blob[:4] != HOAT_MAGIC:
        raise FormatError("not a HOAT tensor")
    version, dtype, ndim, _ = blob[4:8]
    if version != HOAT_VERSION:
        raise FormatError(f"unsupported HOAT version {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"unsupported HOAT dtype {dtype}")
    end = 8 + 4 * ndim
    shape = struct.unpack(f"<{ndim}I", blob[8:end])
    count = int(np.prod(shape, dtype=np.int64))
    if len(blob) - end != 4 * count:
        raise FormatError(f"payload size {len(blob) - end} does not match shape {shape}")
    return np.frombuffer(blob, dtype="<f4", offset=end).reshape(shape).copy()


def write_hoat(path, array) -> None:
    blob = encode_hoat(array)
    _atomic_write(path, lambda f: f.write(blob))


def read_hoat(path) -> np.ndarray:
    return decode_hoat(Path(path).read_bytes())


def write_bundle(directory, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """One HOAT file per named parameter plus ``index.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {"meta": meta or {}, "tensors": {}}
    for name, value in params.items():
        fname = name.replace("/", ".") + ".hoat"
        write_hoat(directory / fname, value)
        index["tensors"][name] = {"file": fname, "shape": list(np.shape(value))}
    write_text(directory / "index.json", json.dumps(index, indent=2) + "\n")


def read_bundle(directory) -> tuple[dict[str, np.ndarray], dict]:
    directory = Path(directory)
    index = json.loads((directory / "index.json").read_text())
    params = {name: read_hoat(directory / entry["file"]) for name, entry in index["tensors"].items()}
    return params, index.get("meta", {})


def write_text(path, text: str) -> None:
    _atomic_write(path, lambda f: f.write(text.encode()))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write(path, writer) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "wb") as f:
        writer(f)
    os.replace(tmp, path)
