"""Little-endian binary file formats.

SIG1  raw multichannel signal (channel-major f32)
EAF1  feature sequence (row-major f32)
KPC1  fitted kernel PCA model (f64)
NNW1  named parameter checkpoint (f32)

Every reader validates the magic and payload size and raises ``CorruptFile``.
Writers go through a temp file + rename so readers never see partial files.
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .dsp import Signal
from .errors import CorruptFile
from .features import KINDS, FeatureSequence
from .reduction import KernelPCAModel

_KERNELS = ("linear", "rbf")


def atomic_write(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path, magic: bytes) -> bytes:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    if data[:4] != magic:
        raise CorruptFile(f"{path}: bad magic {data[:4]!r}, expected {magic!r}")
    return data


def _array(data: bytes, offset: int, dtype: str, count: int, path) -> tuple[np.ndarray, int]:
    nbytes = np.dtype(dtype).itemsize * count
    if offset + nbytes > len(data):
        raise CorruptFile(f"{path}: truncated payload")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    return arr, offset + nbytes


# -- SIG1 ---------------------------------------------------------------------

def encode_signal(sig: Signal) -> bytes:
    header = b"SIG1" + struct.pack("<IId", sig.channels, sig.n_samples, sig.sample_rate_hz)
    return header + sig.samples.astype("<f4").tobytes()


def write_signal(path, sig: Signal):
    atomic_write(path, encode_signal(sig))


def read_signal(path) -> Signal:
    data = _read(path, b"SIG1")
    if len(data) < 20:
        raise CorruptFile(f"{path}: truncated header")
    channels, n, fs = struct.unpack_from("<IId", data, 4)
    values, end = _array(data, 20, "<f4", channels * n, path)
    if end != len(data):
        raise CorruptFile(f"{path}: {len(data) - end} trailing bytes")
    return Signal(values.reshape(channels, n).astype(np.float64), fs)


# -- EAF1 ---------------------------------------------------------------------

def encode_features(seq: FeatureSequence) -> bytes:
    header = b"EAF1" + struct.pack(
        "<IIdB", seq.n_frames, seq.dim, seq.frame_rate_hz, KINDS.index(seq.kind)
    )
    return header + seq.frames.astype("<f4").tobytes()


def write_features(path, seq: FeatureSequence):
    atomic_write(path, encode_features(seq))


def read_features(path) -> FeatureSequence:
    data = _read(path, b"EAF1")
    if len(data) < 21:
        raise CorruptFile(f"{path}: truncated header")
    rows, cols, rate, tag = struct.unpack_from("<IIdB", data, 4)
    if tag >= len(KINDS):
        raise CorruptFile(f"{path}: unknown kind tag {tag}")
    values, end = _array(data, 21, "<f4", rows * cols, path)
    if end != len(data):
        raise CorruptFile(f"{path}: {len(data) - end} trailing bytes")
    try:
        return FeatureSequence(values.reshape(rows, cols).astype(np.float64), rate, KINDS[tag])
    except ValueError as exc:
        raise CorruptFile(f"{path}: {exc}") from exc


# -- KPC1 ---------------------------------------------------------------------

def encode_kpca(model: KernelPCAModel) -> bytes:
    n, d = model.training_frames.shape
    parts = [
        b"KPC1",
        struct.pack("<Bd", _KERNELS.index(model.kernel), model.gamma),
        struct.pack("<III", n, d, model.n_components),
    ]
    for arr in (model.training_frames, model.alphas, model.eigenvalues, model.row_means,
                np.array([model.grand_mean])):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def write_kpca(path, model: KernelPCAModel):
    atomic_write(path, encode_kpca(model))


def read_kpca(path) -> KernelPCAModel:
    data = _read(path, b"KPC1")
    if len(data) < 25:
        raise CorruptFile(f"{path}: truncated header")
    tag, gamma = struct.unpack_from("<Bd", data, 4)
    n, d, k = struct.unpack_from("<III", data, 13)
    if tag >= len(_KERNELS):
        raise CorruptFile(f"{path}: unknown kernel tag {tag}")
    off = 25
    frames, off = _array(data, off, "<f8", n * d, path)
    alphas, off = _array(data, off, "<f8", n * k, path)
    eigvals, off = _array(data, off, "<f8", k, path)
    row_means, off = _array(data, off, "<f8", n, path)
    grand, off = _array(data, off, "<f8", 1, path)
    if off != len(data):
        raise CorruptFile(f"{path}: {len(data) - off} trailing bytes")
    return KernelPCAModel(
        frames.reshape(n, d).copy(), _KERNELS[tag], gamma, alphas.reshape(n, k).copy(),
        eigvals.copy(), row_means.copy(), float(grand[0]),
    )


# -- NNW1 ---------------------------------------------------------------------

def encode_checkpoint(params: dict[str, np.ndarray]) -> bytes:
    parts = [b"NNW1", struct.pack("<I", len(params))]
    for name, arr in params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
    for arr in params.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def write_checkpoint(path, params: dict[str, np.ndarray]):
    atomic_write(path, encode_checkpoint(params))


def read_checkpoint(path) -> dict[str, np.ndarray]:
    """Parameters in manifest order, widened to float64."""
    data = _read(path, b"NNW1")
    try:
        (count,) = struct.unpack_from("<I", data, 4)
        off = 8
        manifest = []
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, off)
            name = data[off + 2 : off + 2 + nlen].decode("utf-8")
            off += 2 + nlen
            (ndim,) = struct.unpack_from("<B", data, off)
            shape = struct.unpack_from(f"<{ndim}I", data, off + 1)
            off += 1 + 4 * ndim
            manifest.append((name, shape))
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: malformed manifest ({exc})") from exc
    params = {}
    for name, shape in manifest:
        values, off = _array(data, off, "<f4", int(np.prod(shape, dtype=np.int64)), path)
        params[name] = values.reshape(shape).astype(np.float64)
    if off != len(data):
        raise CorruptFile(f"{path}: {len(data) - off} trailing bytes")
    return params
