"""Binary tensor container with JSON sidecars.

Single-tensor files: a small header (magic, version, dtype code, shape),
row-major payload, and a trailing CRC32 so truncation and corruption are
detected before any data is handed to callers.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"ANAVOC"
VERSION = 1

_DTYPES = {
    1: np.dtype("<f4"),
    2: np.dtype("<f8"),
    3: np.dtype("<i8"),
    4: np.dtype("u1"),
}
_CODES = {v: k for k, v in _DTYPES.items()}
_BOOL_CODE = 5  # stored as u1, restored as bool


class ContainerError(ValueError):
    """Malformed, truncated, or corrupt tensor container."""


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write one tensor to `path` in the container format."""
    arr = np.asarray(array)
    shape = arr.shape  # ascontiguousarray promotes 0-dim to 1-dim
    arr = np.ascontiguousarray(arr)
    if arr.dtype == np.bool_:
        code = _BOOL_CODE
        arr = arr.astype("u1")
    else:
        dt = arr.dtype.newbyteorder("<")
        if dt not in _CODES:
            raise ContainerError(f"unsupported dtype {arr.dtype}")
        code = _CODES[dt]
        arr = arr.astype(dt, copy=False)
    header = MAGIC + struct.pack("<BBB", VERSION, code, len(shape))
    header += b"".join(struct.pack("<Q", d) for d in shape)
    payload = arr.tobytes()
    crc = zlib.crc32(header + payload) & 0xFFFFFFFF
    Path(path).write_bytes(header + payload + struct.pack("<I", crc))


def read_tensor(path: str | Path) -> np.ndarray:
    """Read one tensor, validating magic, length, and checksum."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 3 + 4:
        raise ContainerError(f"{path}: file too short to be a tensor container")
    if blob[: len(MAGIC)] != MAGIC:
        raise ContainerError(f"{path}: bad magic")
    off = len(MAGIC)
    version, code, ndim = struct.unpack_from("<BBB", blob, off)
    off += 3
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    if code != _BOOL_CODE and code not in _DTYPES:
        raise ContainerError(f"{path}: unknown dtype code {code}")
    if len(blob) < off + 8 * ndim + 4:
        raise ContainerError(f"{path}: truncated header")
    shape = struct.unpack_from("<" + "Q" * ndim, blob, off)
    off += 8 * ndim
    dtype = _DTYPES[4] if code == _BOOL_CODE else _DTYPES[code]
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    nbytes = count * dtype.itemsize
    if len(blob) != off + nbytes + 4:
        raise ContainerError(
            f"{path}: payload length mismatch (truncated or corrupt file)"
        )
    (stored_crc,) = struct.unpack_from("<I", blob, off + nbytes)
    if zlib.crc32(blob[: off + nbytes]) & 0xFFFFFFFF != stored_crc:
        raise ContainerError(f"{path}: checksum mismatch")
    arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off).reshape(shape)
    if code == _BOOL_CODE:
        return arr.astype(bool)
    return arr.copy()


def write_sidecar(path: str | Path, meta: dict) -> None:
    """Write a JSON sidecar with stable key order (byte-reproducible)."""
    Path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def read_sidecar(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
