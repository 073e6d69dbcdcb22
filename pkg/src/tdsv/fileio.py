"""Binary tensor container ("SVT1") and atomic file helpers.

A tensor file is: magic ``SVT1``, u32 rank, u32 per-dimension extents,
then the values as little-endian float32 in row-major order.  The same
container holds spectrograms, network parameters, and backend matrices.

All writers go through a temp-file + rename so a failed command never
leaves a partially written artifact behind.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import TensorFormatError

MAGIC = b"SVT1"
MAX_RANK = 8


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def tensor_to_bytes(array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim < 1 or arr.ndim > MAX_RANK:
        raise TensorFormatError(f"tensor rank {arr.ndim} outside supported range 1..{MAX_RANK}")
    header = MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < 8 or data[:4] != MAGIC:
        raise TensorFormatError("bad magic: not an SVT1 tensor file")
    (rank,) = struct.unpack_from("<I", data, 4)
    if rank < 1 or rank > MAX_RANK:
        raise TensorFormatError(f"bad rank {rank}")
    if len(data) < 8 + 4 * rank:
        raise TensorFormatError("truncated dimension header")
    dims = struct.unpack_from(f"<{rank}I", data, 8)
    if any(d == 0 for d in dims):
        raise TensorFormatError(f"zero extent in dims {dims}")
    count = int(np.prod(dims))
    body = data[8 + 4 * rank:]
    if len(body) != 4 * count:
        raise TensorFormatError(f"payload holds {len(body) // 4} floats, header promises {count}")
    return np.frombuffer(body, dtype="<f4").reshape(dims).copy()


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    atomic_write_bytes(path, tensor_to_bytes(array))


def read_tensor(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())


def write_manifest(path: str | Path, kind: str, version: int,
                   fields: dict[str, str], tensors: dict[str, str]) -> None:
    """Versioned text manifest: header line, key=value fields, tensor name->file map."""
    lines = [f"{kind} {version}"]
    lines += [f"{k}={v}" for k, v in fields.items()]
    lines += [f"tensor={name} file={fname}" for name, fname in tensors.items()]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_manifest(path: str | Path, kind: str, version: int) -> tuple[dict[str, str], dict[str, str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"manifest not found: {path}") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split() != [kind, str(version)]:
        head = lines[0] if lines else "<empty>"
        raise TensorFormatError(f"expected '{kind} {version}' header in {path}, got '{head}'")
    fields: dict[str, str] = {}
    tensors: dict[str, str] = {}
    for ln in lines[1:]:
        if "=" not in ln:
            raise TensorFormatError(f"bad manifest line in {path}: '{ln}'")
        key, value = ln.split("=", 1)
        if key == "tensor":
            name, _, fpart = value.partition(" file=")
            if not fpart:
                raise TensorFormatError(f"bad tensor line in {path}: '{ln}'")
            tensors[name] = fpart
        else:
            fields[key] = value
    return fields, tensors


def write_tensor_dir(path: str | Path, kind: str, version: int,
                     fields: dict[str, str], tensors: dict[str, np.ndarray]) -> None:
    """Directory artifact: one .svt file per named tensor plus a manifest.

    Tensor files land first and the manifest is written (atomically) last, so
    a directory with a readable manifest is complete.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    index: dict[str, str] = {}
    for name in sorted(tensors):
        fname = f"{name}.svt"
        write_tensor(root / fname, tensors[name])
        index[name] = fname
    write_manifest(root / "manifest.txt", kind, version, fields, index)


def read_tensor_dir(path: str | Path, kind: str, version: int) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    root = Path(path)
    fields, index = read_manifest(root / "manifest.txt", kind, version)
    tensors = {name: read_tensor(root / fname) for name, fname in index.items()}
    return fields, tensors
