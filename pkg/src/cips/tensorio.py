"""Raw tensor interchange and checkpoint container.

Tensor records ("CTNSR01"):

    offset 0   8 bytes   magic b"CTNSR01\\0"
    offset 8   4 bytes   header length N, uint32 little-endian
    offset 12  N bytes   JSON header, UTF-8, space-padded
    aligned    payload   raw little-endian array bytes, C order

The header carries ``dtype`` (numpy little-endian string, e.g. "<f8"),
``shape`` (list of ints) and ``order`` ("little"). N is chosen so the
payload begins at a file offset that is a multiple of 64, counting from
the start of the stream; records therefore align when concatenated.

Checkpoint files ("CIPSCKPT"): 8-byte magic, uint32 LE version, uint32 LE
JSON config length, the config block (model architecture + named tensor
manifest), then the tensors as consecutive CTNSR01 records in manifest
order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

__all__ = [
    "TENSOR_MAGIC", "CKPT_MAGIC", "CKPT_VERSION",
    "write_tensor", "read_tensor", "save_tensor", "load_tensor",
    "save_checkpoint", "load_checkpoint",
]

TENSOR_MAGIC = b"CTNSR01\x00"
CKPT_MAGIC = b"CIPSCKPT"
CKPT_VERSION = 1
_ALIGN = 64

_DTYPES = {"<f8": np.dtype("<f8"), "<f4": np.dtype("<f4"), "<i8": np.dtype("<i8")}


class TensorFormatError(ValueError):
    """Stream does not parse as the tensor interchange format."""


def _le(arr: np.ndarray) -> np.ndarray:
    dt = arr.dtype.newbyteorder("<")
    arr = arr.astype(dt, copy=False)
    return arr if arr.ndim == 0 else np.ascontiguousarray(arr)


def write_tensor(f: BinaryIO, arr: np.ndarray) -> None:
    """Append one tensor record at the current stream position."""
    arr = _le(np.asarray(arr))
    key = arr.dtype.str
    if key not in _DTYPES:
        raise TensorFormatError(f"unsupported dtype {arr.dtype}")
    header = {"dtype": key, "shape": list(arr.shape), "order": "little"}
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    start = f.tell()
    base = start + len(TENSOR_MAGIC) + 4
    pad = (-(base + len(blob))) % _ALIGN
    blob += b" " * pad
    f.write(TENSOR_MAGIC)
    f.write(struct.pack("<I", len(blob)))
    f.write(blob)
    f.write(arr.tobytes(order="C"))


def read_tensor(f: BinaryIO) -> np.ndarray:
    """Read one tensor record at the current stream position."""
    magic = f.read(len(TENSOR_MAGIC))
    if magic != TENSOR_MAGIC:
        raise TensorFormatError(f"bad tensor magic {magic!r}")
    (hlen,) = struct.unpack("<I", f.read(4))
    raw = f.read(hlen)
    if len(raw) != hlen:
        raise TensorFormatError("truncated header")
    header = json.loads(raw.decode("utf-8"))
    if header.get("order", "little") != "little":
        raise TensorFormatError(f"unsupported byte order {header.get('order')!r}")
    try:
        dtype = _DTYPES[header["dtype"]]
    except KeyError:
        raise TensorFormatError(f"unsupported dtype {header.get('dtype')!r}") from None
    shape = tuple(int(s) for s in header["shape"])
    if f.tell() % _ALIGN != 0:
        raise TensorFormatError("payload not 64-byte aligned")
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    payload = f.read(count * dtype.itemsize)
    if len(payload) != count * dtype.itemsize:
        raise TensorFormatError("truncated payload")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def save_tensor(path: str | Path, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        write_tensor(f, arr)


def load_tensor(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_tensor(f)


def save_checkpoint(path: str | Path, config: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write a checkpoint: config metadata plus named parameter tensors.

    The tensor manifest (name order) is stored in the config block, so the
    byte stream is fully self-describing and order-stable.
    """
    config = dict(config)
    config["tensor_names"] = list(tensors.keys())
    blob = json.dumps(config, separators=(",", ":"), sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", CKPT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name in config["tensor_names"]:
            write_tensor(f, tensors[name])


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        magic = f.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise TensorFormatError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CKPT_VERSION:
            raise TensorFormatError(f"unsupported checkpoint version {version}")
        (clen,) = struct.unpack("<I", f.read(4))
        config = json.loads(f.read(clen).decode("utf-8"))
        tensors = {}
        for name in config.get("tensor_names", []):
            tensors[name] = read_tensor(f)
    return config, tensors
