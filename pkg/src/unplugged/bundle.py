"""Versioned container for named arrays plus a JSON header.

Layout (little-endian): 8-byte magic, u16 version, u32 header length,
UTF-8 JSON header, then the raw array bytes in header order.  Output is
byte-for-byte deterministic for equal inputs.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from unplugged import __version__

MAGIC = b"DUELBNDL"
VERSION = 1
_HEAD = struct.Struct("<8sHI")


class BundleError(ValueError):
    pass


def dumps(meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    index = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        raw = arr.astype(dt).tobytes()
        index.append({"name": name, "dtype": dt.str, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = {"meta": meta, "arrays": index, "code_version": __version__}
    blob = json.dumps(header, sort_keys=True).encode()
    return _HEAD.pack(MAGIC, VERSION, len(blob)) + blob + b"".join(chunks)


def loads(data: bytes) -> tuple[dict, dict[str, np.ndarray], str]:
    if len(data) < _HEAD.size:
        raise BundleError("truncated bundle")
    magic, version, n = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise BundleError("not a bundle file")
    if version != VERSION:
        raise BundleError(f"unsupported bundle version {version}")
    header = json.loads(data[_HEAD.size:_HEAD.size + n])
    base = _HEAD.size + n
    arrays = {}
    for entry in header["arrays"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(data, dt, count, base + entry["offset"])
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return header["meta"], arrays, header.get("code_version", "")


def save(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(meta, arrays))


def load(path) -> tuple[dict, dict[str, np.ndarray], str]:
    return loads(Path(path).read_bytes())
