"""Self-describing checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic  b"FDABNNCK"
    4 bytes   uint32 format version (1)
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON: {"meta": {...}, "tensors": [{"name", "dtype", "shape",
              "offset", "nbytes"}, ...]}
    ...       raw tensor payloads, little-endian, C order, offsets relative
              to the end of the header
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

MAGIC = b"FDABNNCK"
VERSION = 1
_DTYPES = {"f4": "<f4", "f8": "<f8", "i8": "<i8", "u8": "<u8"}


class CheckpointError(IOError):
    pass


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray], meta: dict[str, Any] | None = None) -> None:
    entries, payloads, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        code = arr.dtype.str[1:]
        if code not in _DTYPES:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        blob = np.ascontiguousarray(arr.astype(_DTYPES[code])).tobytes()
        entries.append({"name": name, "dtype": _DTYPES[code], "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(blob)})
        payloads.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta or {}, "tensors": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for blob in payloads:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    header = json.loads(raw[20:20 + hlen].decode())
    base = 20 + hlen
    tensors = {}
    for e in header["tensors"]:
        start = base + e["offset"]
        blob = raw[start:start + e["nbytes"]]
        if len(blob) != e["nbytes"]:
            raise CheckpointError(f"{path}: truncated payload for {e['name']}")
        arr = np.frombuffer(blob, dtype=e["dtype"]).reshape(e["shape"])
        tensors[e["name"]] = arr.astype(arr.dtype.newbyteorder("="))
    return tensors, header["meta"]
