"""Versioned checkpoint container.

Layout: a one-line magic string, an 8-byte little-endian length, a UTF-8 JSON
header (free-form metadata plus an array manifest), then the named arrays
concatenated as little-endian float32. Array order is sorted by name so
identical contents produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PHONOLID-CKPT v1\n"


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    names = sorted(arrays)
    manifest = []
    blobs = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"version": 1, "meta": meta, "arrays": manifest}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != 1:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        payload = fh.read()
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        raw = payload[start : start + 4 * count]
        if len(raw) != 4 * count:
            raise ValueError(f"{path}: truncated array {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
    return arrays, header["meta"]
