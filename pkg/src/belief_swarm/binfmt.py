"""Self-describing binary container for named float64 arrays.

Layout: 8-byte magic, uint32 version, uint32 header length, a JSON header
(kind, free-form metadata, array names/shapes in order), then the raw
little-endian float64 payloads. No timestamps, so writes are reproducible.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"BSWARM\x00\x01"
VERSION = 1


class FormatError(ValueError):
    pass


def dump(path, kind: str, arrays: dict, meta: dict | None = None) -> None:
    names = list(arrays)
    header = {
        "kind": kind,
        "meta": meta or {},
        "arrays": [{"name": k, "shape": list(np.shape(arrays[k]))} for k in names],
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(hbytes)))
        fh.write(hbytes)
        for k in names:
            fh.write(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes())


def load(path, kind: str | None = None):
    """Return ``(arrays, meta)``; raises :class:`FormatError` on mismatch."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise FormatError(f"{path}: not a belief-swarm binary artifact")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    header = json.loads(data[16:16 + hlen])
    if kind is not None and header["kind"] != kind:
        raise FormatError(f"{path}: expected a {kind!r} artifact, found {header['kind']!r}")
    off = 16 + hlen
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(float)
        arrays[spec["name"]] = arr.reshape(shape)
        off += 8 * count
    if off != len(data):
        raise FormatError(f"{path}: trailing or missing payload bytes")
    return arrays, header["meta"]
