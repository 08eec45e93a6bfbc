"""Single-file binary checkpoints with integrity checking.

Layout: 8-byte magic, u32 little-endian header length, JSON header
(format version, array directory, JSON-able metadata), raw little-endian
array payload, SHA-256 digest over everything before it. Writes go to a
temp file renamed into place, so a checkpoint is either complete and
self-consistent or absent.
"""

import hashlib
import json
import os
import struct

import numpy as np

MAGIC = b"SADQCKPT"
FORMAT_VERSION = 1


class CorruptChecksum(RuntimeError):
    """File is truncated, tampered with, or not a checkpoint at all."""


class VersionMismatch(RuntimeError):
    """Checkpoint written by an incompatible format version."""


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": list(obj.shape), "dtype": obj.dtype.str,
                "data": obj.ravel().tolist()}
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["data"],
                            dtype=np.dtype(obj["dtype"])).reshape(
                                obj["__ndarray__"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_from_jsonable(v) for v in obj]
    return obj


def save_checkpoint(path, arrays, meta):
    """Write arrays (name -> ndarray) plus metadata atomically to path."""
    directory = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        blob = arr.tobytes()
        directory.append({"name": name, "dtype": arr.dtype.str,
                          "shape": list(arr.shape), "offset": offset,
                          "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"version": FORMAT_VERSION, "arrays": directory,
                         "meta": _jsonable(meta)}).encode()
    body = MAGIC + struct.pack("<I", len(header)) + header + b"".join(blobs)
    digest = hashlib.sha256(body).digest()
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(body)
        fh.write(digest)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_checkpoint(path):
    """Read a checkpoint, returning (arrays, meta). Verifies the digest."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 4 + 32:
        raise CorruptChecksum(f"{path}: file too short to be a checkpoint")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptChecksum(f"{path}: SHA-256 digest mismatch")
    if body[:len(MAGIC)] != MAGIC:
        raise CorruptChecksum(f"{path}: bad magic")
    (hlen,) = struct.unpack("<I", body[len(MAGIC):len(MAGIC) + 4])
    header_start = len(MAGIC) + 4
    header = json.loads(body[header_start:header_start + hlen])
    if header["version"] != FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: format version {header['version']}, "
            f"expected {FORMAT_VERSION}")
    payload = body[header_start + hlen:]
    arrays = {}
    for entry in header["arrays"]:
        start, n = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(payload[start:start + n],
                            dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return arrays, _from_jsonable(header["meta"])
