"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    bytes 0..3    magic b"MFCP"
    bytes 4..7    format version (uint32), currently 1
    bytes 8..15   header length H (uint64)
    next H bytes  header, UTF-8 JSON
    payload       raw little-endian float32 array data, back to back
    last 32 bytes SHA-256 of everything before it

The header records `kind`, a JSON config snapshot, an `extra` dict, and an
`arrays` list of {name, shape, offset, count} entries describing the payload.
Loading verifies magic, version, and checksum; values come back in whatever
dtype the numeric core is currently set to.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .nn import tensor as T

MAGIC = b"MFCP"
FORMAT_VERSION = 1


class CheckpointError(IOError):
    pass


class VersionMismatch(CheckpointError):
    pass


class CorruptFile(CheckpointError):
    pass


def save_checkpoint(path: str | Path, kind: str, arrays: dict[str, np.ndarray],
                    config: dict, extra: dict | None = None) -> str:
    """Write a checkpoint and return its SHA-256 hex digest."""
    entries = []
    payload = bytearray()
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "offset": len(payload),
            "count": int(data.size),
        })
        payload.extend(data.tobytes())
    header = json.dumps({
        "kind": kind,
        "config": config,
        "extra": extra or {},
        "arrays": entries,
    }).encode("utf-8")
    blob = bytearray()
    blob.extend(MAGIC)
    blob.extend(struct.pack("<I", FORMAT_VERSION))
    blob.extend(struct.pack("<Q", len(header)))
    blob.extend(header)
    blob.extend(payload)
    digest = hashlib.sha256(blob).digest()
    blob.extend(digest)
    Path(path).write_bytes(blob)
    return digest.hex()


def load_checkpoint(path: str | Path, expected_kind: str | None = None):
    """Read a checkpoint; returns (kind, arrays, config, extra)."""
    blob = Path(path).read_bytes()
    if len(blob) < 48 or blob[:4] != MAGIC:
        raise CorruptFile(f"{path}: not a checkpoint file")
    version = struct.unpack_from("<I", blob, 4)[0]
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: format version {version}, this build reads version {FORMAT_VERSION}"
        )
    stored = blob[-32:]
    if hashlib.sha256(blob[:-32]).digest() != stored:
        raise CorruptFile(f"{path}: checksum mismatch (truncated or corrupted)")
    header_len = struct.unpack_from("<Q", blob, 8)[0]
    header_end = 16 + header_len
    try:
        header = json.loads(blob[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"{path}: bad header: {exc}") from None
    if expected_kind is not None and header["kind"] != expected_kind:
        raise CheckpointError(
            f"{path}: checkpoint kind {header['kind']!r}, expected {expected_kind!r}"
        )
    payload = blob[header_end:-32]
    dtype = T.get_dtype()
    arrays = {}
    for entry in header["arrays"]:
        start = entry["offset"]
        raw = np.frombuffer(payload, dtype="<f4", count=entry["count"], offset=start)
        arrays[entry["name"]] = raw.reshape(entry["shape"]).astype(dtype)
    return header["kind"], arrays, header["config"], header["extra"]


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
