"""Framed binary containers shared by all on-disk formats.

Layout: 4-byte magic, u16 version, u16 reserved, u32 header length, a
canonical-JSON header (sorted keys, compact separators), then raw array
blocks in the order listed under header["blocks"].  Arrays are stored
little-endian so round-trips are bit-exact across platforms.
"""

from __future__ import annotations

import json
import struct

import numpy as np

__all__ = [
    "BadMagicError",
    "VersionUnsupportedError",
    "TruncatedPayloadError",
    "write_container",
    "read_container",
    "canonical_json",
]

_PREFIX = struct.Struct("<4sHHI")

# dtypes permitted in payload blocks, by canonical little-endian tag
_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8"), "<i4": np.dtype("<i4"), "<u1": np.dtype("<u1")}


class BadMagicError(ValueError):
    """Container does not start with the expected magic bytes."""


class VersionUnsupportedError(ValueError):
    """Container version is newer than this reader understands."""


class TruncatedPayloadError(ValueError):
    """Container is shorter than its header claims."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_container(magic: bytes, version: int, header: dict, arrays: list[tuple[str, np.ndarray]]) -> bytes:
    """Serialize header metadata plus named arrays into one byte string."""
    if len(magic) != 4:
        raise ValueError("magic must be exactly 4 bytes")
    blocks = []
    payload = bytearray()
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        tag = "<" + arr.dtype.str[1:]
        if tag not in _DTYPES:
            raise ValueError(f"unsupported block dtype {arr.dtype} for {name!r}")
        arr = arr.astype(_DTYPES[tag], copy=False)
        blocks.append({"name": name, "dtype": tag, "shape": list(arr.shape)})
        payload.extend(arr.tobytes())
    full_header = dict(header)
    full_header["blocks"] = blocks
    hbytes = canonical_json(full_header).encode("utf-8")
    return _PREFIX.pack(magic, version, 0, len(hbytes)) + hbytes + bytes(payload)


def read_container(data: bytes, magic: bytes, max_version: int) -> tuple[int, dict, dict[str, np.ndarray]]:
    """Parse a container, returning (version, header, {name: array}).

    Raises BadMagicError / VersionUnsupportedError / TruncatedPayloadError
    on malformed input.
    """
    if len(data) < _PREFIX.size:
        raise TruncatedPayloadError("container shorter than its fixed prefix")
    got_magic, version, _, hlen = _PREFIX.unpack_from(data, 0)
    if got_magic != magic:
        raise BadMagicError(f"expected magic {magic!r}, got {got_magic!r}")
    if version > max_version:
        raise VersionUnsupportedError(f"version {version} unsupported (max {max_version})")
    off = _PREFIX.size
    if len(data) < off + hlen:
        raise TruncatedPayloadError("container header is truncated")
    try:
        header = json.loads(data[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TruncatedPayloadError(f"container header is not valid JSON: {e}") from e
    off += hlen
    arrays: dict[str, np.ndarray] = {}
    for blk in header.get("blocks", []):
        dt = _DTYPES[blk["dtype"]]
        shape = tuple(blk["shape"])
        nbytes = dt.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dt.itemsize
        if len(data) < off + nbytes:
            raise TruncatedPayloadError(f"payload block {blk['name']!r} is truncated")
        arrays[blk["name"]] = np.frombuffer(data[off : off + nbytes], dtype=dt).reshape(shape).copy()
        off += nbytes
    return version, header, arrays
