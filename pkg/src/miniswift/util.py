"""Small shared helpers: content digests and atomic JSON writes."""

import json
import os

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data, h=_FNV_OFFSET):
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return h


def file_digest(path, chunk=1 << 16):
    """64-bit FNV-1a of a file's bytes as 16 hex digits."""
    h = _FNV_OFFSET
    with open(path, "rb") as f:
        while True:
            block = f.read(chunk)
            if not block:
                break
            h = fnv1a64(block, h)
    return f"{h:016x}"


def write_json(path, obj):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
    os.replace(tmp, path)
