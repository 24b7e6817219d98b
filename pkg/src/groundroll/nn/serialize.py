"""Versioned binary blob for network parameters.

Layout, little-endian:

=================  ========  =======================================
field              type      notes
=================  ========  =======================================
magic              4 bytes   ``b"NNW1"``
version            u32       currently 1
manifest_len       u32
manifest           utf-8     JSON: arch tag, hyperparameters, and an
                             ordered list of {name, shape} entries
parameters         f64       concatenated in manifest order
=================  ========  =======================================

The manifest JSON is dumped with sorted keys and fixed separators, so
identical networks serialize to identical bytes.
"""
from __future__ import annotations

import json
import struct
from os import PathLike
from typing import BinaryIO, Union

import numpy as np

__all__ = ["BlobFormatError", "save_params", "load_params"]

MAGIC = b"NNW1"
VERSION = 1

Dest = Union[str, PathLike, BinaryIO]


class BlobFormatError(Exception):
    """Malformed or truncated parameter blob."""


def _open(dest: Dest, mode: str):
    if hasattr(dest, "read") or hasattr(dest, "write"):
        return dest, False
    return open(dest, mode), True


def save_params(dest: Dest, arch: str, hyper: dict, named_params) -> None:
    """Write parameters; ``named_params`` is an ordered [(name, ndarray)]."""
    entries = []
    blobs = []
    for name, arr in named_params:
        arr = np.asarray(arr, dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    manifest = json.dumps(
        {"arch": arch, "hyper": hyper, "params": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    fh, owned = _open(dest, "wb")
    try:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(manifest)))
        fh.write(manifest)
        for b in blobs:
            fh.write(b)
    finally:
        if owned:
            fh.close()


def load_params(src: Dest):
    """Read a blob back; returns (arch, hyper, {name: ndarray})."""
    fh, owned = _open(src, "rb")
    try:
        head = fh.read(12)
        if len(head) != 12:
            raise BlobFormatError("truncated header")
        magic, version, mlen = head[:4], *struct.unpack("<II", head[4:])
        if magic != MAGIC:
            raise BlobFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise BlobFormatError(f"unsupported version {version}")
        raw = fh.read(mlen)
        if len(raw) != mlen:
            raise BlobFormatError("truncated manifest")
        try:
            manifest = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BlobFormatError(f"unreadable manifest: {exc}") from exc
        params = {}
        for entry in manifest["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise BlobFormatError(f"truncated parameter {entry['name']!r}")
            params[entry["name"]] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
        if fh.read(1):
            raise BlobFormatError("trailing bytes after parameters")
        return manifest["arch"], manifest.get("hyper", {}), params
    finally:
        if owned:
            fh.close()
