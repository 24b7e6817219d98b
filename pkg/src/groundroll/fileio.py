"""Binary file formats for gathers and masks.

Gather files (magic ``SGR1``), little-endian throughout:

====================  =======  ========================================
field                 type     notes
====================  =======  ========================================
magic                 4 bytes  ``b"SGR1"``
n_traces              u32
n_samples             u32
dt_us                 u32      sample interval in microseconds
gather_id             u64
offsets_m             f64 * n_traces
data                  f32 * (n_traces * n_samples), trace-major
====================  =======  ========================================

Mask files (magic ``SGM1``) share the 24-byte header layout and carry one
u8 per sample (0 = ground roll, 1 = clean), trace-major. Write then read
is bit-exact; truncated or malformed input raises :class:`FormatError`.
"""
from __future__ import annotations

import io
import struct
from os import PathLike
from typing import BinaryIO, Union

import numpy as np

from .gathers import GroundRollMask, ShotGather

__all__ = [
    "FormatError",
    "GATHER_MAGIC",
    "MASK_MAGIC",
    "read_gather",
    "read_mask",
    "write_gather",
    "write_mask",
]

GATHER_MAGIC = b"SGR1"
MASK_MAGIC = b"SGM1"

_HEADER = struct.Struct("<4sIIIQ")

Dest = Union[str, PathLike, BinaryIO]


class FormatError(Exception):
    """Malformed, truncated, or wrong-magic input."""


def _dt_to_us(dt_s: float) -> int:
    dt_us = round(dt_s * 1e6)
    if dt_us <= 0 or abs(dt_us - dt_s * 1e6) > 1e-6:
        raise ValueError(
            f"dt_s {dt_s!r} is not representable as a whole number of microseconds"
        )
    return int(dt_us)


def _open(dest: Dest, mode: str):
    if hasattr(dest, "read") or hasattr(dest, "write"):
        return dest, False
    return open(dest, mode), True


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: expected {n} bytes of {what}, got {len(buf)}")
    return buf


def write_gather(gather: ShotGather, dest: Dest) -> None:
    """Serialize a gather. Offsets keep full f64; samples are stored f32."""
    fh, owned = _open(dest, "wb")
    try:
        fh.write(
            _HEADER.pack(
                GATHER_MAGIC,
                gather.n_traces,
                gather.n_samples,
                _dt_to_us(gather.dt_s),
                gather.gather_id,
            )
        )
        fh.write(gather.offsets_m.astype("<f8").tobytes())
        fh.write(gather.data.astype("<f4").tobytes())
    finally:
        if owned:
            fh.close()


def read_gather(source: Dest) -> ShotGather:
    fh, owned = _open(source, "rb")
    try:
        magic, n_traces, n_samples, dt_us, gather_id = _HEADER.unpack(
            _read_exact(fh, _HEADER.size, "header")
        )
        if magic != GATHER_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {GATHER_MAGIC!r}")
        if n_traces == 0 or n_samples == 0:
            raise FormatError("header declares an empty gather")
        offsets = np.frombuffer(
            _read_exact(fh, 8 * n_traces, "offsets"), dtype="<f8"
        ).astype(np.float64)
        data = np.frombuffer(
            _read_exact(fh, 4 * n_traces * n_samples, "samples"), dtype="<f4"
        ).astype(np.float64)
        trailing = fh.read(1)
        if trailing:
            raise FormatError("trailing bytes after sample data")
        try:
            return ShotGather(
                gather_id=int(gather_id),
                dt_s=dt_us / 1e6,
                offsets_m=offsets,
                data=data.reshape(n_traces, n_samples),
            )
        except ValueError as exc:
            raise FormatError(f"file contents violate gather invariants: {exc}") from exc
    finally:
        if owned:
            fh.close()


def write_mask(mask: GroundRollMask, dest: Dest, dt_s: float = 0.002, gather_id: int = 0) -> None:
    fh, owned = _open(dest, "wb")
    try:
        fh.write(
            _HEADER.pack(
                MASK_MAGIC,
                mask.n_traces,
                mask.n_samples,
                _dt_to_us(dt_s),
                int(gather_id),
            )
        )
        fh.write(mask.mask.tobytes())
    finally:
        if owned:
            fh.close()


def read_mask(source: Dest) -> GroundRollMask:
    fh, owned = _open(source, "rb")
    try:
        magic, n_traces, n_samples, _dt_us, _gid = _HEADER.unpack(
            _read_exact(fh, _HEADER.size, "header")
        )
        if magic != MASK_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MASK_MAGIC!r}")
        if n_traces == 0 or n_samples == 0:
            raise FormatError("header declares an empty mask")
        raw = np.frombuffer(
            _read_exact(fh, n_traces * n_samples, "mask bytes"), dtype=np.uint8
        )
        trailing = fh.read(1)
        if trailing:
            raise FormatError("trailing bytes after mask data")
        if not np.isin(raw, (0, 1)).all():
            raise FormatError("mask bytes must be 0 or 1")
        return GroundRollMask(raw.reshape(n_traces, n_samples).copy())
    finally:
        if owned:
            fh.close()


def gather_bytes(gather: ShotGather) -> bytes:
    """Convenience: the exact byte serialization of a gather."""
    buf = io.BytesIO()
    write_gather(gather, buf)
    return buf.getvalue()
