"""Binary PGM (P5) export for diagnostic images.

PGM is written rather than PNG so dumps stay dependency-free and bit-exact.
Viewers: any image tool; the format is rows of raw bytes after a text header.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .gathers import GroundRollMask, ShotGather
from .validation import require

__all__ = ["write_pgm", "gather_image", "likelihood_image", "mask_blend_image"]


def write_pgm(path, gray: np.ndarray) -> None:
    """Write a uint8 grayscale matrix as binary PGM."""
    g = np.asarray(gray)
    require(g.ndim == 2, "PGM image must be 2D")
    require(g.dtype == np.uint8, "PGM image must be uint8")
    header = f"P5\n{g.shape[1]} {g.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + g.tobytes())


def _to_u8(x: np.ndarray) -> np.ndarray:
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return np.zeros(x.shape, dtype=np.uint8)
    return np.round((x - lo) / (hi - lo) * 255.0).astype(np.uint8)


def gather_image(gather: ShotGather) -> np.ndarray:
    """Gather as grayscale, traces down, time across, min/max normalized."""
    return _to_u8(gather.data)


def likelihood_image(p: np.ndarray) -> np.ndarray:
    """Probability grid scaled to 0-255."""
    p = np.asarray(p, dtype=np.float64)
    require(bool(((p >= 0) & (p <= 1)).all()), "likelihoods must lie in [0,1]")
    return np.round(p * 255.0).astype(np.uint8)


def mask_blend_image(gather: ShotGather, mask: GroundRollMask) -> np.ndarray:
    """Gather and its mask side by side, separated by a white strip."""
    left = gather_image(gather)
    right = (np.asarray(mask.mask) * 255).astype(np.uint8)
    strip = np.full((left.shape[0], 2), 255, dtype=np.uint8)
    return np.concatenate([left, strip, right], axis=1)
