"""Input validation helpers shared across the package.

Estimators and pure functions funnel their argument checking through these
so error messages stay consistent and the checks stay cheap.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "as_float_matrix",
    "as_float_vector",
    "check_finite",
    "check_in_unit_range",
    "check_mask_matches",
    "require",
]


def require(cond: bool, message: str) -> None:
    """Raise ValueError with *message* unless *cond* holds."""
    if not cond:
        raise ValueError(message)


def as_float_matrix(a, name: str = "array") -> np.ndarray:
    """Coerce to a C-contiguous 2D float64 array, rejecting anything else."""
    out = np.ascontiguousarray(a, dtype=np.float64)
    require(out.ndim == 2, f"{name} must be 2D, got shape {out.shape}")
    require(out.size > 0, f"{name} must be non-empty")
    return out


def as_float_vector(a, name: str = "array") -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    require(out.ndim == 1, f"{name} must be 1D, got shape {out.shape}")
    require(out.size > 0, f"{name} must be non-empty")
    return out


def check_finite(a: np.ndarray, name: str = "array") -> None:
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains NaN or Inf")


def check_in_unit_range(a: np.ndarray, name: str = "array") -> None:
    """Verify amplitudes lie in [0, 1] (i.e. the data has been equalized)."""
    lo, hi = float(a.min()), float(a.max())
    require(
        lo >= 0.0 and hi <= 1.0,
        f"{name} must hold equalized amplitudes in [0, 1], got range [{lo:g}, {hi:g}]",
    )


def check_mask_matches(gather, mask, context: str = "mask") -> None:
    """Verify a mask and a gather describe the same (trace, sample) grid."""
    require(
        mask.mask.shape == gather.data.shape,
        f"{context} shape {mask.mask.shape} does not match gather shape {gather.data.shape}",
    )
