"""Shot-gather data model shared by every pipeline stage.

A gather is a 2D amplitude panel indexed (trace, sample) with per-trace
source-receiver offsets. Masks mark ground-roll samples with 0 and clean
samples with 1. All containers are immutable after construction; their
arrays are flagged read-only, and every accessor that hands data out for
mutation returns a copy.

Amplitudes are quantized through float32 on construction (the precision the
disk format carries) but stored and processed as float64, so writing a
gather to disk and reading it back reproduces the in-memory values exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .validation import require

__all__ = [
    "ShotGather",
    "GroundRollMask",
    "TraceWindow",
    "extract_window",
    "blend_region",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TraceWindow:
    """Inclusive (trace, sample) index ranges selecting a sub-rectangle."""

    trace_lo: int
    trace_hi: int
    sample_lo: int
    sample_hi: int

    def __post_init__(self):
        require(
            0 <= self.trace_lo <= self.trace_hi,
            f"trace range [{self.trace_lo}, {self.trace_hi}] is not ordered",
        )
        require(
            0 <= self.sample_lo <= self.sample_hi,
            f"sample range [{self.sample_lo}, {self.sample_hi}] is not ordered",
        )

    @property
    def n_traces(self) -> int:
        return self.trace_hi - self.trace_lo + 1

    @property
    def n_samples(self) -> int:
        return self.sample_hi - self.sample_lo + 1

    @property
    def area(self) -> int:
        return self.n_traces * self.n_samples


@dataclass(frozen=True, eq=False)
class ShotGather:
    """One shot record: (n_traces, n_samples) amplitudes plus geometry.

    Parameters
    ----------
    gather_id : int
        Non-negative identifier, unique within a survey.
    dt_s : float
        Sample interval in seconds (default 0.002).
    offsets_m : ndarray
        Per-trace source-receiver offset in metres, strictly increasing, > 0.
    data : ndarray
        Amplitudes, shape (n_traces, n_samples), float64, all finite.
    """

    gather_id: int
    dt_s: float
    offsets_m: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        require(int(self.gather_id) >= 0, "gather_id must be non-negative")
        object.__setattr__(self, "gather_id", int(self.gather_id))
        require(float(self.dt_s) > 0.0, "dt_s must be positive")
        object.__setattr__(self, "dt_s", float(self.dt_s))

        data = np.asarray(self.data, dtype=np.float64)
        require(data.ndim == 2, f"data must be 2D, got shape {data.shape}")
        require(data.shape[0] > 0 and data.shape[1] > 0, "data must be non-empty")
        if not np.isfinite(data).all():
            raise ValueError("gather data contains NaN or Inf")
        # Quantize through the on-disk sample precision so IO is lossless.
        data = data.astype(np.float32).astype(np.float64)
        object.__setattr__(self, "data", _freeze(data))

        offs = np.asarray(self.offsets_m, dtype=np.float64).ravel()
        require(
            offs.shape[0] == data.shape[0],
            f"offsets length {offs.shape[0]} != n_traces {data.shape[0]}",
        )
        if not np.isfinite(offs).all():
            raise ValueError("offsets contain NaN or Inf")
        require(bool((offs > 0).all()), "offsets must be positive")
        require(bool((np.diff(offs) > 0).all()), "offsets must be strictly increasing")
        object.__setattr__(self, "offsets_m", _freeze(offs))

    @property
    def n_traces(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def times_s(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt_s

    def with_data(self, data: np.ndarray) -> "ShotGather":
        """New gather with the same identity/geometry and different samples."""
        return ShotGather(self.gather_id, self.dt_s, self.offsets_m.copy(), data)

    def __eq__(self, other):
        if not isinstance(other, ShotGather):
            return NotImplemented
        return (
            self.gather_id == other.gather_id
            and self.dt_s == other.dt_s
            and np.array_equal(self.offsets_m, other.offsets_m)
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class GroundRollMask:
    """Binary noise indicator per (trace, sample): 0 = ground roll, 1 = clean.

    The per-trace boundary is derived, not stored: a trace reports a boundary
    index only when its noise samples form a contiguous run reaching the end
    of the trace, so "mask == 0 iff sample >= boundary" holds wherever a
    boundary is reported. `noise_onsets` gives the first noise sample of any
    affected trace regardless of run shape.
    """

    mask: np.ndarray
    curve: Optional[object] = field(default=None, compare=False)

    def __post_init__(self):
        m = np.asarray(self.mask)
        require(m.ndim == 2, f"mask must be 2D, got shape {m.shape}")
        require(m.size > 0, "mask must be non-empty")
        vals = np.unique(m)
        require(
            bool(np.isin(vals, (0, 1)).all()),
            f"mask values must be 0 or 1, got {vals[:8]}",
        )
        object.__setattr__(self, "mask", _freeze(m.astype(np.uint8)))

    @classmethod
    def from_boundary_indices(cls, indices, n_samples: int, curve=None) -> "GroundRollMask":
        """Suffix mask from per-trace first-noise indices; index >= n_samples
        (or < 0 treated as n_samples) means the trace is unaffected."""
        idx = np.asarray(indices, dtype=np.int64).copy()
        require(idx.ndim == 1 and idx.size > 0, "indices must be a non-empty 1D array")
        require(int(n_samples) > 0, "n_samples must be positive")
        idx[idx < 0] = n_samples
        idx = np.minimum(idx, n_samples)
        cols = np.arange(n_samples)[None, :]
        m = (cols < idx[:, None]).astype(np.uint8)
        return cls(m, curve=curve)

    @property
    def n_traces(self) -> int:
        return self.mask.shape[0]

    @property
    def n_samples(self) -> int:
        return self.mask.shape[1]

    def noise_onsets(self) -> np.ndarray:
        """First noise sample per trace, -1 for traces with no noise."""
        has_noise = (self.mask == 0).any(axis=1)
        first = np.argmax(self.mask == 0, axis=1)
        return np.where(has_noise, first, -1).astype(np.int64)

    @property
    def boundary(self) -> np.ndarray:
        """Per-trace boundary index, -1 where absent or not suffix-shaped."""
        onsets = self.noise_onsets()
        n = self.n_samples
        out = np.full(self.n_traces, -1, dtype=np.int64)
        for j in range(self.n_traces):
            o = onsets[j]
            if o < 0:
                continue
            if not self.mask[j, o:].any():  # noise runs to the trace end
                out[j] = o
        return out

    def noise_fraction(self) -> float:
        return float((self.mask == 0).mean())

    def __eq__(self, other):
        if not isinstance(other, GroundRollMask):
            return NotImplemented
        return np.array_equal(self.mask, other.mask)


def extract_window(gather: ShotGather, window: TraceWindow) -> np.ndarray:
    """Copy out the sub-rectangle a window selects. Never aliases."""
    require(
        window.trace_hi < gather.n_traces,
        f"window trace_hi {window.trace_hi} out of range for {gather.n_traces} traces",
    )
    require(
        window.sample_hi < gather.n_samples,
        f"window sample_hi {window.sample_hi} out of range for {gather.n_samples} samples",
    )
    return gather.data[
        window.trace_lo : window.trace_hi + 1,
        window.sample_lo : window.sample_hi + 1,
    ].copy()


def blend_region(base: ShotGather, patch: ShotGather, mask: GroundRollMask) -> ShotGather:
    """Merge two co-registered gathers: patch where mask == 0, base elsewhere."""
    require(
        base.data.shape == patch.data.shape == mask.mask.shape,
        "base, patch and mask must share dimensions, got "
        f"{base.data.shape}, {patch.data.shape}, {mask.mask.shape}",
    )
    out = np.where(mask.mask == 0, patch.data, base.data)
    return base.with_data(out)
