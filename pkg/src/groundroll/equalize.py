"""Amplitude histogram equalization for signed seismic samples.

Ground roll dominates the raw amplitude distribution, so networks see it
through a monotone quantile remap: the pooled empirical CDF of the training
gathers, tabulated on a fixed number of breakpoints, mapping raw amplitude
to [0, 1]. One map is fitted per survey and applied to every gather
(including clean references and the inverse step) so all stages share a
single amplitude domain.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .gathers import GroundRollMask, ShotGather
from .validation import check_mask_matches, require

__all__ = [
    "TransferMap",
    "fit_equalization",
    "apply_equalization",
    "masked_equalize",
    "HistogramEqualizer",
]

DEFAULT_BREAKPOINTS = 4096
MIN_SIGNAL_SAMPLES = 1000


@dataclass(frozen=True)
class TransferMap:
    """Monotone piecewise-linear map raw amplitude -> quantile in [0, 1].

    ``values`` are strictly increasing amplitudes, ``quantiles`` the pooled
    empirical CDF evaluated at them (strictly increasing, last == 1.0).
    Inputs outside the fitted range clamp to the edge quantiles.
    """

    values: np.ndarray
    quantiles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        q = np.asarray(self.quantiles, dtype=np.float64)
        require(v.ndim == 1 and v.size >= 2, "transfer map needs >= 2 breakpoints")
        require(v.shape == q.shape, "values and quantiles must have equal length")
        require(bool((np.diff(v) > 0).all()), "breakpoint values must be strictly increasing")
        require(bool((np.diff(q) > 0).all()), "breakpoint quantiles must be strictly increasing")
        require(0.0 <= q[0] and q[-1] <= 1.0, "quantiles must lie in [0, 1]")
        for name, arr in (("values", v), ("quantiles", q)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_breakpoints(self) -> int:
        return int(self.values.size)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=np.float64), self.values[0], self.values[-1])
        return np.interp(x, self.values, self.quantiles)

    def invert(self, q: np.ndarray) -> np.ndarray:
        q = np.clip(np.asarray(q, dtype=np.float64), self.quantiles[0], self.quantiles[-1])
        return np.interp(q, self.quantiles, self.values)

    def to_json(self) -> str:
        return json.dumps(
            {"values": self.values.tolist(), "quantiles": self.quantiles.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "TransferMap":
        obj = json.loads(text)
        return cls(np.asarray(obj["values"]), np.asarray(obj["quantiles"]))


def _pool(gathers: Iterable) -> np.ndarray:
    chunks = []
    for g in gathers:
        data = g.data if isinstance(g, ShotGather) else np.asarray(g, dtype=np.float64)
        chunks.append(np.ravel(data))
    require(len(chunks) > 0, "need at least one gather to fit equalization")
    return np.concatenate(chunks)


def fit_equalization(gathers, n_breakpoints: int = DEFAULT_BREAKPOINTS) -> TransferMap:
    """Fit the pooled empirical-CDF transfer map.

    Breakpoints are placed at (approximately) equal probability-mass steps,
    so the tabulation error of the CDF stays below one part in
    ``n_breakpoints``. All-constant input is degenerate and rejected.
    """
    require(n_breakpoints >= 2, "n_breakpoints must be >= 2")
    pooled = _pool(gathers if isinstance(gathers, (list, tuple)) else [gathers])
    require(pooled.size >= 2, "need at least two samples to fit equalization")
    uniq, counts = np.unique(pooled, return_counts=True)
    if uniq.size < 2:
        raise ValueError("cannot equalize constant data (single unique amplitude)")
    cdf = np.cumsum(counts) / pooled.size  # right-continuous empirical CDF
    if uniq.size <= n_breakpoints:
        return TransferMap(uniq, cdf)
    levels = (np.arange(n_breakpoints) + 1) / n_breakpoints
    idx = np.searchsorted(cdf, levels, side="left")
    idx = np.unique(np.clip(idx, 0, uniq.size - 1))
    if idx[0] != 0:
        idx = np.concatenate(([0], idx))
    return TransferMap(uniq[idx], cdf[idx])


def apply_equalization(gather: ShotGather, tmap: TransferMap) -> ShotGather:
    """Equalized copy of a gather; output amplitudes lie in [0, 1]."""
    return gather.with_data(tmap.apply(gather.data))


def masked_equalize(gather: ShotGather, mask: GroundRollMask) -> ShotGather:
    """Quantile-match the noise region onto the signal region's distribution.

    Samples where mask == 1 are returned bit-identical; samples where
    mask == 0 are remapped monotonically so their empirical distribution
    matches the signal region's. An all-clean mask returns the input as is.
    """
    check_mask_matches(gather, mask)
    noise_sel = mask.mask == 0
    if not noise_sel.any():
        return gather
    signal_vals = gather.data[~noise_sel]
    require(
        signal_vals.size >= MIN_SIGNAL_SAMPLES,
        f"signal region too small to match against ({signal_vals.size} < {MIN_SIGNAL_SAMPLES})",
    )
    sig_sorted = np.sort(signal_vals)
    if sig_sorted[0] == sig_sorted[-1]:
        raise ValueError("signal region is constant; quantile matching is degenerate")
    noise_vals = gather.data[noise_sel]
    noi_sorted = np.sort(noise_vals)
    n = noise_vals.size
    # Mid-rank quantile of each noise sample within its own region: equal
    # values share a rank, so the remap is monotone and tie-consistent.
    lo = np.searchsorted(noi_sorted, noise_vals, side="left")
    hi = np.searchsorted(noi_sorted, noise_vals, side="right")
    q = (lo + hi) / (2.0 * n)
    m = sig_sorted.size
    positions = (np.arange(m) + 0.5) / m
    remapped = np.interp(q, positions, sig_sorted)
    out = gather.data.copy()
    out[noise_sel] = remapped
    result = gather.with_data(out)
    # Restore the signal samples exactly (with_data re-quantizes, which is a
    # no-op for them, but be explicit about the bit-identity contract).
    assert np.array_equal(result.data[~noise_sel], gather.data[~noise_sel])
    return result


class HistogramEqualizer(BaseEstimator, TransformerMixin):
    """Sklearn-style wrapper around the pooled transfer map.

    Parameters
    ----------
    n_breakpoints : int
        Tabulation size of the fitted CDF (default 4096).
    """

    def __init__(self, n_breakpoints: int = DEFAULT_BREAKPOINTS):
        self.n_breakpoints = n_breakpoints

    def fit(self, X, y=None):
        """Fit on a gather, a list of gathers, or raw arrays."""
        self.transfer_map_ = fit_equalization(
            X if isinstance(X, (list, tuple)) else [X], self.n_breakpoints
        )
        return self

    def _check_fitted(self):
        if not hasattr(self, "transfer_map_"):
            raise NotFittedError("HistogramEqualizer is not fitted yet, call fit first")

    def transform(self, X):
        self._check_fitted()
        if isinstance(X, ShotGather):
            return apply_equalization(X, self.transfer_map_)
        return self.transfer_map_.apply(np.asarray(X, dtype=np.float64))

    def inverse_transform(self, X):
        self._check_fitted()
        if isinstance(X, ShotGather):
            return X.with_data(self.transfer_map_.invert(X.data))
        return self.transfer_map_.invert(np.asarray(X, dtype=np.float64))
