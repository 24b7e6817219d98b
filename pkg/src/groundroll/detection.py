"""Rough ground-roll detection.

Tiles are labeled by position alone: near-offset-half anchors are treated
as noisy, far-half anchors as clean. A small CNN trained on those cheap
labels scores a strided tile grid into a likelihood map, a logarithmic
curve t = a*ln(x/x_ref) + c is fit to the noise/signal transition anchors,
and the curve is rasterized into a rough suffix mask.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import nn
from .gathers import GroundRollMask, ShotGather
from .validation import check_in_unit_range, require

__all__ = [
    "TileSample",
    "LikelihoodMap",
    "LogBoundary",
    "sample_heuristic_tiles",
    "TileClassifier",
    "train_tile_classifier",
    "likelihood_map",
    "fit_log_curve",
    "fit_log_boundary",
    "rough_mask_from_boundary",
]

DEFAULT_TILE_SIZE = 64
DEFAULT_STRIDE = 32
NOISY, CLEAN = 1, 0


@dataclass(frozen=True)
class TileSample:
    """One training tile cut from an equalized gather."""

    gather_id: int
    trace_anchor: int
    sample_anchor: int
    data: np.ndarray  # (tile_size, tile_size) in [0, 1]
    label: int        # 1 = noisy, 0 = clean

    def __post_init__(self):
        require(self.label in (0, 1), "tile label must be 0 or 1")
        d = np.asarray(self.data, dtype=np.float64)
        require(d.ndim == 2 and d.shape[0] == d.shape[1], "tile must be square")
        object.__setattr__(self, "data", d)


def sample_heuristic_tiles(
    gather: ShotGather,
    tile_size: int = DEFAULT_TILE_SIZE,
    n_per_class: int = 50,
    seed: int = 0,
) -> list[TileSample]:
    """Draw position-labeled tiles: near-offset half noisy, far half clean.

    Anchors are uniform over the admissible range per class; a noisy anchor's
    trace index is < n_traces // 2, a clean anchor's is >= n_traces // 2, and
    every tile lies fully inside the gather. Labels come from position only,
    so some are wrong by construction; downstream training tolerates that.
    """
    check_in_unit_range(gather.data, "gather data (expected equalized)")
    n_tr, n_sm = gather.n_traces, gather.n_samples
    require(
        tile_size <= min(n_tr, n_sm) / 2,
        f"tile_size {tile_size} exceeds half the gather extent {min(n_tr, n_sm)}/2",
    )
    require(n_per_class > 0, "n_per_class must be positive")
    half = n_tr // 2
    require(n_tr - half >= tile_size, "far half too narrow for a full tile")
    rng = np.random.default_rng([seed, gather.gather_id])
    max_sample = n_sm - tile_size
    out: list[TileSample] = []
    for label, lo, hi in ((NOISY, 0, half - 1), (CLEAN, half, n_tr - tile_size)):
        require(hi >= lo, "gather too small for tile_size")
        tr = rng.integers(lo, hi + 1, size=n_per_class)
        sm = rng.integers(0, max_sample + 1, size=n_per_class)
        for a, s in zip(tr, sm):
            a, s = int(a), int(s)
            out.append(
                TileSample(
                    gather_id=gather.gather_id,
                    trace_anchor=a,
                    sample_anchor=s,
                    data=gather.data[a : a + tile_size, s : s + tile_size].copy(),
                    label=label,
                )
            )
    return out


class _TileNet(nn.Module):
    """3 stride-2 conv blocks, global average pool, one logit."""

    def __init__(self, rng: np.random.Generator, channels=(8, 16, 32)):
        super().__init__()
        c_in = 1
        self.blocks = []
        for i, c_out in enumerate(channels):
            conv = nn.Conv2d(c_in, c_out, 3, stride=2, padding=1, rng=rng)
            norm = nn.InstanceNorm2d(c_out)
            setattr(self, f"conv{i}", conv)
            setattr(self, f"norm{i}", norm)
            self.blocks.append((conv, norm))
            c_in = c_out
        self.head = nn.Linear(c_in, 1, rng=rng)

    def forward(self, x: nn.Tensor) -> nn.Tensor:
        h = x
        for conv, norm in self.blocks:
            h = nn.leaky_relu(norm(conv(h)), 0.2)
        pooled = h.mean(axis=3).mean(axis=2)  # (B, C)
        logit = self.head(pooled)             # (B, 1)
        return nn.sigmoid(logit.reshape((logit.data.shape[0],)))


class TileClassifier(BaseEstimator):
    """CNN scoring square tiles with a ground-roll probability.

    Parameters
    ----------
    tile_size : side length of the square input tiles.
    n_epochs, batch_size, lr, beta1 : training loop settings (Adam).
    seed : drives both weight init and epoch shuffling.
    """

    def __init__(self, tile_size=DEFAULT_TILE_SIZE, n_epochs=100, batch_size=64,
                 lr=1e-3, beta1=0.9, seed=0):
        self.tile_size = tile_size
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.lr = lr
        self.beta1 = beta1
        self.seed = seed

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        require(X.ndim == 3, "X must be (n_tiles, tile_size, tile_size)")
        require(
            X.shape[1] == self.tile_size and X.shape[2] == self.tile_size,
            f"tiles must be {self.tile_size}x{self.tile_size}, got {X.shape[1:]}",
        )
        return X

    def fit(self, X, y):
        X = self._check_X(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        require(y.size == X.shape[0], "X and y lengths differ")
        classes = np.unique(y)
        if classes.size < 2:
            raise ValueError("training tiles contain a single class; need both")
        require(set(classes) <= {0.0, 1.0}, "labels must be 0/1")

        self.net_ = _TileNet(np.random.default_rng([self.seed, 0]))
        shuffle = np.random.default_rng([self.seed, 1])
        opt = nn.Adam(self.net_.parameters(), lr=self.lr, beta1=self.beta1)
        n = X.shape[0]
        self.loss_history_ = []
        for _ in range(self.n_epochs):
            order = shuffle.permutation(n)
            losses = []
            for lo in range(0, n, self.batch_size):
                idx = order[lo : lo + self.batch_size]
                xb = nn.Tensor(X[idx][:, None, :, :])
                yb = nn.Tensor(y[idx])
                loss = nn.bce(self.net_(xb), yb)
                opt.zero_grad()
                loss.backward()
                opt.step()
                losses.append(float(loss.data))
            self.loss_history_.append(float(np.mean(losses)))
        return self

    def predict_proba(self, X) -> np.ndarray:
        self._require_fitted()
        X = self._check_X(X)
        out = np.empty(X.shape[0])
        with nn.no_grad():
            for lo in range(0, X.shape[0], 256):
                xb = nn.Tensor(X[lo : lo + 256][:, None, :, :])
                out[lo : lo + 256] = self.net_(xb).data
        return out

    def predict(self, X) -> np.ndarray:
        # ties at 0.5 count as clean
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def _require_fitted(self):
        if not hasattr(self, "net_"):
            raise RuntimeError("TileClassifier is not fitted")

    def save(self, path) -> None:
        self._require_fitted()
        hyper = {"tile_size": self.tile_size, "seed": self.seed}
        params = ((k, p.data) for k, p in self.net_.named_parameters())
        nn.save_params(path, "tile-classifier", hyper, params)

    @classmethod
    def load(cls, path) -> "TileClassifier":
        arch, hyper, params = nn.load_params(path)
        if arch != "tile-classifier":
            raise ValueError(f"blob holds a '{arch}' network, not a tile-classifier")
        clf = cls(tile_size=int(hyper["tile_size"]), seed=int(hyper.get("seed", 0)))
        clf.net_ = _TileNet(np.random.default_rng(0))
        clf.net_.load_state(params)
        clf.loss_history_ = []
        return clf


def train_tile_classifier(tiles: Sequence[TileSample], **params) -> TileClassifier:
    """Fit a TileClassifier on position-labeled tiles."""
    require(len(tiles) > 0, "no tiles to train on")
    sizes = {t.data.shape[0] for t in tiles}
    require(len(sizes) == 1, f"mixed tile sizes: {sorted(sizes)}")
    params.setdefault("tile_size", tiles[0].data.shape[0])
    X = np.stack([t.data for t in tiles])
    y = np.array([t.label for t in tiles])
    return TileClassifier(**params).fit(X, y)


@dataclass(frozen=True)
class LikelihoodMap:
    """Tile-classifier output on a regular anchor grid."""

    p: np.ndarray              # (n_trace_anchors, n_sample_anchors) in [0,1]
    trace_anchors: np.ndarray  # top-left trace index per grid row
    sample_anchors: np.ndarray
    tile_size: int
    stride: int

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        require(p.ndim == 2, "likelihood grid must be 2D")
        require(bool(((p >= 0) & (p <= 1)).all()), "likelihoods must lie in [0,1]")
        ta = np.asarray(self.trace_anchors, dtype=np.int64)
        sa = np.asarray(self.sample_anchors, dtype=np.int64)
        require(p.shape == (ta.size, sa.size), "grid shape does not match anchors")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "trace_anchors", ta)
        object.__setattr__(self, "sample_anchors", sa)


def likelihood_map(
    gather: ShotGather,
    classifier: TileClassifier,
    stride: int = DEFAULT_STRIDE,
) -> LikelihoodMap:
    """Score every tile on a stride grid covering the gather interior."""
    require(stride > 0, "stride must be positive")
    T = classifier.tile_size
    n_tr, n_sm = gather.n_traces, gather.n_samples
    require(T <= n_tr and T <= n_sm, "gather smaller than one tile")
    ta = np.arange(0, n_tr - T + 1, stride)
    sa = np.arange(0, n_sm - T + 1, stride)
    tiles = np.empty((ta.size * sa.size, T, T))
    k = 0
    for a in ta:
        for s in sa:
            tiles[k] = gather.data[a : a + T, s : s + T]
            k += 1
    p = classifier.predict_proba(tiles).reshape(ta.size, sa.size)
    return LikelihoodMap(p=p, trace_anchors=ta, sample_anchors=sa,
                         tile_size=T, stride=stride)


@dataclass(frozen=True)
class LogBoundary:
    """t_b(x) = a * ln(x / x_ref) + c, valid for offsets up to x_max."""

    a: float
    c: float
    x_ref_m: float
    x_max_m: float
    residual_rms: float = 0.0

    def __post_init__(self):
        require(math.isfinite(self.a), "coefficient a must be finite")
        require(math.isfinite(self.c), "coefficient c must be finite")
        require(self.x_ref_m > 0, "x_ref must be positive")

    def boundary_times(self, offsets_m: np.ndarray, trace_len_s: float) -> np.ndarray:
        """Evaluate t_b, clamped to [0, trace_len]."""
        x = np.asarray(offsets_m, dtype=np.float64)
        t = self.a * np.log(x / self.x_ref_m) + self.c
        return np.clip(t, 0.0, trace_len_s)

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "c": self.c,
            "x_ref_m": self.x_ref_m,
            "x_max_m": self.x_max_m,
            "residual_rms": self.residual_rms,
        }


def fit_log_curve(
    offsets_m: np.ndarray, times_s: np.ndarray, x_ref_m: float
) -> tuple[float, float, float]:
    """Least-squares a, c for t = a*ln(x/x_ref) + c; returns residual RMS too."""
    x = np.asarray(offsets_m, dtype=np.float64)
    t = np.asarray(times_s, dtype=np.float64)
    require(x.ndim == 1 and x.shape == t.shape, "offsets and times must match")
    if x.size < 3:
        raise ValueError(f"need at least 3 boundary points, got {x.size}")
    require(bool((x > 0).all()), "offsets must be positive")
    u = np.log(x / x_ref_m)
    if np.unique(u).size < 2:
        raise ValueError("degenerate fit: all boundary points share one offset")
    design = np.stack([u, np.ones_like(u)], axis=1)
    coef, *_ = np.linalg.lstsq(design, t, rcond=None)
    a, c = float(coef[0]), float(coef[1])
    resid = t - (a * u + c)
    return a, c, float(np.sqrt(np.mean(resid**2)))


def fit_log_boundary(
    lmap: LikelihoodMap,
    gather: ShotGather,
    p_thresh: float = 0.5,
) -> LogBoundary:
    """Fit the log curve to noise/signal transition anchors of the map.

    Per grid column (one trace anchor): take the contiguous run of
    p > p_thresh that sits deepest in the record, and use its first firing
    anchor as that column's boundary point. The tile classifier reports
    majority content, so a column's firing time describes its center trace;
    the point's offset coordinate is the column's center. x_max is the
    largest offset any firing column covers, i.e. the last trace its tiles
    span.
    """
    fire = lmap.p > p_thresh  # ties count as clean
    n_tr = gather.n_traces
    xs, ts = [], []
    x_max = None
    for i in range(lmap.trace_anchors.size):
        row = fire[i]
        if not row.any():
            continue
        idx = np.nonzero(row)[0]
        # first index of the deepest (last) contiguous run
        breaks = np.nonzero(np.diff(idx) > 1)[0]
        run_start = idx[breaks[-1] + 1] if breaks.size else idx[0]
        anchor = int(lmap.trace_anchors[i])
        center = min(anchor + lmap.tile_size // 2, n_tr - 1)
        xs.append(float(gather.offsets_m[center]))
        ts.append(float(lmap.sample_anchors[run_start]) * gather.dt_s)
        last = min(anchor + lmap.tile_size - 1, n_tr - 1)
        x_max = float(gather.offsets_m[last])
    if len(xs) < 3:
        raise ValueError(f"need at least 3 boundary points, got {len(xs)}")
    x_ref = float(gather.offsets_m[0])
    a, c, rms = fit_log_curve(np.array(xs), np.array(ts), x_ref)
    return LogBoundary(a=a, c=c, x_ref_m=x_ref, x_max_m=x_max, residual_rms=rms)


def rough_mask_from_boundary(boundary: LogBoundary, gather: ShotGather) -> GroundRollMask:
    """Rasterize the boundary curve into a suffix mask.

    For offsets <= x_max a sample is noise iff its time is >= t_b(offset);
    traces farther out are all clean.
    """
    n_sm = gather.n_samples
    trace_len = n_sm * gather.dt_s
    tb = boundary.boundary_times(gather.offsets_m, trace_len)
    indices = np.full(gather.n_traces, n_sm, dtype=np.int64)  # default all clean
    inside = gather.offsets_m <= boundary.x_max_m
    first_noise = np.ceil(tb / gather.dt_s - 1e-9).astype(np.int64)
    indices[inside] = np.clip(first_noise[inside], 0, n_sm)
    return GroundRollMask.from_boundary_indices(indices, n_sm, curve=boundary)
