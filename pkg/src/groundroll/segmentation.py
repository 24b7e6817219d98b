"""Fine per-trace segmentation.

A small 1D encoder-decoder is trained on rough log-fit masks, one trace at
a time. The net sees linearly resampled power-of-two traces; predicted
masks go back to the native length by nearest neighbor and then through a
cleanup pass (longest run, minimum run length, median-smoothed onsets).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import median_filter
from sklearn.base import BaseEstimator

from . import nn
from .gathers import GroundRollMask, ShotGather
from .validation import check_in_unit_range, check_mask_matches, require

__all__ = [
    "TraceSample",
    "make_trace_training_set",
    "TraceSegmenter",
    "train_trace_unet",
    "segment_gather",
    "mask_postprocess",
]

NET_LEN = 2048
MIN_NOISE_RUN = 25
MEDIAN_WINDOW = 5


@dataclass(frozen=True)
class TraceSample:
    """One native-length trace with its rough-mask target row."""

    trace: np.ndarray   # (L,) equalized amplitudes
    target: np.ndarray  # (L,) uint8, 0 = noise, 1 = clean
    offset_m: float

    def __post_init__(self):
        tr = np.asarray(self.trace, dtype=np.float64)
        tg = np.asarray(self.target, dtype=np.uint8)
        require(tr.ndim == 1 and tr.shape == tg.shape, "trace and target lengths differ")
        require(bool(np.isin(tg, (0, 1)).all()), "target must be binary")
        object.__setattr__(self, "trace", tr)
        object.__setattr__(self, "target", tg)


def make_trace_training_set(
    gathers: Sequence[ShotGather],
    rough_masks: Sequence[GroundRollMask],
    n_traces_per_gather: int = 64,
    seed: int = 0,
) -> list[TraceSample]:
    """Draw traces uniformly with their rough-mask rows as targets.

    Uniform sampling naturally includes all-clean rows from beyond the
    fitted curve's reach, so the network sees both regimes.
    """
    require(len(gathers) > 0, "no gathers to sample from")
    require(len(gathers) == len(rough_masks), "gathers and masks differ in count")
    require(n_traces_per_gather > 0, "n_traces_per_gather must be positive")
    out: list[TraceSample] = []
    for gather, mask in zip(gathers, rough_masks):
        check_mask_matches(gather, mask)
        rng = np.random.default_rng([seed, gather.gather_id])
        rows = rng.integers(0, gather.n_traces, size=n_traces_per_gather)
        for j in rows:
            j = int(j)
            out.append(
                TraceSample(
                    trace=gather.data[j].copy(),
                    target=mask.mask[j].copy(),
                    offset_m=float(gather.offsets_m[j]),
                )
            )
    return out


class _TraceUNet(nn.Module):
    """3-level 1D U-Net: 8/16/32 channels, skip concatenations."""

    def __init__(self, rng: np.random.Generator, kernel: int = 17):
        super().__init__()
        k, p = kernel, kernel // 2
        self.enc1 = nn.Conv1d(1, 8, k, stride=1, padding=p, rng=rng)
        self.in1 = nn.InstanceNorm1d(8)
        self.enc2 = nn.Conv1d(8, 16, k, stride=2, padding=p, rng=rng)
        self.in2 = nn.InstanceNorm1d(16)
        self.enc3 = nn.Conv1d(16, 32, k, stride=2, padding=p, rng=rng)
        self.in3 = nn.InstanceNorm1d(32)
        self.dec2a = nn.Conv1d(32, 16, k, stride=1, padding=p, rng=rng)
        self.in4 = nn.InstanceNorm1d(16)
        self.dec2b = nn.Conv1d(32, 16, k, stride=1, padding=p, rng=rng)
        self.in5 = nn.InstanceNorm1d(16)
        self.dec1a = nn.Conv1d(16, 8, k, stride=1, padding=p, rng=rng)
        self.in6 = nn.InstanceNorm1d(8)
        self.dec1b = nn.Conv1d(16, 8, k, stride=1, padding=p, rng=rng)
        self.in7 = nn.InstanceNorm1d(8)
        self.head = nn.Conv1d(8, 1, 1, stride=1, padding=0, rng=rng)

    def forward(self, x: nn.Tensor) -> nn.Tensor:
        e1 = nn.leaky_relu(self.in1(self.enc1(x)), 0.2)
        e2 = nn.leaky_relu(self.in2(self.enc2(e1)), 0.2)
        e3 = nn.leaky_relu(self.in3(self.enc3(e2)), 0.2)
        u2 = nn.relu(self.in4(self.dec2a(nn.upsample1d_x2(e3))))
        u2 = nn.relu(self.in5(self.dec2b(nn.concat([u2, e2], axis=1))))
        u1 = nn.relu(self.in6(self.dec1a(nn.upsample1d_x2(u2))))
        u1 = nn.relu(self.in7(self.dec1b(nn.concat([u1, e1], axis=1))))
        out = nn.sigmoid(self.head(u1))
        b, _, length = out.data.shape
        return out.reshape((b, length))


def _resample_linear(rows: np.ndarray, new_len: int) -> np.ndarray:
    old_len = rows.shape[1]
    if old_len == new_len:
        return rows.astype(np.float64)
    src = np.arange(old_len, dtype=np.float64)
    dst = np.linspace(0.0, old_len - 1, new_len)
    return np.stack([np.interp(dst, src, r) for r in rows])


def _nearest_indices(from_len: int, to_len: int) -> np.ndarray:
    return np.round(np.linspace(0.0, from_len - 1, to_len)).astype(np.int64)


class TraceSegmenter(BaseEstimator):
    """Per-trace 1D segmentation network (0 = noise, 1 = clean).

    Traces are linearly resampled to ``net_len`` for the network; the
    thresholded mask is resampled back by nearest neighbor. Ties at 0.5
    count as clean.
    """

    def __init__(self, net_len=NET_LEN, kernel=17, n_epochs=100, batch_size=16,
                 lr=1e-3, beta1=0.9, seed=0):
        self.net_len = net_len
        self.kernel = kernel
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.lr = lr
        self.beta1 = beta1
        self.seed = seed

    def _check(self):
        require(self.net_len >= 8 and (self.net_len & (self.net_len - 1)) == 0,
                "net_len must be a power of two >= 8")

    def fit(self, X, y):
        self._check()
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        require(X.ndim == 2 and X.shape == y.shape, "X and y must be matching 2D arrays")
        if y.min() == y.max():
            raise ValueError("targets contain a single class across the whole set")
        xr = _resample_linear(X, self.net_len)
        yr = y[:, _nearest_indices(X.shape[1], self.net_len)]

        self.net_ = _TraceUNet(np.random.default_rng([self.seed, 0]), kernel=self.kernel)
        shuffle = np.random.default_rng([self.seed, 1])
        opt = nn.Adam(self.net_.parameters(), lr=self.lr, beta1=self.beta1)
        n = X.shape[0]
        self.loss_history_ = []
        for _ in range(self.n_epochs):
            order = shuffle.permutation(n)
            losses = []
            for lo in range(0, n, self.batch_size):
                idx = order[lo : lo + self.batch_size]
                xb = nn.Tensor(xr[idx][:, None, :])
                yb = nn.Tensor(yr[idx])
                loss = nn.bce(self.net_(xb), yb)
                opt.zero_grad()
                loss.backward()
                opt.step()
                losses.append(float(loss.data))
            self.loss_history_.append(float(np.mean(losses)))
        return self

    def _require_fitted(self):
        if not hasattr(self, "net_"):
            raise RuntimeError("TraceSegmenter is not fitted")

    def predict_proba(self, X) -> np.ndarray:
        """Clean probability per native sample (linear resample of net output)."""
        self._require_fitted()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None]
        xr = _resample_linear(X, self.net_len)
        p_net = np.empty_like(xr)
        with nn.no_grad():
            for lo in range(0, xr.shape[0], 64):
                xb = nn.Tensor(xr[lo : lo + 64][:, None, :])
                p_net[lo : lo + 64] = self.net_(xb).data
        return _resample_linear(p_net, X.shape[1])

    def predict(self, X) -> np.ndarray:
        """Binary rows on the native grid (threshold on the net grid first)."""
        self._require_fitted()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None]
        xr = _resample_linear(X, self.net_len)
        rows = np.empty((X.shape[0], X.shape[1]), dtype=np.uint8)
        back = _nearest_indices(self.net_len, X.shape[1])
        with nn.no_grad():
            for lo in range(0, xr.shape[0], 64):
                xb = nn.Tensor(xr[lo : lo + 64][:, None, :])
                binary = (self.net_(xb).data >= 0.5).astype(np.uint8)
                rows[lo : lo + 64] = binary[:, back]
        return rows

    def save(self, path) -> None:
        self._require_fitted()
        hyper = {"net_len": self.net_len, "kernel": self.kernel, "seed": self.seed}
        params = ((k, p.data) for k, p in self.net_.named_parameters())
        nn.save_params(path, "trace-segmenter", hyper, params)

    @classmethod
    def load(cls, path) -> "TraceSegmenter":
        arch, hyper, params = nn.load_params(path)
        if arch != "trace-segmenter":
            raise ValueError(f"blob holds a '{arch}' network, not a trace-segmenter")
        seg = cls(net_len=int(hyper["net_len"]), kernel=int(hyper["kernel"]),
                  seed=int(hyper.get("seed", 0)))
        seg.net_ = _TraceUNet(np.random.default_rng(0), kernel=seg.kernel)
        seg.net_.load_state(params)
        seg.loss_history_ = []
        return seg


def train_trace_unet(samples: Sequence[TraceSample], **params) -> TraceSegmenter:
    """Fit a TraceSegmenter on rough-mask trace samples."""
    require(len(samples) > 0, "empty training set")
    lengths = {s.trace.size for s in samples}
    require(len(lengths) == 1, f"mixed trace lengths: {sorted(lengths)}")
    X = np.stack([s.trace for s in samples])
    y = np.stack([s.target for s in samples])
    return TraceSegmenter(**params).fit(X, y)


def _noise_runs(row: np.ndarray) -> list[tuple[int, int]]:
    """Contiguous 0-runs as (start, end) inclusive."""
    noise = row == 0
    if not noise.any():
        return []
    padded = np.concatenate([[False], noise, [False]])
    edges = np.diff(padded.astype(np.int8))
    starts = np.nonzero(edges == 1)[0]
    ends = np.nonzero(edges == -1)[0] - 1
    return list(zip(starts.tolist(), ends.tolist()))


def mask_postprocess(
    raw: np.ndarray,
    min_run: int = MIN_NOISE_RUN,
    median_window: int = MEDIAN_WINDOW,
) -> GroundRollMask:
    """Clean up a raw binary mask.

    Per trace: keep only the longest contiguous noise run (ties go to the
    deeper run), drop it entirely if shorter than ``min_run``. The surviving
    onsets are median-filtered (window ``median_window``) across the affected
    traces; each trace's run then restarts at its smoothed onset. A smoothed
    onset past the run's end empties the trace to all clean.
    """
    rows = np.asarray(raw, dtype=np.uint8)
    if rows.ndim != 2:
        raise ValueError("mask must be 2D")
    require(bool(np.isin(rows, (0, 1)).all()), "mask values must be 0/1")
    n_tr, n_sm = rows.shape
    out = np.ones((n_tr, n_sm), dtype=np.uint8)
    starts = np.full(n_tr, -1, dtype=np.int64)
    ends = np.full(n_tr, -1, dtype=np.int64)
    for j in range(n_tr):
        runs = _noise_runs(rows[j])
        if not runs:
            continue
        best = max(runs, key=lambda r: (r[1] - r[0] + 1, r[0]))
        if best[1] - best[0] + 1 < min_run:
            continue
        starts[j], ends[j] = best
    affected = np.nonzero(starts >= 0)[0]
    if affected.size:
        smoothed = median_filter(starts[affected], size=median_window, mode="nearest")
        for k, j in enumerate(affected):
            lo = int(smoothed[k])
            if lo <= ends[j]:
                out[j, lo : ends[j] + 1] = 0
    return GroundRollMask(out)


def segment_gather(gather: ShotGather, segmenter: TraceSegmenter) -> GroundRollMask:
    """Predict per-trace masks for an equalized gather and post-process."""
    check_in_unit_range(gather.data, "gather data (expected equalized)")
    rows = segmenter.predict(gather.data)
    return mask_postprocess(rows)
