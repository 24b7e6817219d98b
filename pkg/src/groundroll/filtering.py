"""Conditional-adversarial filtering of the masked region.

Paired tiles (noisy input, clean reference at the same anchor) are sampled
with their centers inside the detection mask's noise region. A Pix2Pix-style
generator/patch-discriminator pair trains on them in alternating steps.
Inference runs the generator over an overlapping tile grid, blends with
Hann weights, and touches only the masked region; the surrounding samples
pass through bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import nn
from .equalize import TransferMap, masked_equalize
from .gathers import GroundRollMask, ShotGather, blend_region
from .validation import check_in_unit_range, check_mask_matches, require

__all__ = [
    "PairedTile",
    "TrainingDiverged",
    "sample_paired_tiles",
    "GroundRollFilter",
    "train_cgan",
    "apply_generator",
    "filter_pipeline",
]

DEFAULT_TILE_SIZE = 64
DEFAULT_STRIDE = 32
DOWN_FACTOR = 16  # 4 stride-2 stages in the generator


class TrainingDiverged(RuntimeError):
    """Adversarial training produced a non-finite value."""


@dataclass(frozen=True)
class PairedTile:
    """Noisy tile and its clean reference at the same anchor."""

    gather_id: int
    trace_anchor: int
    sample_anchor: int
    x: np.ndarray  # (T, T) noisy
    y: np.ndarray  # (T, T) clean reference

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        require(x.ndim == 2 and x.shape[0] == x.shape[1], "tiles must be square")
        require(x.shape == y.shape, "paired tiles must share shape")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


def sample_paired_tiles(
    noisy: ShotGather,
    clean: ShotGather,
    mask: GroundRollMask,
    tile_size: int = DEFAULT_TILE_SIZE,
    n: int = 256,
    seed: int = 0,
) -> list[PairedTile]:
    """Draw n paired tiles whose centers sit inside the noise region.

    Anchors are uniform (with replacement) over all positions where the
    tile fits in bounds and its center sample is masked as noise.
    """
    require(noisy.data.shape == clean.data.shape, "noisy and clean gathers differ in shape")
    check_mask_matches(noisy, mask)
    require(n > 0, "n must be positive")
    n_tr, n_sm = noisy.n_traces, noisy.n_samples
    require(tile_size <= min(n_tr, n_sm), "tile larger than the gather")
    half = tile_size // 2
    centers = mask.mask[half : half + (n_tr - tile_size) + 1,
                        half : half + (n_sm - tile_size) + 1]
    eligible = np.argwhere(centers == 0)
    if eligible.size == 0:
        raise ValueError("noise region too small: no tile fits with its center inside it")
    rng = np.random.default_rng([seed, noisy.gather_id])
    picks = rng.integers(0, eligible.shape[0], size=n)
    out = []
    for k in picks:
        a, s = (int(v) for v in eligible[k])
        out.append(
            PairedTile(
                gather_id=noisy.gather_id,
                trace_anchor=a,
                sample_anchor=s,
                x=noisy.data[a : a + tile_size, s : s + tile_size].copy(),
                y=clean.data[a : a + tile_size, s : s + tile_size].copy(),
            )
        )
    return out


class _PixGenerator(nn.Module):
    """Encoder-decoder with skip concatenations, tanh output mapped to [0,1]."""

    def __init__(self, rng: np.random.Generator):
        super().__init__()
        k = 4
        self.e1 = nn.Conv2d(1, 16, k, stride=2, padding=1, rng=rng)
        self.e2 = nn.Conv2d(16, 32, k, stride=2, padding=1, rng=rng)
        self.n2 = nn.InstanceNorm2d(32)
        self.e3 = nn.Conv2d(32, 64, k, stride=2, padding=1, rng=rng)
        self.n3 = nn.InstanceNorm2d(64)
        self.e4 = nn.Conv2d(64, 128, k, stride=2, padding=1, rng=rng)
        self.n4 = nn.InstanceNorm2d(128)
        self.d3 = nn.ConvTranspose2d(128, 64, k, stride=2, padding=1, rng=rng)
        self.m3 = nn.InstanceNorm2d(64)
        self.d2 = nn.ConvTranspose2d(128, 32, k, stride=2, padding=1, rng=rng)
        self.m2 = nn.InstanceNorm2d(32)
        self.d1 = nn.ConvTranspose2d(64, 16, k, stride=2, padding=1, rng=rng)
        self.m1 = nn.InstanceNorm2d(16)
        self.d0 = nn.ConvTranspose2d(32, 1, k, stride=2, padding=1, rng=rng)

    def forward(self, x: nn.Tensor) -> nn.Tensor:
        e1 = nn.leaky_relu(self.e1(x), 0.2)
        e2 = nn.leaky_relu(self.n2(self.e2(e1)), 0.2)
        e3 = nn.leaky_relu(self.n3(self.e3(e2)), 0.2)
        e4 = nn.leaky_relu(self.n4(self.e4(e3)), 0.2)
        u3 = nn.relu(self.m3(self.d3(e4)))
        u2 = nn.relu(self.m2(self.d2(nn.concat([u3, e3], axis=1))))
        u1 = nn.relu(self.m1(self.d1(nn.concat([u2, e2], axis=1))))
        out = nn.tanh(self.d0(nn.concat([u1, e1], axis=1)))
        return (out + 1.0) * 0.5


class _PatchDiscriminator(nn.Module):
    """Three stride-2 blocks then a 1x1 conv to a sigmoid patch grid."""

    def __init__(self, rng: np.random.Generator):
        super().__init__()
        k = 4
        self.c1 = nn.Conv2d(2, 16, k, stride=2, padding=1, rng=rng)
        self.c2 = nn.Conv2d(16, 32, k, stride=2, padding=1, rng=rng)
        self.n2 = nn.InstanceNorm2d(32)
        self.c3 = nn.Conv2d(32, 64, k, stride=2, padding=1, rng=rng)
        self.n3 = nn.InstanceNorm2d(64)
        self.head = nn.Conv2d(64, 1, 1, stride=1, padding=0, rng=rng)

    def forward(self, x: nn.Tensor, y: nn.Tensor) -> nn.Tensor:
        h = nn.concat([x, y], axis=1)
        h = nn.leaky_relu(self.c1(h), 0.2)
        h = nn.leaky_relu(self.n2(self.c2(h)), 0.2)
        h = nn.leaky_relu(self.n3(self.c3(h)), 0.2)
        return nn.sigmoid(self.head(h))


class GroundRollFilter(BaseEstimator):
    """Pix2Pix-style tile filter: generator plus patch discriminator.

    Training alternates one discriminator step with one generator step per
    batch; the generator step scores its fakes against the just-updated
    discriminator. Telemetry rows carry per-epoch mean losses and the mean
    discriminator probability on real pairs.
    """

    def __init__(self, tile_size=DEFAULT_TILE_SIZE, n_epochs=40, batch_size=4,
                 lr=2e-4, beta1=0.5, gan_weight=1.0, l1_weight=100.0, seed=0):
        self.tile_size = tile_size
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.lr = lr
        self.beta1 = beta1
        self.gan_weight = gan_weight
        self.l1_weight = l1_weight
        self.seed = seed

    def _check_tile_size(self, t: int):
        if t % DOWN_FACTOR != 0 or t < DOWN_FACTOR:
            raise ValueError(
                f"tile_size {t} incompatible with the architecture "
                f"(needs a multiple of {DOWN_FACTOR})"
            )

    def fit(self, pairs: Sequence[PairedTile]):
        require(len(pairs) > 0, "no paired tiles to train on")
        sizes = {p.x.shape[0] for p in pairs}
        require(sizes == {self.tile_size},
                f"pairs have tile sizes {sorted(sizes)}, expected {self.tile_size}")
        self._check_tile_size(self.tile_size)
        X = np.stack([p.x for p in pairs])[:, None, :, :]
        Y = np.stack([p.y for p in pairs])[:, None, :, :]

        self.generator_ = _PixGenerator(np.random.default_rng([self.seed, 0]))
        self.discriminator_ = _PatchDiscriminator(np.random.default_rng([self.seed, 1]))
        shuffle = np.random.default_rng([self.seed, 2])
        g_opt = nn.Adam(self.generator_.parameters(), lr=self.lr, beta1=self.beta1)
        d_opt = nn.Adam(self.discriminator_.parameters(), lr=self.lr, beta1=self.beta1)

        n = X.shape[0]
        self.telemetry_ = []
        for epoch in range(self.n_epochs):
            order = shuffle.permutation(n)
            sums = {"d_loss": 0.0, "g_gan_loss": 0.0, "g_l1_loss": 0.0, "d_real_mean": 0.0}
            n_batches = 0
            try:
                for lo in range(0, n, self.batch_size):
                    idx = order[lo : lo + self.batch_size]
                    xb, yb = nn.Tensor(X[idx]), nn.Tensor(Y[idx])

                    fake = self.generator_(xb)
                    d_real = self.discriminator_(xb, yb)
                    d_fake = self.discriminator_(xb, nn.Tensor(fake.data.copy()))
                    d_loss = nn.cgan_discriminator_loss(d_real, d_fake)
                    d_opt.zero_grad()
                    d_loss.backward()
                    d_opt.step()

                    d_fake2 = self.discriminator_(xb, fake)
                    g_gan = nn.bce(d_fake2, 1.0)
                    g_l1 = nn.l1(fake, yb)
                    g_loss = g_gan * self.gan_weight + g_l1 * self.l1_weight
                    g_opt.zero_grad()
                    d_opt.zero_grad()  # discard gradients routed through D
                    g_loss.backward()
                    g_opt.step()

                    sums["d_loss"] += float(d_loss.data)
                    sums["g_gan_loss"] += float(g_gan.data)
                    sums["g_l1_loss"] += float(g_l1.data)
                    sums["d_real_mean"] += float(d_real.data.mean())
                    n_batches += 1
            except nn.NonFiniteError as err:
                raise TrainingDiverged(
                    f"non-finite value during epoch {epoch}: {err}"
                ) from err
            row = {k: v / n_batches for k, v in sums.items()}
            row["epoch"] = epoch
            self.telemetry_.append(row)
        return self

    def _require_fitted(self):
        if not hasattr(self, "generator_"):
            raise RuntimeError("GroundRollFilter is not fitted")

    def generate(self, tiles: np.ndarray) -> np.ndarray:
        """Run the generator on (n, T, T) tiles."""
        self._require_fitted()
        tiles = np.asarray(tiles, dtype=np.float64)
        if tiles.ndim == 2:
            tiles = tiles[None]
        require(tiles.ndim == 3, "tiles must be (n, T, T)")
        require(tiles.shape[1] == self.tile_size and tiles.shape[2] == self.tile_size,
                f"tiles must be {self.tile_size}x{self.tile_size}")
        out = np.empty_like(tiles)
        with nn.no_grad():
            for lo in range(0, tiles.shape[0], 16):
                xb = nn.Tensor(tiles[lo : lo + 16][:, None, :, :])
                out[lo : lo + 16] = self.generator_(xb).data[:, 0]
        return out

    def telemetry_csv(self) -> str:
        self._require_fitted()
        lines = ["epoch,d_loss,g_gan_loss,g_l1_loss,d_real_mean"]
        for r in self.telemetry_:
            lines.append(
                f"{r['epoch']},{r['d_loss']:.6f},{r['g_gan_loss']:.6f},"
                f"{r['g_l1_loss']:.6f},{r['d_real_mean']:.6f}"
            )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        self._require_fitted()
        params = {f"g.{k}": v.data for k, v in self.generator_.named_parameters()}
        params.update(
            {f"d.{k}": v.data for k, v in self.discriminator_.named_parameters()}
        )
        hyper = {"tile_size": self.tile_size, "seed": self.seed}
        nn.save_params(path, "groundroll-cgan", hyper, params.items())

    @classmethod
    def load(cls, path) -> "GroundRollFilter":
        arch, hyper, params = nn.load_params(path)
        if arch != "groundroll-cgan":
            raise ValueError(f"blob holds a '{arch}' network, not a groundroll-cgan")
        model = cls(tile_size=int(hyper["tile_size"]), seed=int(hyper.get("seed", 0)))
        model.generator_ = _PixGenerator(np.random.default_rng(0))
        model.discriminator_ = _PatchDiscriminator(np.random.default_rng(0))
        model.generator_.load_state(
            {k[2:]: v for k, v in params.items() if k.startswith("g.")})
        model.discriminator_.load_state(
            {k[2:]: v for k, v in params.items() if k.startswith("d.")})
        model.telemetry_ = []
        return model


def train_cgan(pairs: Sequence[PairedTile], **params) -> GroundRollFilter:
    """Fit a GroundRollFilter on paired tiles."""
    require(len(pairs) > 0, "no paired tiles to train on")
    params.setdefault("tile_size", pairs[0].x.shape[0])
    return GroundRollFilter(**params).fit(pairs)


def _hann_weights(tile_size: int) -> np.ndarray:
    """Strictly positive separable Hann window (no zero edges)."""
    w = np.hanning(tile_size + 2)[1:-1]
    return np.outer(w, w)


def _cover_anchors(lo: int, hi: int, tile: int, stride: int, limit: int) -> list[int]:
    """Anchor positions so tiles of size `tile` cover [lo, hi] within [0, limit)."""
    first = min(lo, limit - tile)
    last = min(max(hi - tile + 1, first), limit - tile)
    anchors = list(range(first, last + 1, stride))
    if anchors[-1] != last:
        anchors.append(last)
    return anchors


def apply_generator(
    gather: ShotGather,
    mask: GroundRollMask,
    model: GroundRollFilter,
    stride: int = DEFAULT_STRIDE,
) -> ShotGather:
    """Filter the masked region with the generator, Hann overlap-add blended.

    Tiles on a stride grid covering the noise region's bounding box pass
    through the generator (tiles that never touch noise are skipped); their
    outputs are blended with normalized Hann weights. Samples with mask == 1
    are returned untouched.
    """
    check_in_unit_range(gather.data, "gather data (expected equalized)")
    check_mask_matches(gather, mask)
    model._require_fitted()
    require(stride > 0, "stride must be positive")
    noise = mask.mask == 0
    if not noise.any():
        return gather

    T = model.tile_size
    n_tr, n_sm = gather.n_traces, gather.n_samples
    require(T <= n_tr and T <= n_sm, "gather smaller than one tile")
    rows = np.nonzero(noise.any(axis=1))[0]
    cols = np.nonzero(noise.any(axis=0))[0]
    tr_anchors = _cover_anchors(int(rows[0]), int(rows[-1]), T, stride, n_tr)
    sm_anchors = _cover_anchors(int(cols[0]), int(cols[-1]), T, stride, n_sm)

    # integral image of the noise indicator for cheap does-this-tile-touch tests
    csum = np.zeros((n_tr + 1, n_sm + 1), dtype=np.int64)
    csum[1:, 1:] = np.cumsum(np.cumsum(noise, axis=0), axis=1)

    def touches(a, s):
        return (csum[a + T, s + T] - csum[a, s + T] - csum[a + T, s] + csum[a, s]) > 0

    anchors = [(a, s) for a in tr_anchors for s in sm_anchors if touches(a, s)]
    if not anchors:
        return gather
    tiles = np.stack([gather.data[a : a + T, s : s + T] for a, s in anchors])
    filtered_tiles = model.generate(tiles)

    w = _hann_weights(T)
    acc = np.zeros((n_tr, n_sm))
    wsum = np.zeros((n_tr, n_sm))
    for (a, s), tile in zip(anchors, filtered_tiles):
        acc[a : a + T, s : s + T] += w * tile
        wsum[a : a + T, s : s + T] += w
    covered = wsum > 0
    blended = gather.data.copy()
    blended[covered] = acc[covered] / wsum[covered]
    return blend_region(gather, gather.with_data(blended), mask)


def filter_pipeline(
    raw: ShotGather,
    mask: GroundRollMask,
    tmap: TransferMap,
    model: GroundRollFilter,
    stride: int = DEFAULT_STRIDE,
) -> ShotGather:
    """Full amplitude-domain round trip for one gather.

    equalize -> generator over the masked region -> quantile-match the
    filtered region onto the signal region -> invert the transfer map on
    the masked samples only. Samples with mask == 1 come back bit-identical
    to the raw input; an all-clean mask returns the input unchanged.
    """
    check_mask_matches(raw, mask)
    noise = mask.mask == 0
    if not noise.any():
        return raw

    equalized = raw.with_data(tmap.apply(raw.data))
    generated = apply_generator(equalized, mask, model, stride=stride)
    matched = masked_equalize(generated, mask)
    out = raw.data.copy()
    out[noise] = tmap.invert(matched.data[noise])
    result = raw.with_data(out)
    assert np.array_equal(result.data[~noise], raw.data[~noise])
    return result
