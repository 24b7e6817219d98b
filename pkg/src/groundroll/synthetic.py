"""Synthetic shot gathers with known ground-roll ground truth.

Clean signal: Ricker wavelets on hyperbolic reflection moveout
``t(x) = sqrt(t0^2 + (x / v_nmo)^2)`` with 1/sqrt(t) spreading decay, plus
band-limited Gaussian background noise. Ground roll: a dispersive fan of
tapered sinusoids, low frequency, high amplitude, slow, confined to near
offsets. The truth mask thresholds the ground-roll envelope against the
clean-gather RMS, so every generated gather ships with an exact answer key.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.ndimage import maximum_filter1d

from .gathers import GroundRollMask, ShotGather
from .validation import require

__all__ = [
    "Reflection",
    "GroundRollBand",
    "GeologyConfig",
    "GatherTriple",
    "SurveySplit",
    "ricker",
    "make_gather",
    "make_survey",
]

MASK_THRESHOLD = 2.0  # envelope-over-RMS factor defining "affected"


@dataclass(frozen=True)
class Reflection:
    """One reflection event on hyperbolic moveout."""

    t0_s: float
    v_nmo_mps: float
    amplitude: float
    ricker_f_hz: float

    def __post_init__(self):
        require(self.t0_s > 0, "reflection t0_s must be positive")
        require(self.v_nmo_mps > 0, "reflection v_nmo_mps must be positive")
        require(self.ricker_f_hz > 0, "reflection ricker_f_hz must be positive")


N_GROUNDROLL_COMPONENTS = 12


@dataclass(frozen=True)
class GroundRollBand:
    """Dispersive ground-roll description.

    Component frequencies are drawn from [f_lo_hz, f_hi_hz]; group velocity
    falls linearly from v_hi_mps at f_lo_hz to v_lo_mps at f_hi_hz (low
    frequencies travel fastest). Amplitude is amplitude_ratio times the
    clean reflection peak, cosine-tapered over the final taper_m metres so
    it vanishes at max_offset_m and stays zero beyond.
    """

    f_lo_hz: float
    f_hi_hz: float
    v_lo_mps: float
    v_hi_mps: float
    amplitude_ratio: float
    max_offset_m: float
    taper_m: float = 100.0

    def __post_init__(self):
        require(3.0 <= self.f_lo_hz < self.f_hi_hz <= 30.0,
                "ground-roll band must satisfy 3 <= f_lo < f_hi <= 30 Hz")
        require(0 < self.v_lo_mps < self.v_hi_mps,
                "ground-roll velocities must satisfy 0 < v_lo < v_hi")
        require(self.amplitude_ratio == 0.0 or self.amplitude_ratio > 1.0,
                "amplitude_ratio must be 0 (disabled) or > 1")
        require(self.max_offset_m > 0, "max_offset_m must be positive")
        require(self.taper_m >= 0, "taper_m must be non-negative")

    def velocity_at(self, f_hz: np.ndarray) -> np.ndarray:
        frac = (f_hz - self.f_lo_hz) / (self.f_hi_hz - self.f_lo_hz)
        return self.v_hi_mps + frac * (self.v_lo_mps - self.v_hi_mps)


@dataclass(frozen=True)
class GeologyConfig:
    """Everything needed to synthesize one geology's gathers."""

    n_traces: int
    reflections: tuple
    groundroll: GroundRollBand
    offset_min_m: float = 50.0
    offset_spacing_m: float = 50.0
    trace_len_s: float = 6.0
    dt_s: float = 0.002
    noise_rms: float = 0.0
    seed: int = 0

    def __post_init__(self):
        require(self.n_traces >= 2, "n_traces must be >= 2")
        require(self.offset_min_m > 0, "offset_min_m must be positive")
        require(self.offset_spacing_m > 0, "offset_spacing_m must be positive")
        require(self.dt_s > 0, "dt_s must be positive")
        n = self.trace_len_s / self.dt_s
        require(abs(n - round(n)) < 1e-9 and round(n) >= 2,
                f"trace_len_s {self.trace_len_s} must be a multiple of dt_s {self.dt_s}")
        require(len(self.reflections) >= 1, "at least one reflection event required")
        require(self.noise_rms >= 0, "noise_rms must be non-negative")
        object.__setattr__(self, "reflections", tuple(self.reflections))

    @property
    def n_samples(self) -> int:
        return int(round(self.trace_len_s / self.dt_s))

    @property
    def offsets_m(self) -> np.ndarray:
        return self.offset_min_m + self.offset_spacing_m * np.arange(self.n_traces)


@dataclass(frozen=True)
class GatherTriple:
    clean: ShotGather
    noisy: ShotGather
    truth: GroundRollMask


@dataclass(frozen=True)
class SurveySplit:
    gathers: tuple
    train_ids: tuple
    test_ids: tuple


def ricker(tau_s: np.ndarray, f_hz: float) -> np.ndarray:
    """Ricker wavelet centered at tau = 0."""
    a = (np.pi * f_hz * tau_s) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def _reflection_field(cfg: GeologyConfig) -> np.ndarray:
    offsets = cfg.offsets_m
    times = np.arange(cfg.n_samples) * cfg.dt_s
    out = np.zeros((cfg.n_traces, cfg.n_samples))
    for ev in cfg.reflections:
        t_x = np.sqrt(ev.t0_s**2 + (offsets / ev.v_nmo_mps) ** 2)
        amp = ev.amplitude / np.sqrt(np.maximum(t_x, ev.t0_s))
        out += amp[:, None] * ricker(times[None, :] - t_x[:, None], ev.ricker_f_hz)
    return out


def _background_noise(cfg: GeologyConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.noise_rms == 0.0:
        return np.zeros((cfg.n_traces, cfg.n_samples))
    raw = rng.standard_normal((cfg.n_traces, cfg.n_samples))
    spec = np.fft.rfft(raw, axis=1)
    freqs = np.fft.rfftfreq(cfg.n_samples, cfg.dt_s)
    spec[:, freqs > 125.0] = 0.0
    shaped = np.fft.irfft(spec, n=cfg.n_samples, axis=1)
    rms = np.sqrt(np.mean(shaped**2))
    return shaped * (cfg.noise_rms / rms)


def _offset_taper(offsets: np.ndarray, band: GroundRollBand) -> np.ndarray:
    taper = np.ones_like(offsets)
    if band.taper_m > 0:
        ramp = (offsets - (band.max_offset_m - band.taper_m)) / band.taper_m
        in_ramp = (ramp > 0) & (ramp < 1)
        taper[in_ramp] = np.cos(0.5 * np.pi * ramp[in_ramp]) ** 2
    taper[offsets >= band.max_offset_m] = 0.0
    return taper


def _groundroll_field(cfg: GeologyConfig, refl_peak: float, rng: np.random.Generator) -> np.ndarray:
    band = cfg.groundroll
    out = np.zeros((cfg.n_traces, cfg.n_samples))
    if band.amplitude_ratio == 0.0:
        return out
    offsets = cfg.offsets_m
    times = np.arange(cfg.n_samples) * cfg.dt_s
    amp = band.amplitude_ratio * refl_peak * _offset_taper(offsets, band)
    freqs = rng.uniform(band.f_lo_hz, band.f_hi_hz, size=N_GROUNDROLL_COMPONENTS)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=N_GROUNDROLL_COMPONENTS)
    vels = band.velocity_at(freqs)
    for f_k, v_k, phi in zip(freqs, vels, phases):
        arrivals = offsets / v_k
        dur = 3.0 / f_k
        tau = times[None, :] - arrivals[:, None]
        inside = (tau >= 0.0) & (tau <= dur)
        # |sin| window: smooth at both ends but with a fast attack, so a
        # packet's leading edge is audible within a few samples of arrival.
        env = np.where(inside, np.abs(np.sin(np.pi * np.clip(tau, 0.0, dur) / dur)), 0.0)
        out += amp[:, None] * env * np.sin(2.0 * np.pi * f_k * tau + phi)
    return out


def _truth_mask(gr_field: np.ndarray, clean: np.ndarray, f_lo_hz: float, dt_s: float) -> np.ndarray:
    if not gr_field.any():
        return np.ones(gr_field.shape, dtype=np.uint8)
    # Local envelope: peak-hold over roughly one period of the slowest
    # component, so the mask does not flicker between oscillation peaks but
    # stays zero outside the wave packet's support. The window covers past
    # samples only; a centered window would mark samples noisy half a period
    # before any energy arrives.
    win = max(3, int(round(1.0 / f_lo_hz / dt_s)) | 1)
    envelope = maximum_filter1d(
        np.abs(gr_field), size=win, axis=1, mode="nearest", origin=(win - 1) // 2
    )
    rms = np.sqrt(np.mean(clean**2))
    return (envelope <= MASK_THRESHOLD * rms).astype(np.uint8)


def make_gather(cfg: GeologyConfig, gather_id: int) -> GatherTriple:
    """Deterministically synthesize one (clean, noisy, truth) triple.

    The random stream is keyed on (cfg.seed, gather_id), so the same
    config and id always reproduce the same gather.
    """
    require(gather_id >= 0, "gather_id must be non-negative")
    rng = np.random.default_rng([cfg.seed, gather_id])
    refl = _reflection_field(cfg)
    refl_peak = float(np.abs(refl).max())
    noise = _background_noise(cfg, rng)
    gr = _groundroll_field(cfg, refl_peak, rng)
    clean_data = refl + noise

    clean = ShotGather(gather_id, cfg.dt_s, cfg.offsets_m, clean_data)
    # Build the noisy gather from the quantized clean samples so that
    # (noisy - clean) is exactly the injected ground roll downstream.
    noisy = ShotGather(gather_id, cfg.dt_s, cfg.offsets_m, clean.data + gr)
    truth = GroundRollMask(_truth_mask(gr, clean_data, cfg.groundroll.f_lo_hz, cfg.dt_s))
    return GatherTriple(clean=clean, noisy=noisy, truth=truth)


def perturb_reflections(
    cfg: GeologyConfig,
    rng: np.random.Generator,
    t0_jitter: float = 0.05,
    v_jitter: float = 0.0,
    amp_jitter: float = 0.0,
) -> GeologyConfig:
    """Config copy with reflection geometry jittered multiplicatively."""
    events = []
    for ev in cfg.reflections:
        events.append(
            Reflection(
                t0_s=ev.t0_s * (1.0 + rng.uniform(-t0_jitter, t0_jitter)),
                v_nmo_mps=ev.v_nmo_mps * (1.0 + rng.uniform(-v_jitter, v_jitter)),
                amplitude=ev.amplitude * (1.0 + rng.uniform(-amp_jitter, amp_jitter)),
                ricker_f_hz=ev.ricker_f_hz,
            )
        )
    return replace(cfg, reflections=tuple(events))


N_TRAIN_GATHERS = 5


def make_survey(cfg: GeologyConfig, n_gathers: int, seed: int) -> SurveySplit:
    """Generate a survey of gathers with a fixed 5-train / rest-test split.

    Each gather gets its reflection arrival times jittered by up to +/-5%
    (stream keyed on (seed, gather_id, 1)) so the survey is not one gather
    repeated; the gather fields themselves are keyed on (seed, gather_id).
    """
    require(n_gathers >= N_TRAIN_GATHERS + 1,
            f"n_gathers must be >= {N_TRAIN_GATHERS + 1} to leave a test split")
    triples = []
    for gid in range(n_gathers):
        jrng = np.random.default_rng([seed, gid, 1])
        cfg_g = replace(perturb_reflections(cfg, jrng, t0_jitter=0.05), seed=seed)
        triples.append(make_gather(cfg_g, gid))
    train_ids = tuple(range(N_TRAIN_GATHERS))
    test_ids = tuple(range(N_TRAIN_GATHERS, n_gathers))
    return SurveySplit(gathers=tuple(triples), train_ids=train_ids, test_ids=test_ids)
