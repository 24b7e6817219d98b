"""Filtering quality metrics.

Power: per-trace one-sided DFT power averaged across a window's traces,
interpolated onto a fixed frequency grid (default 0-60 Hz at 1 Hz). The
power distance P_D is the mean absolute difference between the signal-side
and noise-side spectra; the power score Q_p rescales the achieved P_D drop
by the drop a reference (expert) result achieves, times 100.

Amplitude: 64-bin histograms (probability mass) over bands straddling the
mask boundary, with the analogous distance H_D and score Q_a.

Correlation: Q_c is the mean per-trace Pearson correlation between result
and reference, times 100.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .gathers import GroundRollMask, ShotGather, TraceWindow, extract_window
from .validation import check_mask_matches, require

__all__ = [
    "Periodogram",
    "WindowSelection",
    "GatherScores",
    "ScoreReport",
    "power_spectrum",
    "periodogram",
    "power_distance",
    "power_score",
    "amp_histogram",
    "amp_distance",
    "amp_score",
    "trace_correlation",
    "choose_windows",
    "evaluate_gather",
    "survey_report",
    "spectra_csv",
    "histograms_csv",
]

DEFAULT_FREQ_MAX_HZ = 60.0
DEFAULT_FREQ_STEP_HZ = 1.0
DEFAULT_AMP_BINS = 64
DEFAULT_BAND_WIDTH = 100     # samples on each side of the boundary
DEFAULT_SEP_TRACES = 16      # gap between the two spectral windows
MIN_WINDOW_SAMPLES = 64


@dataclass(frozen=True)
class Periodogram:
    """Average power on a fixed frequency grid."""

    freqs_hz: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs_hz, dtype=np.float64)
        p = np.asarray(self.power, dtype=np.float64)
        require(f.ndim == 1 and f.shape == p.shape, "freqs and power must be matching 1D arrays")
        require(bool((np.diff(f) > 0).all()), "frequency grid must be strictly increasing")
        require(bool((p >= 0).all()), "power must be non-negative")
        object.__setattr__(self, "freqs_hz", f)
        object.__setattr__(self, "power", p)

    @property
    def n_bins(self) -> int:
        return int(self.freqs_hz.size)


def power_spectrum(window: np.ndarray, dt_s: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided average power on the native DFT grid.

    Normalization is chosen so the full-band sum equals the mean squared
    amplitude of the window (Parseval).
    """
    win = np.asarray(window, dtype=np.float64)
    require(win.ndim == 2, "window must be 2D (traces, samples)")
    n = win.shape[1]
    require(n >= MIN_WINDOW_SAMPLES, f"window must span >= {MIN_WINDOW_SAMPLES} samples, got {n}")
    spec = np.fft.rfft(win, axis=1)
    p = (spec.real**2 + spec.imag**2) / (n * n)
    if n % 2 == 0:
        p[:, 1:-1] *= 2.0  # double everything between DC and Nyquist
    else:
        p[:, 1:] *= 2.0
    return np.fft.rfftfreq(n, dt_s), p.mean(axis=0)


def periodogram(
    window: np.ndarray,
    dt_s: float,
    freq_max_hz: float = DEFAULT_FREQ_MAX_HZ,
    freq_step_hz: float = DEFAULT_FREQ_STEP_HZ,
) -> Periodogram:
    """Average power interpolated onto the [0, freq_max] grid."""
    require(freq_step_hz > 0, "freq_step_hz must be positive")
    require(freq_max_hz >= freq_step_hz, "freq_max_hz must be >= freq_step_hz")
    native_f, native_p = power_spectrum(window, dt_s)
    nyquist = 0.5 / dt_s
    require(
        freq_max_hz <= nyquist + 1e-9,
        f"freq_max_hz {freq_max_hz} exceeds Nyquist {nyquist}",
    )
    grid = np.arange(0.0, freq_max_hz + freq_step_hz / 2, freq_step_hz)
    return Periodogram(grid, np.interp(grid, native_f, native_p))


def power_distance(a: Periodogram, b: Periodogram) -> float:
    """Mean absolute per-bin difference; grids must match exactly."""
    if not np.array_equal(a.freqs_hz, b.freqs_hz):
        raise ValueError("periodogram frequency grids differ")
    return float(np.abs(a.power - b.power).mean())


def power_score(pd_original: float, pd_expert: float, pd_result: float) -> float:
    """(P_D drop achieved) / (P_D drop of the expert) * 100."""
    denom = pd_original - pd_expert
    if denom == 0.0:
        raise ValueError("degenerate score: original and expert power distances are equal")
    return 100.0 * (pd_original - pd_result) / denom


def amp_histogram(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Probability mass per bin (sums to 1 for values covered by the edges)."""
    values = np.asarray(values, dtype=np.float64).ravel()
    require(values.size > 0, "cannot histogram an empty region")
    counts, _ = np.histogram(values, bins=edges)
    return counts / values.size


def amp_distance(h_a: np.ndarray, h_b: np.ndarray) -> float:
    h_a, h_b = np.asarray(h_a), np.asarray(h_b)
    require(h_a.shape == h_b.shape, "histograms must share binning")
    return float(np.abs(h_a - h_b).mean())


def amp_score(hd_original: float, hd_expert: float, hd_result: float) -> float:
    denom = hd_original - hd_expert
    if denom == 0.0:
        raise ValueError("degenerate score: original and expert histogram distances are equal")
    return 100.0 * (hd_original - hd_result) / denom


@dataclass(frozen=True)
class CorrelationResult:
    per_trace: np.ndarray  # NaN where a constant trace was excluded
    q_c: float
    n_excluded: int


def trace_correlation(result: ShotGather, reference: ShotGather) -> CorrelationResult:
    """Per-trace Pearson correlation and its mean * 100 (Q_c).

    Traces that are constant in either gather carry no correlation and are
    excluded (with a warning); all-constant input is an error.
    """
    require(result.data.shape == reference.data.shape, "gathers must share dimensions")
    a = result.data - result.data.mean(axis=1, keepdims=True)
    b = reference.data - reference.data.mean(axis=1, keepdims=True)
    na = np.sqrt((a * a).sum(axis=1))
    nb = np.sqrt((b * b).sum(axis=1))
    ok = (na > 0) & (nb > 0)
    cc = np.full(result.n_traces, np.nan)
    cc[ok] = (a[ok] * b[ok]).sum(axis=1) / (na[ok] * nb[ok])
    n_excluded = int((~ok).sum())
    if n_excluded == result.n_traces:
        raise ValueError("every trace is constant; correlation is undefined")
    if n_excluded:
        warnings.warn(f"excluded {n_excluded} constant trace(s) from correlation")
    return CorrelationResult(cc, float(np.nanmean(cc) * 100.0), n_excluded)


@dataclass(frozen=True)
class WindowSelection:
    """Evaluation regions derived from a detection mask."""

    power_signal: TraceWindow
    power_noise: TraceWindow
    amp_signal_region: np.ndarray  # bool, True where a sample is scored
    amp_noise_region: np.ndarray


def _largest_rectangle(region: np.ndarray, min_samples: int, prefer_far: bool) -> Optional[TraceWindow]:
    """Largest all-True rectangle with >= min_samples sample extent.

    Ties on area prefer near offsets (small trace index) unless prefer_far.
    """
    n_tr, n_sm = region.shape
    heights = np.zeros(n_sm, dtype=np.int64)
    best = None
    best_key = None
    for j in range(n_tr):
        heights = np.where(region[j], heights + 1, 0)
        stack: list[tuple[int, int]] = []
        for t in range(n_sm + 1):
            h = int(heights[t]) if t < n_sm else 0
            start = t
            while stack and stack[-1][1] >= h:
                s, sh = stack.pop()
                width = t - s
                if width >= min_samples and sh > 0:
                    lo = j - sh + 1
                    key = (sh * width, lo if prefer_far else -lo)
                    if best_key is None or key > best_key:
                        best_key = key
                        best = TraceWindow(lo, j, s, t - 1)
                start = s
            if t < n_sm and (not stack or stack[-1][1] < h):
                stack.append((start, h))
    return best


def choose_windows(
    gather: ShotGather,
    mask: GroundRollMask,
    band_width: int = DEFAULT_BAND_WIDTH,
    sep_traces: int = DEFAULT_SEP_TRACES,
) -> WindowSelection:
    """Derive amplitude bands and spectral windows from a detection mask.

    Amplitude: bands of ``band_width`` samples on each side of each affected
    trace's first noise sample, intersected with the respective region.
    Power: the largest rectangle fully inside the noise region (near-offset
    preference) and the largest rectangle fully inside the clean region at
    least ``sep_traces`` traces farther out.
    """
    check_mask_matches(gather, mask)
    onsets = mask.noise_onsets()
    affected = onsets >= 0
    if not affected.any():
        raise ValueError("mask marks no noise; there is no boundary to evaluate")

    n_tr, n_sm = mask.mask.shape
    sig_region = np.zeros((n_tr, n_sm), dtype=bool)
    noi_region = np.zeros((n_tr, n_sm), dtype=bool)
    for j in np.nonzero(affected)[0]:
        o = int(onsets[j])
        sig_region[j, max(o - band_width, 0) : o] = True
        noi_region[j, o : min(o + band_width, n_sm)] = True
    sig_region &= mask.mask == 1
    noi_region &= mask.mask == 0
    if not sig_region.any() or not noi_region.any():
        raise ValueError("boundary bands are empty; mask border is degenerate")

    noise_rect = _largest_rectangle(mask.mask == 0, MIN_WINDOW_SAMPLES, prefer_far=False)
    if noise_rect is None:
        raise ValueError(f"noise region holds no window of {MIN_WINDOW_SAMPLES}+ samples")
    clean = mask.mask == 1
    cutoff = noise_rect.trace_hi + sep_traces + 1
    if cutoff >= n_tr:
        raise ValueError("no traces left beyond the noise window for a signal window")
    clean = clean.copy()
    clean[:cutoff, :] = False
    signal_rect = _largest_rectangle(clean, MIN_WINDOW_SAMPLES, prefer_far=True)
    if signal_rect is None:
        raise ValueError(f"clean region holds no window of {MIN_WINDOW_SAMPLES}+ samples")

    assert not mask.mask[
        noise_rect.trace_lo : noise_rect.trace_hi + 1,
        noise_rect.sample_lo : noise_rect.sample_hi + 1,
    ].any()
    assert mask.mask[
        signal_rect.trace_lo : signal_rect.trace_hi + 1,
        signal_rect.sample_lo : signal_rect.sample_hi + 1,
    ].all()
    return WindowSelection(
        power_signal=signal_rect,
        power_noise=noise_rect,
        amp_signal_region=sig_region,
        amp_noise_region=noi_region,
    )


@dataclass(frozen=True)
class GatherScores:
    dataset: str
    gather_id: int
    q_p: float
    q_a: float
    q_c: float
    p_d_original: float
    p_d_result: float
    p_d_expert: float
    h_d_original: float
    h_d_result: float
    h_d_expert: float


def _power_d(gather: ShotGather, sel: WindowSelection, fmax: float, fstep: float) -> float:
    p_sig = periodogram(extract_window(gather, sel.power_signal), gather.dt_s, fmax, fstep)
    p_noi = periodogram(extract_window(gather, sel.power_noise), gather.dt_s, fmax, fstep)
    return power_distance(p_sig, p_noi)


def _amp_d(gather: ShotGather, sel: WindowSelection, n_bins: int) -> float:
    s_vals = gather.data[sel.amp_signal_region]
    n_vals = gather.data[sel.amp_noise_region]
    lo = min(s_vals.min(), n_vals.min())
    hi = max(s_vals.max(), n_vals.max())
    if lo == hi:
        raise ValueError("amplitude bands are constant; histogram binning is degenerate")
    edges = np.linspace(lo, hi, n_bins + 1)
    return amp_distance(amp_histogram(s_vals, edges), amp_histogram(n_vals, edges))


def evaluate_gather(
    original: ShotGather,
    result: ShotGather,
    reference: ShotGather,
    mask: GroundRollMask,
    dataset: str = "",
    band_width: int = DEFAULT_BAND_WIDTH,
    sep_traces: int = DEFAULT_SEP_TRACES,
    n_amp_bins: int = DEFAULT_AMP_BINS,
    freq_max_hz: float = DEFAULT_FREQ_MAX_HZ,
    freq_step_hz: float = DEFAULT_FREQ_STEP_HZ,
) -> GatherScores:
    """Score one filtered gather against its original and reference."""
    sel = choose_windows(original, mask, band_width, sep_traces)
    pd_o = _power_d(original, sel, freq_max_hz, freq_step_hz)
    pd_r = _power_d(result, sel, freq_max_hz, freq_step_hz)
    pd_e = _power_d(reference, sel, freq_max_hz, freq_step_hz)
    hd_o = _amp_d(original, sel, n_amp_bins)
    hd_r = _amp_d(result, sel, n_amp_bins)
    hd_e = _amp_d(reference, sel, n_amp_bins)
    return GatherScores(
        dataset=dataset,
        gather_id=original.gather_id,
        q_p=power_score(pd_o, pd_e, pd_r),
        q_a=amp_score(hd_o, hd_e, hd_r),
        q_c=trace_correlation(result, reference).q_c,
        p_d_original=pd_o,
        p_d_result=pd_r,
        p_d_expert=pd_e,
        h_d_original=hd_o,
        h_d_result=hd_r,
        h_d_expert=hd_e,
    )


@dataclass(frozen=True)
class ScoreReport:
    """Survey-level summary: per-metric mean and population std."""

    dataset: str
    n_gathers: int
    means: dict
    stds: dict
    rows: tuple

    def formatted(self) -> dict:
        """Render each metric as ``mean% (std)`` with two decimals."""
        return {
            name: f"{self.means[name]:.2f}% ({self.stds[name]:.2f})"
            for name in ("q_p", "q_a", "q_c")
        }

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "n_gathers": self.n_gathers,
            "metrics": {
                name: {
                    "mean": self.means[name],
                    "std": self.stds[name],
                    "formatted": self.formatted()[name],
                }
                for name in ("q_p", "q_a", "q_c")
            },
            "gathers": [
                {
                    "gather_id": r.gather_id,
                    "q_p": r.q_p,
                    "q_a": r.q_a,
                    "q_c": r.q_c,
                }
                for r in self.rows
            ],
        }


def spectra_csv(
    original: ShotGather,
    result: ShotGather,
    reference: ShotGather,
    mask: GroundRollMask,
    band_width: int = DEFAULT_BAND_WIDTH,
    sep_traces: int = DEFAULT_SEP_TRACES,
    freq_max_hz: float = DEFAULT_FREQ_MAX_HZ,
    freq_step_hz: float = DEFAULT_FREQ_STEP_HZ,
) -> str:
    """Plotting dump: the six periodograms behind one gather's P_D values."""
    sel = choose_windows(original, mask, band_width, sep_traces)
    cols = {}
    for tag, gather in (("original", original), ("result", result), ("reference", reference)):
        for side, win in (("signal", sel.power_signal), ("noise", sel.power_noise)):
            pg = periodogram(extract_window(gather, win), gather.dt_s,
                             freq_max_hz, freq_step_hz)
            cols[f"{tag}_{side}"] = pg.power
            freqs = pg.freqs_hz
    names = sorted(cols)
    lines = ["freq_hz," + ",".join(names)]
    for i, f in enumerate(freqs):
        lines.append(f"{f:g}," + ",".join(f"{cols[n][i]:.9e}" for n in names))
    return "\n".join(lines) + "\n"


def histograms_csv(
    original: ShotGather,
    result: ShotGather,
    reference: ShotGather,
    mask: GroundRollMask,
    band_width: int = DEFAULT_BAND_WIDTH,
    sep_traces: int = DEFAULT_SEP_TRACES,
    n_bins: int = DEFAULT_AMP_BINS,
) -> str:
    """Plotting dump: boundary-band amplitude histograms per gather."""
    sel = choose_windows(original, mask, band_width, sep_traces)
    cols = {}
    centers = None
    for tag, gather in (("original", original), ("result", result), ("reference", reference)):
        s_vals = gather.data[sel.amp_signal_region]
        n_vals = gather.data[sel.amp_noise_region]
        lo = min(s_vals.min(), n_vals.min())
        hi = max(s_vals.max(), n_vals.max())
        if lo == hi:
            raise ValueError("amplitude bands are constant; histogram binning is degenerate")
        edges = np.linspace(lo, hi, n_bins + 1)
        cols[f"{tag}_signal"] = amp_histogram(s_vals, edges)
        cols[f"{tag}_noise"] = amp_histogram(n_vals, edges)
        cols[f"{tag}_bin_center"] = (edges[:-1] + edges[1:]) / 2
        centers = n_bins
    names = sorted(cols)
    lines = ["bin," + ",".join(names)]
    for i in range(centers):
        lines.append(f"{i}," + ",".join(f"{cols[n][i]:.9e}" for n in names))
    return "\n".join(lines) + "\n"


def survey_report(scores: Sequence[GatherScores]) -> ScoreReport:
    """Aggregate per-gather scores; std is the population std (ddof=0)."""
    require(len(scores) > 0, "survey report needs at least one gather")
    datasets = {s.dataset for s in scores}
    require(len(datasets) == 1, f"mixed datasets in one report: {sorted(datasets)}")
    means, stds = {}, {}
    for name in ("q_p", "q_a", "q_c"):
        vals = np.array([getattr(s, name) for s in scores], dtype=np.float64)
        means[name] = float(vals.mean())
        stds[name] = float(vals.std(ddof=0))
    return ScoreReport(
        dataset=scores[0].dataset,
        n_gathers=len(scores),
        means=means,
        stds=stds,
        rows=tuple(scores),
    )
