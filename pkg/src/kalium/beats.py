"""R-peak detection, measurement segments, beat templates and lead reduction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import DataError, SignalQualityError
from .records import BeatTemplate, EcgRecording

REFRACTORY_S = 0.25
ENERGY_SMOOTH_S = 0.150
THRESHOLD_FRACTION = 0.4
THRESHOLD_PERCENTILE = 95.0
THRESHOLD_WINDOW_S = 10.0
THRESHOLD_HOP_S = 1.0
PEAK_SEARCH_S = 0.05
MIN_COVERAGE = 0.5
MIN_BEATS = 3
BASELINE_S = 0.080
T_WINDOW_START_S = 0.150
T_WINDOW_END_S = 0.500
T_WINDOW_RR_FRACTION = 0.6


@dataclass(frozen=True)
class SegmentSpec:
    half_window: float = 120.0
    template_pre: float = 0.3
    template_post: float = 0.6
    beat_correlation_min: float = 0.85
    causal: bool = False

    def __post_init__(self):
        if not self.half_window > 0:
            raise DataError("half_window must be positive")
        if not (self.template_pre > 0 and self.template_post > 0):
            raise DataError("template_pre and template_post must be positive")
        if not 0 < self.beat_correlation_min < 1:
            raise DataError("beat_correlation_min must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class Segment:
    samples: np.ndarray  # (n_leads, n) window of the recording
    start_index: int  # index of samples[:, 0] in the recording
    coverage: float  # achieved fraction of the nominal window length
    center_time: float


@dataclass(frozen=True, eq=False)
class LeadReduction:
    weights: np.ndarray  # unit norm, oriented so the reduced T wave is positive


def t_search_window(fs: float, r_index: int, mean_rr: float, length: int):
    """Inclusive sample bounds of the T-wave search window relative to a template."""
    end_s = min(T_WINDOW_END_S, T_WINDOW_RR_FRACTION * mean_rr)
    lo = r_index + int(round(T_WINDOW_START_S * fs))
    hi = min(r_index + int(round(end_s * fs)), length - 1)
    if hi < lo:
        raise SignalQualityError(
            f"empty T-wave search window (mean RR {mean_rr:.3f} s, template length {length})"
        )
    return lo, hi


def baseline_of(waveform, fs: float) -> float:
    n = max(1, int(round(BASELINE_S * fs)))
    return float(np.mean(waveform[:n]))


# -- R peaks -----------------------------------------------------------------

def _rolling_threshold(env: np.ndarray, fs: float) -> np.ndarray:
    # the envelope is already smoothed over 150 ms, so a ~100 Hz subsample suffices
    step = max(1, int(fs // 100))
    hop = max(1, int(round(THRESHOLD_HOP_S * fs)))
    half = int(round(THRESHOLD_WINDOW_S * fs / 2))
    thr = np.empty_like(env)
    for start in range(0, env.size, hop):
        center = start + hop // 2
        window = env[max(0, center - half):center + half:step]
        thr[start:start + hop] = np.percentile(window, THRESHOLD_PERCENTILE)
    return THRESHOLD_FRACTION * thr


def detect_r_peaks(x, fs: float) -> np.ndarray:
    """R-peak sample indices in a preprocessed signal.

    Multi-lead input (one lead per row) is first collapsed to its RMS trace.
    The detector smooths the squared derivative over 150 ms, thresholds it
    at 0.4 x a rolling 95th percentile, picks the largest deflection around
    each supra-threshold run and enforces a 250 ms refractory period.
    """
    x = np.asarray(x, dtype=np.float64)
    trace = np.sqrt(np.mean(x * x, axis=0)) if x.ndim == 2 else x
    if trace.size < 3:
        return np.array([], dtype=np.int64)
    mag = np.abs(trace)
    energy = (np.gradient(trace) * fs) ** 2
    env = uniform_filter1d(energy, size=max(1, int(round(ENERGY_SMOOTH_S * fs))), mode="nearest")
    thr = _rolling_threshold(env, fs)
    above = (env > thr) & (thr > 0)
    if not above.any():
        return np.array([], dtype=np.int64)
    edges = np.diff(above.astype(np.int8))
    starts = np.flatnonzero(edges == 1) + 1
    stops = np.flatnonzero(edges == -1) + 1
    if above[0]:
        starts = np.r_[0, starts]
    if above[-1]:
        stops = np.r_[stops, above.size]

    search = int(round(PEAK_SEARCH_S * fs))
    gap = int(np.ceil(REFRACTORY_S * fs))
    peaks = []
    for s, e in zip(starts, stops):
        lo, hi = max(0, s - search), min(mag.size, e + search)
        idx = lo + int(np.argmax(mag[lo:hi]))
        if peaks and idx <= peaks[-1]:
            continue
        if peaks and idx - peaks[-1] < gap:
            if mag[idx] > mag[peaks[-1]]:
                peaks[-1] = idx
            continue
        peaks.append(idx)
    return np.asarray(peaks, dtype=np.int64)


# -- segments and templates ----------------------------------------------------

def cut_segment(recording: EcgRecording, t: float, spec: SegmentSpec = SegmentSpec()) -> Segment:
    """Window of the recording around measurement time ``t``.

    Centered windows span ``[t - half_window, t + half_window]``; causal ones
    ``[t - 2 * half_window, t]``. Windows are clipped to the recording, and
    fewer than half the nominal length is rejected.
    """
    duration = recording.duration
    if not (np.isfinite(t) and 0 <= t <= duration):
        raise DataError(f"measurement time {t} s outside recording [0, {duration:.3f}] s")
    nominal = 2.0 * spec.half_window
    t0, t1 = (t - nominal, t) if spec.causal else (t - spec.half_window, t + spec.half_window)
    lo_t, hi_t = max(t0, 0.0), min(t1, duration)
    coverage = (hi_t - lo_t) / nominal
    if coverage < MIN_COVERAGE:
        raise SignalQualityError(
            f"segment around t={t} s covers {coverage:.1%} of {nominal:g} s (minimum {MIN_COVERAGE:.0%})"
        )
    fs = recording.sampling_rate
    start = int(np.ceil(lo_t * fs - 1e-9))
    stop = min(int(np.floor(hi_t * fs + 1e-9)), recording.n_samples - 1)
    return Segment(samples=recording.samples[:, start:stop + 1], start_index=start,
                   coverage=coverage, center_time=float(t))


def build_template(segment, fs: float, r_peaks, spec: SegmentSpec = SegmentSpec()) -> BeatTemplate:
    """Average the R-aligned beats of one lead after rejecting outliers.

    Beats whose window leaves the segment are dropped; the rest are compared
    with their pointwise median and kept when their Pearson correlation is at
    least ``spec.beat_correlation_min``.
    """
    x = np.asarray(segment, dtype=np.float64)
    r = np.unique(np.asarray(r_peaks, dtype=np.int64))
    pre = int(round(spec.template_pre * fs))
    post = int(round(spec.template_post * fs))
    usable = r[(r - pre >= 0) & (r + post < x.size)]
    if usable.size < MIN_BEATS:
        raise SignalQualityError(f"only {usable.size} complete beats in segment (need {MIN_BEATS})")
    beats = x[usable[:, None] + np.arange(-pre, post + 1)[None, :]]
    median = np.median(beats, axis=0)
    bc = beats - beats.mean(axis=1, keepdims=True)
    mc = median - median.mean()
    denom = np.sqrt((bc * bc).sum(axis=1) * (mc @ mc))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(denom > 0, (bc @ mc) / denom, -np.inf)
    keep = corr >= spec.beat_correlation_min
    if keep.sum() < MIN_BEATS:
        raise SignalQualityError(
            f"only {int(keep.sum())} of {usable.size} beats correlate >= {spec.beat_correlation_min} "
            "with the median beat"
        )
    mean_rr = float(np.mean(np.diff(r))) / fs
    return BeatTemplate(waveform=beats[keep].mean(axis=0), sampling_rate=fs, r_index=pre,
                        beats_used=int(keep.sum()), mean_rr=mean_rr)


def reduce_leads(templates) -> tuple:
    """Combine per-lead templates into one waveform with maximal T-wave variance.

    The weights are the dominant eigenvector of the lead covariance inside
    the T-wave search window, oriented so the T-window extremum (relative to
    the leading baseline) is positive.

    Returns
    -------
    (BeatTemplate, LeadReduction)
    """
    templates = list(templates)
    if not templates:
        raise DataError("no lead templates to reduce")
    first = templates[0]
    for tpl in templates[1:]:
        if (tpl.waveform.size != first.waveform.size or tpl.r_index != first.r_index
                or tpl.sampling_rate != first.sampling_rate):
            raise DataError("lead templates must share length, R index and sampling rate")
    fs = first.sampling_rate
    W = np.vstack([t.waveform for t in templates])
    mean_rr = float(np.mean([t.mean_rr for t in templates]))
    lo, hi = t_search_window(fs, first.r_index, mean_rr, W.shape[1])
    window = W[:, lo:hi + 1]
    cov = np.atleast_2d(np.cov(window))
    if not np.trace(cov) > 0:
        raise SignalQualityError("no T-wave energy in any lead")
    _, vecs = np.linalg.eigh(cov)
    weights = vecs[:, -1] / np.linalg.norm(vecs[:, -1])
    reduced = weights @ W
    seg = reduced[lo:hi + 1] - baseline_of(reduced, fs)
    if seg[np.argmax(np.abs(seg))] < 0:
        weights = -weights
        reduced = -reduced
    weights.setflags(write=False)
    template = BeatTemplate(waveform=reduced, sampling_rate=fs, r_index=first.r_index,
                            beats_used=min(t.beats_used for t in templates), mean_rr=mean_rr)
    return template, LeadReduction(weights=weights)
