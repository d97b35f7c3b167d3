"""T-wave delineation on a reduced beat template and the three regression features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .beats import baseline_of, t_search_window
from .errors import SignalQualityError
from .records import BeatTemplate

FLAT_T_MV = 0.02
ASC_SEARCH_S = 0.120
DESC_SEARCH_S = 0.150
SMOOTHING_HZ = 10.0
SMOOTHING_POLYORDER = 4


@dataclass(frozen=True)
class TWaveMarks:
    baseline: float  # mV
    t_peak_index: int
    asc_slope_index: int
    desc_slope_index: int


def smoothing_window(fs: float, cutoff: float = SMOOTHING_HZ, polyorder: int = SMOOTHING_POLYORDER) -> int:
    """Odd Savitzky-Golay window length whose -3 dB point sits near ``cutoff``.

    Uses the approximation f_c = (polyorder + 1) / (3.2 N - 4.6) * fs.
    """
    n = int(round(((polyorder + 1) * fs / cutoff + 4.6) / 3.2))
    return max(n | 1, polyorder + 2 | 1)


def smoothed_derivative(template: BeatTemplate, cutoff: float = SMOOTHING_HZ) -> np.ndarray:
    """First derivative in mV/s (central differences) after lowpass smoothing.

    The smoother is a Savitzky-Golay filter: flat passband and finite
    support, so the QRS complex cannot ring into the T-wave region.
    """
    fs = template.sampling_rate
    wf = template.waveform
    n = smoothing_window(fs, cutoff)
    if n > wf.size:
        n = wf.size if wf.size % 2 else wf.size - 1
    smooth = signal.savgol_filter(wf, n, min(SMOOTHING_POLYORDER, n - 1))
    return np.gradient(smooth) * fs


def locate_t_wave(template: BeatTemplate, cutoff: float = SMOOTHING_HZ) -> TWaveMarks:
    fs = template.sampling_rate
    wf = template.waveform
    baseline = baseline_of(wf, fs)
    lo, hi = t_search_window(fs, template.r_index, template.mean_rr, wf.size)
    peak = lo + int(np.argmax(wf[lo:hi + 1] - baseline))
    if wf[peak] - baseline < FLAT_T_MV:
        raise SignalQualityError(
            f"flat T wave: peak {wf[peak] - baseline:.4f} mV above baseline (minimum {FLAT_T_MV} mV)"
        )
    deriv = smoothed_derivative(template, cutoff)
    # slope searches stay inside the T-search window
    a_lo = max(lo, peak - int(round(ASC_SEARCH_S * fs)))
    d_hi = min(hi, peak + int(round(DESC_SEARCH_S * fs)))
    asc = a_lo + int(np.argmax(deriv[a_lo:peak + 1]))
    desc = peak + int(np.argmin(deriv[peak:d_hi + 1]))
    return TWaveMarks(baseline=baseline, t_peak_index=peak, asc_slope_index=asc, desc_slope_index=desc)


def extract_features(template: BeatTemplate, marks: TWaveMarks, cutoff: float = SMOOTHING_HZ):
    """Return ``(t_amplitude [mV], asc_slope [mV/s], desc_slope [mV/s])``.

    Slopes are the extremal smoothed derivatives on either side of the T
    peak; the ascending one is clipped at 0 from below and the descending
    one at 0 from above.
    """
    deriv = smoothed_derivative(template, cutoff)
    amplitude = float(template.waveform[marks.t_peak_index] - marks.baseline)
    asc = max(float(deriv[marks.asc_slope_index]), 0.0)
    desc = min(float(deriv[marks.desc_slope_index]), 0.0)
    return amplitude, asc, desc


def twave_features(template: BeatTemplate, cutoff: float = SMOOTHING_HZ):
    return extract_features(template, locate_t_wave(template, cutoff), cutoff)
