"""ECG pre-filtering: Butterworth highpass and lowpass plus a spectral Gaussian notch.

Both Butterworth stages run forward-backward, so the chain has zero phase and
its magnitude response is the squared single-pass response times the notch
transfer function.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft, signal

from .errors import DataError

NOTCH_PAD_S = 2.0


@dataclass(frozen=True)
class FilterSpec:
    hp_cutoff: float = 0.3
    lp_cutoff: float = 80.0
    notch_center: float = 50.0
    notch_sigma: float = 1.0
    hp_order: int = 3
    lp_order: int = 4

    def validate(self, fs: float) -> None:
        if not fs > 0:
            raise DataError(f"sampling rate must be positive, got {fs}")
        if not 0 < self.hp_cutoff < self.lp_cutoff:
            raise DataError(f"need 0 < hp_cutoff < lp_cutoff, got {self.hp_cutoff}, {self.lp_cutoff}")
        if not self.lp_cutoff < fs / 2:
            raise DataError(
                f"lowpass at {self.lp_cutoff} Hz infeasible for fs={fs} Hz (needs fs > {2 * self.lp_cutoff})"
            )
        if not self.notch_sigma > 0:
            raise DataError("notch_sigma must be positive")


def _butter_sos(spec: FilterSpec, fs: float):
    # scipy's butter prewarps the cutoff before the bilinear transform
    hp = signal.butter(spec.hp_order, spec.hp_cutoff, btype="highpass", fs=fs, output="sos")
    lp = signal.butter(spec.lp_order, spec.lp_cutoff, btype="lowpass", fs=fs, output="sos")
    return hp, lp


def notch_gain(spec: FilterSpec, freqs) -> np.ndarray:
    """Gaussian notch transfer ``1 - exp(-(|f| - f0)^2 / (2 s^2))``, symmetric in f."""
    f = np.abs(np.asarray(freqs, dtype=np.float64))
    return 1.0 - np.exp(-((f - spec.notch_center) ** 2) / (2.0 * spec.notch_sigma ** 2))


def spectral_notch(x, fs: float, spec: FilterSpec) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    pad = int(round(NOTCH_PAD_S * fs))
    padded = np.pad(x, (pad, pad), mode="symmetric")
    n = fft.next_fast_len(padded.size, real=True)
    spectrum = fft.rfft(padded, n=n)
    spectrum *= notch_gain(spec, fft.rfftfreq(n, d=1.0 / fs))
    return fft.irfft(spectrum, n=n)[pad:pad + x.size]


def preprocess_signal(x, fs: float, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    """Apply highpass, lowpass and notch to one lead (or to each row of a 2-D array).

    Parameters
    ----------
    x : array_like
        Signal in mV; 1-D, or 2-D with one lead per row.
    fs : float
        Sampling rate in Hz; must exceed twice the lowpass cutoff.
    spec : FilterSpec

    Returns
    -------
    ndarray
        Filtered signal with the same shape as ``x``.
    """
    spec.validate(fs)
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0 or x.shape[-1] == 0:
        raise DataError("empty signal")
    if x.ndim == 2:
        return np.vstack([preprocess_signal(row, fs, spec) for row in x])
    hp, lp = _butter_sos(spec, fs)
    y = signal.sosfiltfilt(hp, x)
    y = signal.sosfiltfilt(lp, y)
    return spectral_notch(y, fs, spec)


def frequency_response(spec: FilterSpec, fs: float, freqs) -> np.ndarray:
    """Complex gain of the whole chain at ``freqs`` (Hz); real-valued because the chain is zero phase."""
    spec.validate(fs)
    freqs = np.asarray(freqs, dtype=np.float64)
    if np.any(freqs < 0) or np.any(freqs >= fs / 2):
        raise DataError(f"frequencies must lie in [0, {fs / 2}) Hz")
    hp, lp = _butter_sos(spec, fs)
    _, h_hp = signal.sosfreqz(hp, worN=freqs, fs=fs)
    _, h_lp = signal.sosfreqz(lp, worN=freqs, fs=fs)
    gain = np.abs(h_hp) ** 2 * np.abs(h_lp) ** 2 * notch_gain(spec, freqs)
    return gain.astype(np.complex128)
