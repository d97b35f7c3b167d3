"""Domain types shared by every stage of the pipeline.

Units are fixed throughout: millivolts, seconds, Hz and mmol/l.
All types are frozen; array fields are made read-only on construction so
instances can be shared between threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError

N_LEADS = 8
K_PLAUSIBLE = (1.0, 10.0)
HYPERKALEMIA_THRESHOLD = 5.0


def _frozen_array(values, ndim=None, name="array"):
    arr = np.array(values, dtype=np.float64, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EcgRecording:
    patient_id: str
    session_index: int
    sampling_rate: float
    lead_names: tuple
    samples: np.ndarray  # (8, n_samples), mV

    def __post_init__(self):
        samples = _frozen_array(self.samples, ndim=2, name="samples")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "lead_names", tuple(str(n) for n in self.lead_names))
        if samples.shape[0] != N_LEADS:
            raise DataError(f"lead count must be {N_LEADS}, got {samples.shape[0]}")
        if len(self.lead_names) != N_LEADS:
            raise DataError(f"lead count must be {N_LEADS}, got {len(self.lead_names)} lead names")
        if samples.shape[1] < 1:
            raise DataError("recording holds no samples")
        if not np.all(np.isfinite(samples)):
            raise DataError("recording contains non-finite samples")
        if not (np.isfinite(self.sampling_rate) and self.sampling_rate > 0):
            raise DataError(f"sampling rate must be positive, got {self.sampling_rate}")
        if int(self.session_index) < 1:
            raise DataError(f"session index must be >= 1, got {self.session_index}")
        object.__setattr__(self, "session_index", int(self.session_index))
        object.__setattr__(self, "sampling_rate", float(self.sampling_rate))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        """Time of the last sample in seconds (first sample at t = 0)."""
        return (self.n_samples - 1) / self.sampling_rate


@dataclass(frozen=True, order=True)
class ConcentrationSample:
    time: float  # s from recording start
    value: float  # mmol/l

    def __post_init__(self):
        if not (np.isfinite(self.time) and self.time >= 0):
            raise DataError(f"annotation time must be non-negative, got {self.time}")
        lo, hi = K_PLAUSIBLE
        if not (np.isfinite(self.value) and lo <= self.value <= hi):
            raise DataError(
                f"implausible concentration {self.value} mmol/l (accepted range [{lo}, {hi}])"
            )


@dataclass(frozen=True, eq=False)
class BeatTemplate:
    waveform: np.ndarray  # mV
    sampling_rate: float
    r_index: int
    beats_used: int
    mean_rr: float  # s

    def __post_init__(self):
        wf = _frozen_array(self.waveform, ndim=1, name="waveform")
        object.__setattr__(self, "waveform", wf)
        if not 0 <= self.r_index < wf.size:
            raise DataError(f"r_index {self.r_index} outside template of length {wf.size}")
        if self.beats_used < 1:
            raise DataError("template must be built from at least one beat")
        if not np.all(np.isfinite(wf)):
            raise DataError("template waveform contains non-finite values")

    @property
    def times(self) -> np.ndarray:
        """Sample times relative to the R peak, in seconds."""
        return (np.arange(self.waveform.size) - self.r_index) / self.sampling_rate


@dataclass(frozen=True)
class TWaveFeatureRow:
    patient_id: str
    session_index: int
    measurement_time: float
    t_amplitude: float
    asc_slope: float
    desc_slope: float
    k_value: float

    def __post_init__(self):
        vals = (self.measurement_time, self.t_amplitude, self.asc_slope, self.desc_slope, self.k_value)
        if not all(np.isfinite(v) for v in vals):
            raise DataError(f"non-finite value in feature row {self}")
        if self.asc_slope < 0 or self.desc_slope > 0:
            raise DataError(
                f"slope sign convention violated (asc={self.asc_slope}, desc={self.desc_slope})"
            )

    @property
    def features(self) -> tuple:
        return (self.t_amplitude, self.asc_slope, self.desc_slope)


@dataclass(frozen=True, eq=False)
class WeightingCurve:
    """Kernel-density based error weighting over the training concentrations."""

    bandwidth: float
    wr: float
    training_values: np.ndarray
    normalizer: float

    def __post_init__(self):
        object.__setattr__(self, "training_values", _frozen_array(self.training_values, ndim=1))
        if not self.bandwidth > 0:
            raise DataError(f"bandwidth must be positive, got {self.bandwidth}")
        if not 0.0 <= self.wr <= 1.0:
            raise DataError(f"weighting ratio wr must lie in [0, 1], got {self.wr}")
        if self.training_values.size and not self.normalizer > 0:
            raise DataError("weighting normalizer must be positive")


@dataclass(frozen=True, eq=False)
class PotassiumModel:
    feature_means: np.ndarray
    feature_stds: np.ndarray
    coefficients: np.ndarray
    lam: float
    wr: Optional[float]  # None means the unweighted fit
    weighting: Optional[WeightingCurve]
    clamp_range: tuple = (1.5, 9.0)
    cross_terms: bool = False
    derivative_smoothing_hz: float = 10.0

    def __post_init__(self):
        for name in ("feature_means", "feature_stds", "coefficients"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), ndim=1, name=name))
        if self.feature_means.size != 3 or self.feature_stds.size != 3:
            raise DataError("a model needs exactly three feature means and stds")
        if not np.all(self.feature_stds > 0):
            raise DataError("feature standard deviations must be strictly positive")
        if not np.all(np.isfinite(self.coefficients)) or not np.all(np.isfinite(self.feature_means)):
            raise DataError("model contains non-finite coefficients")
        expected = 20 if self.cross_terms else 10
        if self.coefficients.size != expected:
            raise DataError(f"expected {expected} coefficients, got {self.coefficients.size}")
        lo, hi = (float(v) for v in self.clamp_range)
        if not lo < hi:
            raise DataError(f"clamp range must satisfy low < high, got {self.clamp_range}")
        object.__setattr__(self, "clamp_range", (lo, hi))
        if not self.lam >= 0:
            raise DataError(f"lambda must be non-negative, got {self.lam}")


@dataclass(frozen=True)
class StratumStats:
    mae: Optional[float]  # None for an empty stratum
    std: Optional[float]
    count: int


@dataclass(frozen=True)
class FoldLog:
    """What one leave-one-patient-out fold trained on and evaluated."""

    patient_id: str
    train_patients: tuple
    offset_sessions: tuple
    eval_sessions: tuple
    n_train_rows: int
    n_eval_rows: int
    offset: float
    first_session_residual: float  # mean signed error on session 1 after the offset


@dataclass(frozen=True)
class EvaluationReport:
    low: StratumStats  # truth < 5 mmol/l
    high: StratumStats  # truth >= 5 mmol/l
    all: StratumStats
    weighted_mae: Optional[float] = None
    offsets: dict = field(default_factory=dict)
    wr: Optional[float] = None
    lam: Optional[float] = None
    folds: tuple = ()

    def __post_init__(self):
        if self.low.count + self.high.count != self.all.count:
            raise DataError("stratum counts do not add up")
