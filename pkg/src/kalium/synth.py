"""Synthetic multi-patient dialysis ECG with potassium-dependent T waves.

Each beat is a sum of five Gaussians (P, Q, R, S, T). T amplitude rises and
T width shrinks linearly with [K+], so the three T-wave features have closed
forms that serve as test oracles.

On top of the [K+] coupling, the T amplitude varies per patient, per session
and per blood draw, and the T width per blood draw (lognormal factors). The
analytic oracles include these factors; the regression sees them as
variability that [K+] does not explain.

Sessions are time-compressed: blood draws are ``measurement_spacing`` seconds
apart, and [K+] is held at the drawn value for ``k_plateau`` seconds around
each draw, ramping linearly in between. Every analysis window therefore sees
a single concentration, as it would in a full-length session.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .records import ConcentrationSample, EcgRecording, N_LEADS

SQRT_E_INV = math.exp(-0.5)
SUPPORT_WIDTHS = 9.0  # each Gaussian is evaluated within +-9 widths (tail < 3e-18 of its peak)
K_RANGE = (1.5, 9.0)  # admissible generated concentrations, mmol/l
JITTER_CLIP = 2.5  # lognormal factors are clipped at this many standard deviations
WANDER_HZ = 0.15
MAINS_HZ = 50.0


@dataclass(frozen=True)
class Wave:
    amplitude: float  # mV
    center: float  # s relative to R
    width: float  # s


@dataclass(frozen=True)
class BeatModel:
    p: Wave = Wave(0.10, -0.16, 0.020)
    q: Wave = Wave(-0.10, -0.03, 0.008)
    r: Wave = Wave(1.00, 0.0, 0.010)
    s: Wave = Wave(-0.25, 0.03, 0.010)
    t_center: float = 0.30
    t_gain: float = 1.0
    t_width_scale: float = 1.0

    def t_amplitude(self, k):
        return self.t_gain * (0.20 + 0.15 * (np.asarray(k) - 4.0))

    def t_width(self, k):
        return self.t_width_scale * (0.12 - 0.010 * (np.asarray(k) - 4.0))

    def check(self, k_values, width_scales=1.0) -> None:
        k = np.asarray(k_values, dtype=np.float64)
        if np.any(self.t_amplitude(k) <= 0):
            raise DataError(f"infeasible config: T amplitude not positive for K in [{k.min():.2f}, {k.max():.2f}]")
        if np.any(self.t_width(k) * np.asarray(width_scales) < 0.04):
            raise DataError(f"infeasible config: T width below 0.04 s for K up to {k.max():.2f}")

    def waves(self, k, t_scale: float = 1.0, width_scale: float = 1.0) -> list:
        """The five Gaussians of a beat at ``k``.

        ``t_scale`` and ``width_scale`` multiply the T amplitude and width.
        """
        t_wave = Wave(float(self.t_amplitude(k)) * t_scale, self.t_center,
                      float(self.t_width(k)) * width_scale)
        return [self.p, self.q, self.r, self.s, t_wave]

    def waveform(self, t_rel, k, t_scale: float = 1.0, width_scale: float = 1.0) -> np.ndarray:
        """Single beat at concentration ``k`` evaluated at times relative to R (s)."""
        t_rel = np.asarray(t_rel, dtype=np.float64)
        out = np.zeros_like(t_rel)
        for w in self.waves(k, t_scale, width_scale):
            out += w.amplitude * np.exp(-((t_rel - w.center) ** 2) / (2.0 * w.width ** 2))
        return out


def analytic_features(model: BeatModel, k, t_scale: float = 1.0, width_scale: float = 1.0):
    """Closed-form (amplitude, ascending slope, descending slope) of the T wave at ``k``.

    The steepest slope of ``a exp(-t^2 / 2 s^2)`` is ``a e^(-1/2) / s``.
    """
    a = float(model.t_amplitude(k)) * t_scale
    slope = a * SQRT_E_INV / (float(model.t_width(k)) * width_scale)
    return a, slope, -slope


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_patients: int = 3
    sessions_per_patient: tuple = (2, 3)
    measurements_per_session: tuple = (5, 6)
    fs: float = 500.0
    heart_rate: float = 60.0  # bpm
    measurement_spacing: float = 300.0  # s between blood draws
    k_plateau: float = 120.0  # s around each draw with constant [K+]
    noise_std: float = 0.02  # mV, white, independent per lead
    mains_amplitude: float = 0.05  # mV at 50 Hz
    baseline_wander_amplitude: float = 0.1  # mV at 0.15 Hz
    # [K+] trajectory per session: exponential fall from a pre- to a post-dialysis level
    k_pre_mean: float = 5.8
    k_pre_std: float = 0.75
    k_post_mean: float = 3.7
    k_post_std: float = 0.25
    k_decay: float = 0.35  # time constant as a fraction of the session length
    k_pre_range: tuple = (3.9, 8.0)
    k_post_range: tuple = (3.0, 4.6)
    # lognormal spreads of T-wave variability that [K+] does not explain
    # (factors are clipped to +-2.5 standard deviations in log space)
    patient_gain_sd: float = 0.10  # per patient
    session_gain_sd: float = 0.05  # per session (electrode placement)
    measurement_gain_sd: float = 0.35  # per blood draw (autonomic state, other ions)
    measurement_width_sd: float = 0.20  # per blood draw, T narrowing (folded)
    width_scale_sd: float = 0.0  # per-patient T width

    def __post_init__(self):
        for name in ("sessions_per_patient", "measurements_per_session", "k_pre_range", "k_post_range"):
            val = getattr(self, name)
            if not isinstance(val, tuple):
                val = tuple(val) if np.ndim(val) else (val, val)
                object.__setattr__(self, name, val)
            if len(val) != 2 or val[0] > val[1]:
                raise DataError(f"{name} must be a (low, high) pair, got {val}")
        if self.fs <= 160:
            raise DataError(f"fs must exceed 160 Hz, got {self.fs}")
        if self.n_patients < 1 or self.sessions_per_patient[0] < 1 or self.measurements_per_session[0] < 1:
            raise DataError("need at least one patient, session and measurement")
        for name in ("noise_std", "mains_amplitude", "baseline_wander_amplitude", "k_pre_std",
                     "k_post_std", "patient_gain_sd", "session_gain_sd", "measurement_gain_sd",
                     "measurement_width_sd", "width_scale_sd"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} must be non-negative")
        if not 60.0 <= self.heart_rate <= 80.0:
            raise DataError(f"heart_rate must lie in [60, 80] bpm, got {self.heart_rate}")
        if not self.measurement_spacing > 0 or self.k_plateau < 0:
            raise DataError("measurement_spacing must be positive and k_plateau >= 0")
        for name in ("k_pre_range", "k_post_range"):
            lo, hi = getattr(self, name)
            if lo < K_RANGE[0] or hi > K_RANGE[1]:
                raise DataError(f"{name} must lie within [{K_RANGE[0]}, {K_RANGE[1]}] mmol/l")
        if 2 * self.k_plateau > self.measurement_spacing:
            raise DataError("k_plateau must not exceed half the measurement spacing")

    @classmethod
    def from_mapping(cls, values: dict) -> "SynthConfig":
        """Build a config from string values (key-value file or CLI)."""
        kwargs = {}
        fields = {f.name: f for f in dataclasses.fields(cls)}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in fields:
                raise DataError(f"unknown synth config key {key!r}")
            default = fields[key].default
            try:
                if isinstance(default, tuple):
                    parts = [float(p) for p in str(raw).split(",")]
                    if isinstance(default[0], int):
                        parts = [int(p) for p in parts]
                    kwargs[key] = tuple(parts) if len(parts) == 2 else (parts[0], parts[0])
                elif isinstance(default, bool):
                    kwargs[key] = str(raw).lower() in ("1", "true", "yes")
                elif isinstance(default, int):
                    kwargs[key] = int(raw)
                else:
                    kwargs[key] = float(raw)
            except ValueError:
                raise DataError(f"bad value {raw!r} for synth config key {key!r}") from None
        return cls(**kwargs)


def read_config_file(path) -> SynthConfig:
    values = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"malformed config line {line!r} (expected key = value)")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return SynthConfig.from_mapping(values)


def patient_id(index: int) -> str:
    return f"P{index + 1:02d}"


@dataclass(frozen=True)
class PatientTruth:
    patient_id: str
    beat_model: BeatModel
    mixing: np.ndarray  # unit-norm lead weights applied to the source beat
    n_sessions: int


@dataclass(frozen=True)
class SessionTruth:
    patient_id: str
    session_index: int
    beat_model: BeatModel  # includes the session gain
    mixing: np.ndarray
    measurement_times: np.ndarray
    k_values: np.ndarray
    t_scales: np.ndarray  # per-measurement T amplitude factor
    width_scales: np.ndarray  # per-measurement T width factor
    r_times: np.ndarray
    duration: float


def _rng(*keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in keys])))


def _lognormal(rng: np.random.Generator, sd: float, size=None, folded: bool = False):
    z = np.clip(rng.normal(0.0, 1.0, size), -JITTER_CLIP, JITTER_CLIP)
    if folded:
        z = np.abs(z)
    out = np.exp(sd * z)
    return float(out) if size is None else out


def patient_truth(config: SynthConfig, patient: int) -> PatientTruth:
    rng = _rng(config.seed, patient, 0)
    gain = _lognormal(rng, config.patient_gain_sd)
    width = _lognormal(rng, config.width_scale_sd)
    mags = rng.uniform(0.3, 1.0, N_LEADS)
    signs = np.where(rng.uniform(size=N_LEADS) < 0.25, -1.0, 1.0)
    mixing = mags * signs
    mixing /= np.linalg.norm(mixing)
    lo, hi = config.sessions_per_patient
    n_sessions = int(rng.integers(lo, hi + 1))
    return PatientTruth(patient_id(patient), BeatModel(t_gain=gain, t_width_scale=width), mixing, n_sessions)


def session_truth(config: SynthConfig, patient: int, session: int) -> SessionTruth:
    """Ground truth of one session; ``session`` is 1-based."""
    pt = patient_truth(config, patient)
    rng = _rng(config.seed, patient, session, 1)
    k_values = trajectory_sample(config, rng)
    m = k_values.size
    duration = m * config.measurement_spacing
    times = config.measurement_spacing * (np.arange(m) + 0.5)
    gain = _lognormal(rng, config.session_gain_sd)
    model = dataclasses.replace(pt.beat_model, t_gain=pt.beat_model.t_gain * gain)
    t_scales = _lognormal(rng, config.measurement_gain_sd, m)
    # draws only narrow the T wave: widening would move its steepest upstroke
    # outside the slope search interval
    width_scales = 1.0 / _lognormal(rng, config.measurement_width_sd, m, folded=True)
    model.check(k_values, width_scales)
    rr = 60.0 / config.heart_rate
    first = float(rng.uniform(0.3, 0.3 + rr))
    r_times = np.arange(first, duration, rr)
    return SessionTruth(pt.patient_id, session, model, pt.mixing, times, k_values, t_scales,
                        width_scales, r_times, duration)


def plateau_interp(truth: SessionTruth, values, t, plateau: float) -> np.ndarray:
    """Per-draw ``values`` held within ``plateau`` s of each draw, linear in between."""
    knots_t, knots_v = [], []
    for ti, vi in zip(truth.measurement_times, values):
        knots_t += [ti - plateau, ti + plateau]
        knots_v += [vi, vi]
    return np.interp(t, knots_t, knots_v)


def _render(truth: SessionTruth, config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    fs = config.fs
    n = int(round(truth.duration * fs)) + 1
    source = np.zeros(n)
    k_beats = plateau_interp(truth, truth.k_values, truth.r_times, config.k_plateau)
    s_beats = plateau_interp(truth, truth.t_scales, truth.r_times, config.k_plateau)
    ws_beats = plateau_interp(truth, truth.width_scales, truth.r_times, config.k_plateau)
    for r_t, k, scale, wscale in zip(truth.r_times, k_beats, s_beats, ws_beats):
        for w in truth.beat_model.waves(k, scale, wscale):
            c = r_t + w.center
            lo = max(0, int(np.ceil((c - SUPPORT_WIDTHS * w.width) * fs)))
            hi = min(n, int(np.floor((c + SUPPORT_WIDTHS * w.width) * fs)) + 1)
            if lo < hi:
                t_rel = np.arange(lo, hi) / fs - c
                source[lo:hi] += w.amplitude * np.exp(-(t_rel * t_rel) / (2.0 * w.width ** 2))
    t = np.arange(n) / fs
    leads = truth.mixing[:, None] * source[None, :]
    if config.noise_std > 0:
        leads += rng.normal(0.0, config.noise_std, size=leads.shape)
    for amp, freq in ((config.mains_amplitude, MAINS_HZ), (config.baseline_wander_amplitude, WANDER_HZ)):
        if amp > 0:
            # sin(wt + p) = sin(wt) cos(p) + cos(wt) sin(p), one phase per lead
            phase = rng.uniform(0, 2 * np.pi, N_LEADS)
            s, c = np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t)
            for lead, p in zip(leads, phase):
                lead += amp * (np.cos(p) * s + np.sin(p) * c)
    return leads


def generate_session(config: SynthConfig, patient: int, session: int):
    """Simulate one session.

    Returns
    -------
    (EcgRecording, list of ConcentrationSample)
        The annotations carry the true [K+] at each blood draw.
    """
    truth = session_truth(config, patient, session)
    leads = _render(truth, config, _rng(config.seed, patient, session, 2))
    rec = EcgRecording(patient_id=truth.patient_id, session_index=session, sampling_rate=config.fs,
                       lead_names=tuple(f"L{i + 1}" for i in range(N_LEADS)), samples=leads)
    ann = [ConcentrationSample(float(t), float(k)) for t, k in zip(truth.measurement_times, truth.k_values)]
    return rec, ann


BENCHMARK_PATIENTS = 48


def benchmark_config(seed: int = 1, **overrides) -> SynthConfig:
    """Imbalanced multi-patient cohort used to compare weighting settings."""
    return dataclasses.replace(SynthConfig(seed=seed, n_patients=BENCHMARK_PATIENTS), **overrides)


def trajectory_sample(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Concentrations of one session drawn from the configured trajectory model."""
    lo, hi = config.measurements_per_session
    m = int(rng.integers(lo, hi + 1))
    k_pre = float(np.clip(rng.normal(config.k_pre_mean, config.k_pre_std), *config.k_pre_range))
    k_post = float(np.clip(rng.normal(config.k_post_mean, config.k_post_std), *config.k_post_range))
    k_pre = max(k_pre, k_post)
    times = np.arange(m) + 0.5
    return k_post + (k_pre - k_post) * np.exp(-times / (config.k_decay * m))


def expected_histogram(config: SynthConfig, edges, n_sessions: int = 20000) -> np.ndarray:
    """Bin probabilities of the concentration histogram implied by the configuration.

    Estimated by Monte Carlo from a stream independent of the dataset seed.
    """
    rng = _rng(2 ** 31 - 1, config.seed, 3)
    k = np.concatenate([trajectory_sample(config, rng) for _ in range(n_sessions)])
    counts, _ = np.histogram(np.clip(k, edges[0], edges[-1]), bins=edges)
    return counts / counts.sum()


def iter_sessions(config: SynthConfig):
    """Yield ``(patient_index, session_index)`` for every session in the dataset."""
    for p in range(config.n_patients):
        for s in range(1, patient_truth(config, p).n_sessions + 1):
            yield p, s


def truth_table(config: SynthConfig) -> list:
    """Per-measurement ground truth, including the analytic feature values."""
    rows = []
    for p, s in iter_sessions(config):
        truth = session_truth(config, p, s)
        for t, k, scale, wscale in zip(truth.measurement_times, truth.k_values, truth.t_scales,
                                       truth.width_scales):
            amp, asc, desc = analytic_features(truth.beat_model, k, scale, wscale)
            rows.append({"patient_id": truth.patient_id, "session_index": s, "time_s": float(t),
                         "k_mmol_l": float(k), "t_amp_mv": amp, "asc_slope_mv_s": asc,
                         "desc_slope_mv_s": desc})
    return rows


def write_dataset(config: SynthConfig, out_dir) -> list:
    """Write every session's signal and annotation CSV plus ``truth.json``; return the signal paths."""
    from . import io

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for p, s in iter_sessions(config):
        rec, ann = generate_session(config, p, s)
        sig, ann_path = io.dataset_paths(out, rec.patient_id, s)
        io.store_recording(rec, sig)
        io.store_annotations(ann, ann_path)
        paths.append(sig)
    payload = {"format_version": 1, "config": _config_json(config), "measurements": truth_table(config)}
    (out / "truth.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def _config_json(config: SynthConfig) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(config).items()}
