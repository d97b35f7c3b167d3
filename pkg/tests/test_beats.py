import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from conftest import gaussian_template, quiet_config
from kalium.beats import (SegmentSpec, build_template, cut_segment, detect_r_peaks, reduce_leads,
                          t_search_window)
from kalium.dsp import preprocess_signal
from kalium.errors import DataError, SignalQualityError
from kalium.records import BeatTemplate, EcgRecording
from kalium.synth import generate_session, session_truth

FS = 500.0


@pytest.fixture(scope="module")
def short_session():
    cfg = quiet_config(seed=4, measurements_per_session=(1, 1), measurement_spacing=60.0, k_plateau=10.0)
    rec, _ = generate_session(cfg, 0, 1)
    return rec, session_truth(cfg, 0, 1).r_times


def test_zero_signal_has_no_peaks():
    assert detect_r_peaks(np.zeros(int(10 * FS)), FS).size == 0
    assert detect_r_peaks(np.zeros((8, int(10 * FS))), FS).size == 0


def test_peaks_match_generator_truth(short_session):
    rec, r_true = short_session
    peaks = detect_r_peaks(preprocess_signal(rec.samples, FS), FS)
    assert 58 <= peaks.size <= 60
    err = np.abs(peaks[:, None] / FS - r_true[None, :]).min(axis=1)
    assert np.all(err <= 0.010)


def test_peaks_scale_invariant(short_session):
    rec, _ = short_session
    x = preprocess_signal(rec.samples, FS)
    assert np.array_equal(detect_r_peaks(x, FS), detect_r_peaks(2.0 * x, FS))


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, st.integers(0, 3000), elements=st.floats(-5, 5)))
def test_peaks_increasing_with_refractory_gap(x):
    peaks = detect_r_peaks(x, FS)
    assert np.all(np.diff(peaks) >= 0.25 * FS)
    assert np.all((peaks >= 0) & (peaks < max(x.size, 1)))


def _recording(duration=3600.0, fs=50.0):
    n = int(duration * fs) + 1
    samples = np.tile(np.arange(n, dtype=float), (8, 1))
    return EcgRecording("P01", 1, fs, tuple(f"L{i}" for i in range(8)), samples)


def test_cut_segment_full_window():
    seg = cut_segment(_recording(), 600.0)
    assert seg.coverage == 1.0
    assert seg.samples[0, 0] == 480 * 50 and seg.samples[0, -1] == 720 * 50


def test_cut_segment_truncated():
    seg = cut_segment(_recording(), 30.0)
    assert seg.coverage == pytest.approx(150 / 240)
    assert seg.start_index == 0 and seg.samples[0, -1] == 150 * 50


def test_cut_segment_minimum_coverage():
    assert cut_segment(_recording(), 5.0).coverage == pytest.approx(125 / 240)
    with pytest.raises(SignalQualityError, match="covers"):
        cut_segment(_recording(duration=100.0), 50.0)


@pytest.mark.parametrize("t", [-1.0, 3601.0, float("nan")])
def test_cut_segment_invalid_time(t):
    with pytest.raises(DataError, match="outside"):
        cut_segment(_recording(), t)


def test_cut_segment_causal():
    seg = cut_segment(_recording(), 600.0, SegmentSpec(causal=True))
    assert seg.samples[0, 0] == 360 * 50 and seg.samples[0, -1] == 600 * 50


def _beat(fs=FS, variant=0.0):
    t = np.arange(-int(0.3 * fs), int(0.6 * fs) + 1) / fs
    return (np.exp(-t ** 2 / (2 * 0.01 ** 2)) + (0.3 + variant) * np.exp(-(t - 0.3) ** 2 / (2 * 0.08 ** 2)))


def _train(beats, rr=1.0, fs=FS):
    pre = int(0.3 * fs)
    step = int(rr * fs)
    x = np.zeros(step * (len(beats) + 1))
    peaks = []
    for i, b in enumerate(beats):
        r = pre + 10 + i * step
        x[r - pre:r - pre + b.size] += b
        peaks.append(r)
    return x, np.array(peaks)


def _template(beats):
    x, r = _train(beats)
    return build_template(x, FS, r)


def test_identical_beats():
    x, r = _train([_beat()] * 10)
    tpl = build_template(x, FS, r)
    assert np.max(np.abs(tpl.waveform - _beat())) < 1e-12
    assert tpl.beats_used == 10 and tpl.mean_rr == pytest.approx(1.0)
    assert tpl.r_index == int(0.3 * FS)


def test_inverted_beat_rejected():
    x, r = _train([_beat()] * 9 + [-_beat()])
    tpl = build_template(x, FS, r)
    assert tpl.beats_used == 9
    assert np.max(np.abs(tpl.waveform - _beat())) < 1e-12


def test_beat_order_invariance():
    beats = [_beat(variant=v) for v in np.linspace(-0.05, 0.05, 7)]
    order = [3, 0, 6, 1, 5, 2, 4]
    a = _template(beats)
    b = _template([beats[i] for i in order])
    assert np.allclose(a.waveform, b.waveform, atol=1e-12, rtol=0)


def test_appending_outlier_changes_nothing():
    beats = [_beat(variant=v) for v in np.linspace(-0.05, 0.05, 6)]
    a = _template(beats)
    b = _template(beats + [-_beat()])
    assert np.allclose(a.waveform, b.waveform, atol=1e-12, rtol=0)
    assert a.beats_used == b.beats_used == 6


def test_too_few_beats():
    with pytest.raises(SignalQualityError, match="beats"):
        _template([_beat()] * 2)
    x, r = _train([_beat()] * 2 + [-_beat()] * 2)
    with pytest.raises(SignalQualityError, match="correlate"):
        build_template(x, FS, r)


def _lead_templates(waveforms, fs=FS):
    return [BeatTemplate(np.asarray(w, dtype=float), fs, int(0.3 * fs), 10, 1.0) for w in waveforms]


def _power_iteration_weights(W, lo, hi, iters=5000):
    """Dominant eigenvector of the T-window covariance, computed without LAPACK."""
    X = W[:, lo:hi + 1]
    X = X - X.mean(axis=1, keepdims=True)
    C = np.array([[np.dot(a, b) for b in X] for a in X]) / (X.shape[1] - 1)
    v = np.ones(W.shape[0]) / np.sqrt(W.shape[0])
    for _ in range(iters):
        v = C @ v
        v /= np.linalg.norm(v)
    return v


def test_identical_leads():
    t = gaussian_template(qrs=True).waveform
    tpl, red = reduce_leads(_lead_templates([t] * 8))
    assert np.allclose(red.weights, 1 / np.sqrt(8), atol=1e-12)
    assert np.allclose(tpl.waveform, np.sqrt(8) * t, atol=1e-12)


def test_single_active_lead():
    t = gaussian_template(qrs=True).waveform
    waves = [np.zeros_like(t)] * 8
    waves[5] = t
    tpl, red = reduce_leads(_lead_templates(waves))
    assert np.array_equal(np.abs(red.weights), np.eye(8)[5])
    assert np.allclose(tpl.waveform, t, atol=1e-15)


def test_scaling_leads():
    rng = np.random.default_rng(2)
    t = gaussian_template(qrs=True).waveform
    waves = [m * t + 0.01 * rng.normal(size=t.size) for m in rng.uniform(-1, 1, 8)]
    a, ra = reduce_leads(_lead_templates(waves))
    b, rb = reduce_leads(_lead_templates([2 * w for w in waves]))
    assert np.allclose(ra.weights, rb.weights, atol=1e-10)
    assert np.allclose(b.waveform, 2 * a.waveform, atol=1e-10)


def test_negative_t_flipped():
    t = gaussian_template(qrs=True).waveform
    tpl, red = reduce_leads(_lead_templates([-t] * 8))
    lo, hi = t_search_window(FS, tpl.r_index, tpl.mean_rr, tpl.waveform.size)
    seg = tpl.waveform[lo:hi + 1] - tpl.waveform[:40].mean()
    assert seg[np.argmax(np.abs(seg))] > 0
    assert np.allclose(red.weights, -1 / np.sqrt(8))


def test_no_t_energy():
    with pytest.raises(SignalQualityError, match="no T-wave energy"):
        reduce_leads(_lead_templates([np.zeros(451)] * 8))


def test_mismatched_templates():
    a = _lead_templates([np.ones(451)])[0]
    b = BeatTemplate(np.ones(451), FS, 100, 10, 1.0)
    with pytest.raises(DataError, match="share"):
        reduce_leads([a, b])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), rank1=st.booleans())
def test_reduction_properties(seed, rank1):
    rng = np.random.default_rng(seed)
    base = gaussian_template(a=rng.uniform(0.1, 1), sigma=rng.uniform(0.05, 0.1), qrs=True).waveform
    if rank1:
        mult = rng.uniform(0, 1, 8)
        mult[rng.integers(8)] = 1.0
        waves = [m * base for m in mult]
    else:
        waves = [rng.normal() * base + 0.05 * rng.normal(size=base.size) for _ in range(8)]
    leads = _lead_templates(waves)
    tpl, red = reduce_leads(leads)
    assert abs(np.linalg.norm(red.weights) - 1) < 1e-12
    lo, hi = t_search_window(FS, tpl.r_index, tpl.mean_rr, tpl.waveform.size)
    seg = tpl.waveform[lo:hi + 1] - tpl.waveform[:40].mean()
    assert seg[np.argmax(np.abs(seg))] > 0
    oracle = _power_iteration_weights(np.vstack(waves), lo, hi)
    assert min(np.max(np.abs(red.weights - oracle)), np.max(np.abs(red.weights + oracle))) < 1e-6
    if rank1:
        amp = lambda w: np.max(w[lo:hi + 1] - w[:40].mean())
        assert amp(tpl.waveform) >= max(amp(w) for w in waves) - 1e-12
