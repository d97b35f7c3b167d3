import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from kalium import io
from kalium.errors import DataError
from kalium.records import (ConcentrationSample, EcgRecording, EvaluationReport, FoldLog,
                            PotassiumModel, StratumStats, TWaveFeatureRow)
from kalium.regression import build_weighting


def _signal_frame(n=5000, fs=500.0, leads=8, seed=0):
    rng = np.random.default_rng(seed)
    data = {"time_s": np.arange(n) / fs}
    for i in range(leads):
        data[f"L{i + 1}"] = rng.normal(size=n)
    return pd.DataFrame(data)


def test_load_recording_structure(tmp_path):
    path = tmp_path / "P07_s2.ecg.csv"
    _signal_frame().to_csv(path, index=False)
    rec = io.load_recording(path)
    assert rec.samples.shape == (8, 5000)
    assert rec.sampling_rate == 500.0
    assert (rec.patient_id, rec.session_index) == ("P07", 2)
    assert rec.lead_names == tuple(f"L{i}" for i in range(1, 9))


def test_seven_leads_rejected(tmp_path):
    path = tmp_path / "x.ecg.csv"
    _signal_frame(leads=7).to_csv(path, index=False)
    with pytest.raises(DataError, match="lead count"):
        io.load_recording(path)


@pytest.mark.parametrize("mutate, message", [
    (lambda df: df.rename(columns={"time_s": "t"}), "header"),
    (lambda df: df.iloc[::-1], "non-monotone"),
    (lambda df: df.assign(time_s=df["time_s"] ** 1.5), "uniform"),
])
def test_malformed_recordings(tmp_path, mutate, message):
    path = tmp_path / "x.ecg.csv"
    mutate(_signal_frame(n=200)).to_csv(path, index=False)
    with pytest.raises(DataError, match=message):
        io.load_recording(path)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="missing"):
        io.load_recording(tmp_path / "nope.ecg.csv")


@settings(max_examples=25, deadline=None)
@given(row=st.integers(0, 49), col=st.integers(1, 8), bad=st.sampled_from(["nan", "inf", "-inf", ""]))
def test_non_finite_cells_rejected(tmp_path_factory, row, col, bad):
    df = _signal_frame(n=50).astype(object)
    df.iat[row, col] = bad
    path = tmp_path_factory.mktemp("fuzz") / "x.ecg.csv"
    df.to_csv(path, index=False)
    with pytest.raises(DataError, match="non-finite"):
        io.load_recording(path)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), fs=st.sampled_from([250.0, 500.0, 1000.0]),
       scale=st.floats(1e-6, 1e3))
def test_recording_round_trip_bit_exact(tmp_path_factory, seed, fs, scale):
    rng = np.random.default_rng(seed)
    rec = EcgRecording("P01", 1, fs, tuple(f"L{i}" for i in range(1, 9)), scale * rng.normal(size=(8, 64)))
    path = tmp_path_factory.mktemp("rt") / "P01_s1.ecg.csv"
    io.store_recording(rec, path)
    back = io.load_recording(path)
    assert back.sampling_rate == fs
    assert np.array_equal(back.samples, rec.samples)
    assert back.lead_names == rec.lead_names


def test_annotations_sorted(tmp_path):
    path = tmp_path / "a.k.csv"
    pd.DataFrame({"time_s": [2400, 600], "k_mmol_l": [4.1, 5.2]}).to_csv(path, index=False)
    out = io.load_annotations(path)
    assert [(s.time, s.value) for s in out] == [(600.0, 5.2), (2400.0, 4.1)]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1e4), st.floats(1.0, 10.0)), min_size=1, max_size=12))
def test_annotations_sorted_property(tmp_path_factory, pairs):
    path = tmp_path_factory.mktemp("ann") / "a.k.csv"
    pd.DataFrame(pairs, columns=["time_s", "k_mmol_l"]).to_csv(path, index=False)
    out = io.load_annotations(path)
    times = [s.time for s in out]
    assert times == sorted(times)
    assert all(1.0 <= s.value <= 10.0 for s in out)
    assert sorted((s.time, s.value) for s in out) == sorted(pairs)


def test_implausible_concentration(tmp_path):
    path = tmp_path / "a.k.csv"
    pd.DataFrame({"time_s": [10.0], "k_mmol_l": [0.2]}).to_csv(path, index=False)
    with pytest.raises(DataError, match="implausible concentration"):
        io.load_annotations(path)


def test_annotation_round_trip(tmp_path):
    samples = [ConcentrationSample(900.0, 4.25), ConcentrationSample(300.5, 5.75)]
    io.store_annotations(samples, tmp_path / "a.k.csv")
    assert io.load_annotations(tmp_path / "a.k.csv") == sorted(samples)


def _rows():
    return [TWaveFeatureRow("P01", 1, 150.0, 0.31, 2.1, -2.0, 5.1),
            TWaveFeatureRow("P02", 2, 450.0, 0.1 / 3, 1.0 / 7, -0.0, 3.9)]


def test_feature_round_trip(tmp_path):
    io.store_features(_rows(), tmp_path / "f.csv")
    assert io.load_features(tmp_path / "f.csv") == _rows()
    header = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert header == "patient_id,session_index,time_s,t_amp_mv,asc_slope_mv_s,desc_slope_mv_s,k_mmol_l"


def _model(cross_terms=False, wr=0.5):
    rng = np.random.default_rng(3)
    p = 20 if cross_terms else 10
    return PotassiumModel(feature_means=rng.normal(size=3), feature_stds=rng.uniform(0.1, 2, 3),
                          coefficients=rng.normal(size=p) / 7, lam=0.9, wr=wr,
                          weighting=None if wr is None else build_weighting(rng.normal(4.2, 0.4, 30), wr),
                          clamp_range=(1.5, 9.0), cross_terms=cross_terms)


def _assert_models_equal(a, b):
    assert np.array_equal(a.feature_means, b.feature_means)
    assert np.array_equal(a.feature_stds, b.feature_stds)
    assert np.array_equal(a.coefficients, b.coefficients)
    assert (a.lam, a.wr, a.clamp_range, a.cross_terms) == (b.lam, b.wr, b.clamp_range, b.cross_terms)
    if a.weighting is None:
        assert b.weighting is None
    else:
        assert np.array_equal(a.weighting.training_values, b.weighting.training_values)
        assert (a.weighting.bandwidth, a.weighting.wr, a.weighting.normalizer) == \
               (b.weighting.bandwidth, b.weighting.wr, b.weighting.normalizer)


@pytest.mark.parametrize("cross_terms, wr", [(False, 0.5), (True, 1.0), (False, None)])
def test_model_round_trip(tmp_path, cross_terms, wr):
    m = _model(cross_terms, wr)
    io.store_model(m, tmp_path / "m.json")
    _assert_models_equal(m, io.load_model(tmp_path / "m.json"))


def _edit_json(path, fn):
    d = json.loads(path.read_text())
    fn(d)
    path.write_text(json.dumps(d))


@pytest.mark.parametrize("edit, message", [
    (lambda d: d.update(format_version=2), "format_version"),
    (lambda d: d.pop("coefficients"), "missing field"),
])
def test_model_load_errors(tmp_path, edit, message):
    path = tmp_path / "m.json"
    io.store_model(_model(), path)
    _edit_json(path, edit)
    with pytest.raises(DataError, match=message):
        io.load_model(path)


def test_model_non_finite_coefficient(tmp_path):
    path = tmp_path / "m.json"
    io.store_model(_model(), path)
    text = path.read_text()
    d = json.loads(text)
    first = repr(d["coefficients"][3])
    path.write_text(text.replace(first, "NaN", 1))
    with pytest.raises(DataError, match="non-finite"):
        io.load_model(path)


def test_report_round_trip(tmp_path):
    fold = FoldLog("P02", ("P01", "P03"), (1,), (2, 3), 40, 11, 0.125, 0.0)
    rep = EvaluationReport(low=StratumStats(0.3, 0.2, 8), high=StratumStats(0.7, 0.1, 3),
                           all=StratumStats(0.4090909, 0.25, 11), weighted_mae=0.5,
                           offsets={"P02": 0.125}, wr=0.5, lam=0.9, folds=(fold,))
    io.store_report(rep, tmp_path / "r.json")
    assert io.load_report(tmp_path / "r.json") == rep


def test_report_empty_stratum_round_trip(tmp_path):
    rep = EvaluationReport(low=StratumStats(0.3, 0.2, 4), high=StratumStats(None, None, 0),
                           all=StratumStats(0.3, 0.2, 4), wr=None, lam=0.9)
    io.store_report(rep, tmp_path / "r.json")
    assert io.load_report(tmp_path / "r.json") == rep
