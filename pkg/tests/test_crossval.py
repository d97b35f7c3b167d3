import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kalium.crossval import (cross_validate, evaluate_metrics, render_table, run_sweep,
                             worker_count)
from kalium.errors import DataError
from kalium.records import TWaveFeatureRow
from kalium.synth import SynthConfig, truth_table


def truth_rows(config, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for d in truth_table(config):
        f = np.array([d["t_amp_mv"], d["asc_slope_mv_s"], d["desc_slope_mv_s"]])
        f = f * (1 + noise * rng.standard_normal(3))
        rows.append(TWaveFeatureRow(d["patient_id"], d["session_index"], d["time_s"], *map(float, f),
                                    d["k_mmol_l"]))
    return rows


@pytest.fixture(scope="module")
def cohort():
    return truth_rows(SynthConfig(seed=4, n_patients=6), noise=0.05)


# -- metrics -----------------------------------------------------------------------

def test_metrics_uniform_error():
    r = evaluate_metrics([4.0, 6.0], [4.5, 6.5])
    for s in (r.low, r.high, r.all):
        assert s.mae == pytest.approx(0.5) and s.std == pytest.approx(0.0, abs=1e-15)
    assert (r.low.count, r.high.count, r.all.count) == (1, 1, 2)


def test_boundary_goes_high():
    r = evaluate_metrics([5.0], [5.4])
    assert r.high.count == 1 and r.low.count == 0
    assert r.low.mae is None and r.high.mae == pytest.approx(0.4)


def test_metrics_length_mismatch():
    with pytest.raises(DataError, match="mismatch"):
        evaluate_metrics([4.0, 5.0], [4.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(2, 8), st.floats(-2, 2)), min_size=1, max_size=40))
def test_metric_invariants(pairs):
    truth = np.array([t for t, _ in pairs])
    pred = truth + np.array([e for _, e in pairs])
    r = evaluate_metrics(truth, pred)
    assert r.low.count + r.high.count == r.all.count == len(pairs)
    strata = [s.mae for s in (r.low, r.high) if s.count]
    assert min(strata) - 1e-12 <= r.all.mae <= max(strata) + 1e-12


# -- protocol ------------------------------------------------------------------------

def test_three_patient_example():
    rows = truth_rows(SynthConfig(seed=11, n_patients=3, sessions_per_patient=(3, 3)), noise=0.05)
    a, b = cross_validate(rows, wr=0.5), cross_validate(rows, wr=0.5)
    assert sorted(a.offsets) == ["P01", "P02", "P03"]
    assert a.low.count + a.high.count == a.all.count
    assert a.all.count == sum(1 for r in rows if r.session_index >= 2)
    assert a == b


def test_single_patient():
    rows = truth_rows(SynthConfig(seed=1, n_patients=1))
    with pytest.raises(DataError, match="insufficient patients"):
        cross_validate(rows)


def test_first_session_only_patient(cohort, caplog):
    extra = [TWaveFeatureRow("Z99", 1, float(i), 0.3 + 0.01 * i, 1.5, -1.5, 4.8) for i in range(5)]
    with caplog.at_level(logging.WARNING, logger="kalium"):
        report = cross_validate(cohort + extra, wr=0.0)
    assert "Z99" not in report.offsets
    assert any("Z99" in m for m in caplog.messages)
    assert all("Z99" in f.train_patients for f in report.folds)


def test_fold_logs(cohort):
    report = cross_validate(cohort, wr=1.0)
    sessions = {}
    for r in cohort:
        sessions.setdefault(r.patient_id, set()).add(r.session_index)
    for f in report.folds:
        assert f.patient_id not in f.train_patients
        assert 1 not in f.eval_sessions and f.offset_sessions == (1,)
        assert set(f.eval_sessions) == sessions[f.patient_id] - {1}
        assert f.n_train_rows == sum(1 for r in cohort if r.patient_id != f.patient_id)
        assert abs(f.first_session_residual) <= 1e-12


def test_thread_count_invariance(cohort, monkeypatch):
    monkeypatch.setenv("KALIUM_THREADS", "1")
    serial = cross_validate(cohort, wr=0.5)
    monkeypatch.setenv("KALIUM_THREADS", "4")
    assert worker_count() == 4
    assert cross_validate(cohort, wr=0.5) == serial


def test_bad_thread_variable(monkeypatch):
    monkeypatch.setenv("KALIUM_THREADS", "many")
    with pytest.raises(DataError):
        worker_count()


def test_unweighted_path(cohort):
    r = cross_validate(cohort, wr=None)
    assert r.wr is None and r.all.count > 0


# -- sweep -----------------------------------------------------------------------------

def test_sweep_table(cohort):
    sweep = run_sweep(cohort)
    assert [label for label, _ in sweep] == ["no weights", "wr=0", "wr=0.5", "wr=1"]
    lines = render_table(sweep).splitlines()
    assert len(lines) == 6 and [c.strip() for c in lines[0].split(" | ")[1:]] == ["<5 mmol/l", ">=5 mmol/l", "all"]


def test_single_setting_sweep(cohort):
    sweep = run_sweep(cohort, wr_list=(0.5,))
    assert len(sweep) == 1 and len(render_table(sweep).splitlines()) == 3
