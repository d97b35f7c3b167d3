"""Leave-one-patient-out evaluation with first-session offset calibration."""
from __future__ import annotations

import logging
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .records import (HYPERKALEMIA_THRESHOLD, EvaluationReport, FoldLog, StratumStats,
                      TWaveFeatureRow)
from .regression import (DEFAULT_BANDWIDTH, DEFAULT_CLAMP, SolverSettings, build_weighting,
                         compute_offset, fit_model, predict_rows, weight_of)

log = logging.getLogger(__name__)

# wr values of the four published weighting settings; None is the unweighted baseline
TABLE_SETTINGS = (None, 0.0, 0.5, 1.0)
REFERENCE_WR = 1.0


def worker_count(default: Optional[int] = None) -> int:
    """Thread cap from ``KALIUM_THREADS`` (falls back to the CPU count)."""
    env = os.environ.get("KALIUM_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise DataError(f"KALIUM_THREADS must be an integer, got {env!r}") from None
        return max(1, n)
    return default or os.cpu_count() or 1


def _stats(err: np.ndarray) -> StratumStats:
    if err.size == 0:
        return StratumStats(mae=None, std=None, count=0)
    return StratumStats(mae=float(err.mean()), std=float(err.std()), count=int(err.size))


def evaluate_metrics(truths, predictions, weights=None) -> EvaluationReport:
    """MAE and std of absolute errors for truth < 5, truth >= 5 and all samples.

    Strata are defined on the measured concentration; 5.0 itself belongs to
    the upper stratum. ``weights`` (optional) produce ``weighted_mae``.
    """
    truths = np.asarray(truths, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if truths.shape != predictions.shape:
        raise DataError(f"length mismatch: {truths.shape} truths vs {predictions.shape} predictions")
    if truths.size == 0:
        raise DataError("no samples to evaluate")
    err = np.abs(predictions - truths)
    high = truths >= HYPERKALEMIA_THRESHOLD
    wmae = None
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        wmae = float((weights * err).sum() / weights.sum()) if weights.sum() > 0 else None
    return EvaluationReport(low=_stats(err[~high]), high=_stats(err[high]), all=_stats(err),
                            weighted_mae=wmae)


def group_by_patient(rows: Sequence[TWaveFeatureRow]) -> dict:
    groups = defaultdict(list)
    for r in rows:
        groups[r.patient_id].append(r)
    return {pid: groups[pid] for pid in sorted(groups)}


def _run_fold(pid, by_patient, wr, settings, bandwidth, cross_terms, clamp):
    own = by_patient[pid]
    first = [r for r in own if r.session_index == 1]
    later = [r for r in own if r.session_index >= 2]
    train_ids = tuple(p for p in by_patient if p != pid)
    train = [r for p in train_ids for r in by_patient[p]]
    model = fit_model(train, wr=wr, settings=settings, bandwidth=bandwidth,
                      cross_terms=cross_terms, clamp=clamp)
    offset = compute_offset(model, first)
    first_truth = np.array([r.k_value for r in first])
    residual = float(np.mean(first_truth - (predict_rows(model, first) + offset)))
    truth = np.array([r.k_value for r in later])
    pred = predict_rows(model, later) + offset
    fold = FoldLog(patient_id=pid, train_patients=train_ids, offset_sessions=(1,),
                   eval_sessions=tuple(sorted({r.session_index for r in later})),
                   n_train_rows=len(train), n_eval_rows=len(later), offset=offset,
                   first_session_residual=residual)
    return fold, truth, pred


def cross_validate(rows: Sequence[TWaveFeatureRow], wr: Optional[float] = 0.0,
                   settings: SolverSettings = SolverSettings(),
                   bandwidth: float = DEFAULT_BANDWIDTH, cross_terms: bool = False,
                   clamp=DEFAULT_CLAMP, threads: Optional[int] = None) -> EvaluationReport:
    """Leave-one-patient-out cross-validation.

    For each patient: fit on every row of every other patient (the weighting
    curve is rebuilt on that split), calibrate an additive offset on the held
    out patient's session 1, then score offset-corrected predictions on its
    sessions >= 2. Errors are pooled in patient-id order, so the report does
    not depend on fold scheduling.
    """
    by_patient = group_by_patient(rows)
    if len(by_patient) < 2:
        raise DataError(f"insufficient patients for cross-validation: {len(by_patient)}")
    evaluated = []
    for pid, own in by_patient.items():
        sessions = {r.session_index for r in own}
        if 1 not in sessions or len(sessions) < 2:
            log.warning("patient %s skipped in evaluation: needs session 1 and a later session "
                        "(has %s)", pid, sorted(sessions))
            continue
        evaluated.append(pid)
    if not evaluated:
        raise DataError("no patient has both a first and a later session")

    def run(pid):
        return _run_fold(pid, by_patient, wr, settings, bandwidth, cross_terms, clamp)

    n_workers = min(threads or worker_count(), len(evaluated))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run, evaluated))
    else:
        results = [run(pid) for pid in evaluated]

    folds = tuple(r[0] for r in results)
    truth = np.concatenate([r[1] for r in results])
    pred = np.concatenate([r[2] for r in results])
    reference = build_weighting([r.k_value for r in rows], REFERENCE_WR, bandwidth)
    core = evaluate_metrics(truth, pred, weights=weight_of(reference, truth))
    return EvaluationReport(low=core.low, high=core.high, all=core.all,
                            weighted_mae=core.weighted_mae,
                            offsets={f.patient_id: f.offset for f in folds},
                            wr=None if wr is None else float(wr), lam=settings.lam, folds=folds)


def setting_label(wr: Optional[float]) -> str:
    return "no weights" if wr is None else f"wr={wr:g}"


def run_sweep(rows: Sequence[TWaveFeatureRow], wr_list=TABLE_SETTINGS, **kwargs) -> list:
    """One cross-validation report per weighting setting, as ``[(label, report), ...]``."""
    return [(setting_label(wr), cross_validate(rows, wr=wr, **kwargs)) for wr in wr_list]


def _cell(s: StratumStats) -> str:
    if s.count == 0:
        return "n/a"
    return f"{s.mae:.2f}±{s.std:.2f}"


def render_table(sweep) -> str:
    """Plain-text table: one row per setting, columns <5, >=5 and all (mean +- std, mmol/l)."""
    header = ("Weight matrix", "<5 mmol/l", ">=5 mmol/l", "all")
    body = [(label, _cell(r.low), _cell(r.high), _cell(r.all)) for label, r in sweep]
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(4)]
    lines = [" | ".join(c.ljust(w) for c, w in zip(header, widths))]
    lines.append("-+-".join("-" * w for w in widths))
    lines += [" | ".join(c.ljust(w) for c, w in zip(row, widths)) for row in body]
    return "\n".join(lines) + "\n"
