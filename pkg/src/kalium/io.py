"""Readers and writers for every on-disk artifact.

Formats
-------
signal CSV       ``time_s,<8 lead names>``; one row per sample, mV.
annotation CSV   ``time_s,k_mmol_l``.
feature table    ``patient_id,session_index,time_s,t_amp_mv,asc_slope_mv_s,desc_slope_mv_s,k_mmol_l``.
model / report   JSON objects with ``format_version: 1``.

Floats are written with Python's shortest round-trip repr, so every
store/load pair reproduces values exactly.
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError
from .records import (ConcentrationSample, EcgRecording, EvaluationReport, FoldLog, N_LEADS,
                      PotassiumModel, StratumStats, TWaveFeatureRow, WeightingCurve)

FORMAT_VERSION = 1
ANNOTATION_COLUMNS = ["time_s", "k_mmol_l"]
FEATURE_COLUMNS = ["patient_id", "session_index", "time_s", "t_amp_mv", "asc_slope_mv_s",
                   "desc_slope_mv_s", "k_mmol_l"]
_SIGNAL_NAME = re.compile(r"^(?P<pid>.+)_s(?P<session>\d+)\.ecg\.csv$")


def dataset_paths(directory, patient_id: str, session_index: int):
    """``(signal_path, annotation_path)`` for one session inside a dataset directory."""
    d = Path(directory)
    stem = f"{patient_id}_s{session_index}"
    return d / f"{stem}.ecg.csv", d / f"{stem}.k.csv"


def parse_signal_name(path):
    m = _SIGNAL_NAME.match(Path(path).name)
    if not m:
        return None
    return m.group("pid"), int(m.group("session"))


def _read_csv(path, expected=None):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    try:
        df = pd.read_csv(path, float_precision="round_trip", encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"malformed CSV {path}: {exc}") from None
    if expected is not None and list(df.columns) != expected:
        raise DataError(f"malformed header in {path}: expected {','.join(expected)}, "
                        f"got {','.join(map(str, df.columns))}")
    return df


def _numeric(df, columns, path):
    try:
        return df[columns].to_numpy(dtype=np.float64)
    except (ValueError, TypeError):
        raise DataError(f"non-numeric values in {path}") from None


def _write_csv(df: pd.DataFrame, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


# -- recordings ----------------------------------------------------------------

def load_recording(path, patient_id=None, session_index=None) -> EcgRecording:
    """Read and validate a signal CSV.

    Patient and session default to the ``<patient>_s<session>.ecg.csv``
    naming convention (patient = file stem, session 1 otherwise). The
    sampling rate is recovered from the time column.
    """
    df = _read_csv(path)
    if not len(df.columns) or df.columns[0] != "time_s":
        raise DataError(f"malformed header in {path}: first column must be time_s")
    leads = list(df.columns[1:])
    if len(leads) != N_LEADS:
        raise DataError(f"lead count must be {N_LEADS}, got {len(leads)} in {path}")
    values = _numeric(df, list(df.columns), path)
    if values.shape[0] < 2:
        raise DataError(f"{path} needs at least two samples")
    if not np.all(np.isfinite(values)):
        raise DataError(f"non-finite samples in {path}")
    t = values[:, 0]
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise DataError(f"non-monotone time column in {path}")
    fs = round((t.size - 1) / (t[-1] - t[0]), 6)
    if np.max(np.abs(dt * fs - 1.0)) > 1e-3:
        raise DataError(f"time column in {path} is not uniformly sampled")
    parsed = parse_signal_name(path)
    if patient_id is None:
        patient_id = parsed[0] if parsed else Path(path).name.split(".")[0]
    if session_index is None:
        session_index = parsed[1] if parsed else 1
    return EcgRecording(patient_id=patient_id, session_index=session_index, sampling_rate=fs,
                        lead_names=tuple(leads), samples=values[:, 1:].T)


def store_recording(recording: EcgRecording, path) -> None:
    data = {"time_s": np.arange(recording.n_samples) / recording.sampling_rate}
    for name, row in zip(recording.lead_names, recording.samples):
        data[name] = row
    _write_csv(pd.DataFrame(data), path)


# -- annotations ---------------------------------------------------------------

def load_annotations(path) -> list:
    """Blood-draw annotations sorted by time; implausible values raise :class:`DataError`."""
    df = _read_csv(path, ANNOTATION_COLUMNS)
    values = _numeric(df, ANNOTATION_COLUMNS, path)
    samples = [ConcentrationSample(float(t), float(k)) for t, k in values]
    return sorted(samples)


def store_annotations(samples, path) -> None:
    samples = sorted(samples)
    _write_csv(pd.DataFrame({"time_s": [s.time for s in samples],
                             "k_mmol_l": [s.value for s in samples]}), path)


# -- feature tables ------------------------------------------------------------

def store_features(rows, path) -> None:
    _write_csv(pd.DataFrame(
        [(r.patient_id, r.session_index, r.measurement_time, r.t_amplitude, r.asc_slope,
          r.desc_slope, r.k_value) for r in rows], columns=FEATURE_COLUMNS), path)


def load_features(path) -> list:
    df = _read_csv(path, FEATURE_COLUMNS)
    if df.empty:
        raise DataError(f"empty feature table: {path}")
    values = _numeric(df, FEATURE_COLUMNS[2:], path)
    try:
        sessions = df["session_index"].astype(int).tolist()
    except (ValueError, TypeError):
        raise DataError(f"non-integer session_index in {path}") from None
    pids = df["patient_id"].astype(str).tolist()
    return [TWaveFeatureRow(pid, s, *map(float, v)) for pid, s, v in zip(pids, sessions, values)]


# -- JSON artifacts ------------------------------------------------------------

def _dump_json(payload: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)
    except ValueError:
        raise DataError(f"refusing to write non-finite values to {path}") from None
    path.write_text(text + "\n", encoding="utf-8")


def _load_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(payload, dict) or payload.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format_version "
                        f"{payload.get('format_version') if isinstance(payload, dict) else None!r}")
    return payload


def _finite_list(values, what):
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"non-finite value in {what}")
    return arr


def model_to_dict(model: PotassiumModel) -> dict:
    curve = model.weighting
    return {
        "format_version": FORMAT_VERSION,
        "feature_means": model.feature_means.tolist(),
        "feature_stds": model.feature_stds.tolist(),
        "coefficients": model.coefficients.tolist(),
        "lambda": model.lam,
        "wr": model.wr,
        "weighting": None if curve is None else {
            "bandwidth": curve.bandwidth, "wr": curve.wr,
            "training_values": curve.training_values.tolist(), "normalizer": curve.normalizer,
        },
        "clamp_range": list(model.clamp_range),
        "cross_terms": model.cross_terms,
        "derivative_smoothing_hz": model.derivative_smoothing_hz,
    }


def model_from_dict(d: dict, source="model") -> PotassiumModel:
    try:
        curve = d["weighting"]
        if curve is not None:
            curve = WeightingCurve(bandwidth=float(curve["bandwidth"]), wr=float(curve["wr"]),
                                   training_values=_finite_list(curve["training_values"], source),
                                   normalizer=float(curve["normalizer"]))
        return PotassiumModel(
            feature_means=_finite_list(d["feature_means"], source),
            feature_stds=_finite_list(d["feature_stds"], source),
            coefficients=_finite_list(d["coefficients"], source),
            lam=float(d["lambda"]), wr=None if d["wr"] is None else float(d["wr"]),
            weighting=curve, clamp_range=tuple(d["clamp_range"]), cross_terms=bool(d["cross_terms"]),
            derivative_smoothing_hz=float(d["derivative_smoothing_hz"]))
    except KeyError as exc:
        raise DataError(f"{source}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{source}: invalid field value ({exc})") from None


def store_model(model: PotassiumModel, path) -> None:
    _dump_json(model_to_dict(model), path)


def load_model(path) -> PotassiumModel:
    return model_from_dict(_load_json(path), source=str(path))


def _stratum_dict(s: StratumStats) -> dict:
    return {"mae": s.mae, "std": s.std, "count": s.count}


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "strata": {"lt5": _stratum_dict(report.low), "ge5": _stratum_dict(report.high),
                   "all": _stratum_dict(report.all)},
        "weighted_mae": report.weighted_mae,
        "offsets": dict(sorted(report.offsets.items())),
        "wr": report.wr,
        "lambda": report.lam,
        "folds": [{"patient_id": f.patient_id, "train_patients": list(f.train_patients),
                   "offset_sessions": list(f.offset_sessions), "eval_sessions": list(f.eval_sessions),
                   "n_train_rows": f.n_train_rows, "n_eval_rows": f.n_eval_rows, "offset": f.offset,
                   "first_session_residual": f.first_session_residual} for f in report.folds],
    }


def report_from_dict(d: dict, source="report") -> EvaluationReport:
    def stratum(x):
        return StratumStats(mae=x["mae"], std=x["std"], count=int(x["count"]))

    try:
        strata = d["strata"]
        folds = tuple(FoldLog(patient_id=f["patient_id"], train_patients=tuple(f["train_patients"]),
                              offset_sessions=tuple(f["offset_sessions"]),
                              eval_sessions=tuple(f["eval_sessions"]), n_train_rows=f["n_train_rows"],
                              n_eval_rows=f["n_eval_rows"], offset=f["offset"],
                              first_session_residual=f["first_session_residual"])
                      for f in d["folds"])
        return EvaluationReport(low=stratum(strata["lt5"]), high=stratum(strata["ge5"]),
                                all=stratum(strata["all"]), weighted_mae=d["weighted_mae"],
                                offsets=dict(d["offsets"]), wr=d["wr"], lam=d["lambda"], folds=folds)
    except KeyError as exc:
        raise DataError(f"{source}: missing field {exc.args[0]!r}") from None


def store_report(report: EvaluationReport, path) -> None:
    _dump_json(report_to_dict(report), path)


def load_report(path) -> EvaluationReport:
    return report_from_dict(_load_json(path), source=str(path))


def store_sweep(sweep, directory) -> dict:
    """Write ``sweep.csv``, ``sweep.txt`` and ``sweep.json`` for ``[(label, report), ...]``."""
    from .crossval import render_table

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    for label, r in sweep:
        row = {"setting": label}
        for key, s in (("lt5", r.low), ("ge5", r.high), ("all", r.all)):
            row[f"mae_{key}"] = s.mae
            row[f"std_{key}"] = s.std
            row[f"count_{key}"] = s.count
        row["weighted_mae"] = r.weighted_mae
        rows.append(row)
    paths = {"csv": d / "sweep.csv", "txt": d / "sweep.txt", "json": d / "sweep.json"}
    _write_csv(pd.DataFrame(rows), paths["csv"])
    paths["txt"].write_text(render_table(sweep), encoding="utf-8")
    _dump_json({"format_version": FORMAT_VERSION,
                "settings": [{"setting": label, "report": report_to_dict(r)} for label, r in sweep]},
               paths["json"])
    return paths


