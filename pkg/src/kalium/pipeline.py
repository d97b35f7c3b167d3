"""Recording-to-feature-table orchestration."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import pandas as pd

from . import io
from .beats import SegmentSpec, build_template, cut_segment, detect_r_peaks, reduce_leads
from .crossval import worker_count
from .dsp import FilterSpec, preprocess_signal
from .errors import DataError
from .records import BeatTemplate, EcgRecording, TWaveFeatureRow
from .twave import SMOOTHING_HZ, extract_features, locate_t_wave

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SkipRecord:
    patient_id: str
    session_index: int
    time_s: float
    reason: str


@dataclass(frozen=True, eq=False)
class MeasurementTemplate:
    patient_id: str
    session_index: int
    time_s: float
    k_value: float
    template: BeatTemplate


@dataclass
class PipelineResult:
    rows: list = field(default_factory=list)
    skips: list = field(default_factory=list)
    templates: list = field(default_factory=list)

    def extend(self, other: "PipelineResult") -> None:
        self.rows += other.rows
        self.skips += other.skips
        self.templates += other.templates


def measurement_template(filtered: EcgRecording, r_peaks, t: float,
                         segment_spec: SegmentSpec = SegmentSpec()) -> BeatTemplate:
    """Reduced beat template for the segment around ``t`` of a filtered recording."""
    seg = cut_segment(filtered, t, segment_spec)
    n = seg.samples.shape[1]
    local = r_peaks[(r_peaks >= seg.start_index) & (r_peaks < seg.start_index + n)] - seg.start_index
    fs = filtered.sampling_rate
    lead_templates = [build_template(lead, fs, local, segment_spec) for lead in seg.samples]
    reduced, _ = reduce_leads(lead_templates)
    return reduced


def process_recording(recording: EcgRecording, annotations,
                      filter_spec: FilterSpec = FilterSpec(),
                      segment_spec: SegmentSpec = SegmentSpec(),
                      cutoff: float = SMOOTHING_HZ) -> PipelineResult:
    """Filter, detect beats and extract one feature row per annotation.

    Measurements that fail a quality gate end up in ``skips`` with the reason.
    """
    fs = recording.sampling_rate
    filtered = EcgRecording(recording.patient_id, recording.session_index, fs,
                            recording.lead_names, preprocess_signal(recording.samples, fs, filter_spec))
    r_peaks = detect_r_peaks(filtered.samples, fs)
    result = PipelineResult()
    pid, sess = recording.patient_id, recording.session_index
    for ann in sorted(annotations):
        try:
            tpl = measurement_template(filtered, r_peaks, ann.time, segment_spec)
            marks = locate_t_wave(tpl, cutoff)
            amp, asc, desc = extract_features(tpl, marks, cutoff)
        except DataError as exc:
            log.warning("skipped %s session %d at t=%g s: %s", pid, sess, ann.time, exc)
            result.skips.append(SkipRecord(pid, sess, ann.time, str(exc)))
            continue
        result.rows.append(TWaveFeatureRow(pid, sess, ann.time, amp, asc, desc, ann.value))
        result.templates.append(MeasurementTemplate(pid, sess, ann.time, ann.value, tpl))
    return result


def discover(data_dir) -> list:
    """Sorted ``(signal_path, annotation_path)`` pairs found in ``data_dir``."""
    d = Path(data_dir)
    if not d.is_dir():
        raise DataError(f"data directory not found: {d}")
    found = []
    for sig in d.glob("*.ecg.csv"):
        parsed = io.parse_signal_name(sig)
        if parsed is None:
            raise DataError(f"cannot parse patient/session from {sig.name} "
                            "(expected <patient>_s<session>.ecg.csv)")
        ann = io.dataset_paths(d, *parsed)[1]
        if not ann.is_file():
            raise DataError(f"missing annotation file {ann.name} for {sig.name}")
        found.append((parsed, sig, ann))
    if not found:
        raise DataError(f"no recordings (*.ecg.csv) found in {d}")
    return [(sig, ann) for _, sig, ann in sorted(found, key=lambda x: x[0])]


def run_pipeline(data_dir, out_path=None, filter_spec: FilterSpec = FilterSpec(),
                 segment_spec: SegmentSpec = SegmentSpec(), cutoff: float = SMOOTHING_HZ,
                 threads: Optional[int] = None, templates_out=None) -> PipelineResult:
    """Process every recording in ``data_dir`` into a feature table.

    Writes the table to ``out_path`` and the skip log next to it
    (``<out_path stem>.skipped.csv``) when a path is given.
    """
    pairs = discover(data_dir)

    def one(pair):
        sig, ann = pair
        return process_recording(io.load_recording(sig), io.load_annotations(ann),
                                 filter_spec, segment_spec, cutoff)

    n = min(threads or worker_count(), len(pairs))
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            parts = list(pool.map(one, pairs))
    else:
        parts = [one(p) for p in pairs]
    result = PipelineResult()
    for part in parts:
        result.extend(part)
    if out_path is not None:
        out_path = Path(out_path)
        store_skips(result.skips, skip_log_path(out_path))
        if templates_out is not None:
            store_templates(result.templates, templates_out)
    if not result.rows:
        raise DataError(f"all {len(result.skips)} measurements were rejected")
    if out_path is not None:
        io.store_features(result.rows, out_path)
    return result


def skip_log_path(features_path) -> Path:
    p = Path(features_path)
    return p.with_name(p.name[:-4] + ".skipped.csv" if p.name.endswith(".csv") else p.name + ".skipped.csv")


def store_skips(skips, path) -> None:
    df = pd.DataFrame([(s.patient_id, s.session_index, s.time_s, s.reason) for s in skips],
                      columns=["patient_id", "session_index", "time_s", "reason"])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


TEMPLATE_COLUMNS = ["patient_id", "session_index", "time_s", "k_mmol_l", "t_rel_s", "mv"]


def store_templates(templates, path) -> None:
    """Long-format CSV of reduced templates, one row per template sample."""
    frames = []
    for m in templates:
        tpl = m.template
        frames.append(pd.DataFrame({
            "patient_id": m.patient_id, "session_index": m.session_index, "time_s": m.time_s,
            "k_mmol_l": m.k_value, "t_rel_s": tpl.times, "mv": tpl.waveform}))
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=TEMPLATE_COLUMNS)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def load_templates(path) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip") if Path(path).is_file() else None
    if df is None:
        raise DataError(f"missing file: {path}")
    if list(df.columns) != TEMPLATE_COLUMNS:
        raise DataError(f"malformed template table header in {path}")
    return df


def features_from_synth(config, filter_spec: FilterSpec = FilterSpec(),
                        segment_spec: SegmentSpec = SegmentSpec(), threads: Optional[int] = None):
    """Run the pipeline on a synthetic dataset in memory (no CSV round trip)."""
    from .synth import generate_session, iter_sessions

    sessions = list(iter_sessions(config))

    def one(ps):
        rec, ann = generate_session(config, *ps)
        return process_recording(rec, ann, filter_spec, segment_spec)

    n = min(threads or worker_count(), len(sessions))
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            parts = list(pool.map(one, sessions))
    else:
        parts = [one(ps) for ps in sessions]
    result = PipelineResult()
    for part in parts:
        result.extend(part)
    return result
