"""Blood potassium estimation from ECG T-wave features with density-weighted LASSO."""
from .errors import DataError, KaliumError, NumericError, SignalQualityError
from .records import (BeatTemplate, ConcentrationSample, EcgRecording, EvaluationReport,
                      PotassiumModel, StratumStats, TWaveFeatureRow, WeightingCurve)
from .dsp import FilterSpec, frequency_response, preprocess_signal
from .beats import SegmentSpec, build_template, cut_segment, detect_r_peaks, reduce_leads
from .twave import extract_features, locate_t_wave, twave_features
from .regression import (SolverSettings, build_weighting, fit_model, fit_wlasso, predict,
                         weight_of)
from .crossval import cross_validate, run_sweep
from .synth import SynthConfig, analytic_features, benchmark_config, generate_session

__version__ = "0.1.0"

__all__ = [
    "BeatTemplate", "ConcentrationSample", "DataError", "EcgRecording", "EvaluationReport",
    "FilterSpec", "KaliumError", "NumericError", "PotassiumModel", "SegmentSpec",
    "SignalQualityError", "SolverSettings", "StratumStats", "SynthConfig", "TWaveFeatureRow",
    "WeightingCurve", "analytic_features", "benchmark_config", "build_template",
    "build_weighting", "cross_validate", "cut_segment", "detect_r_peaks", "extract_features",
    "fit_model", "fit_wlasso", "frequency_response", "generate_session", "locate_t_wave",
    "predict", "preprocess_signal", "reduce_leads", "run_sweep", "twave_features", "weight_of",
]
