"""``kalium`` command line: synth, pipeline, fit, crossval, sweep and plot.

All data goes to files and diagnostics go to stderr. Exit codes: 0 success,
1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import io
from .beats import SegmentSpec
from .crossval import TABLE_SETTINGS, cross_validate, render_table, run_sweep
from .dsp import FilterSpec
from .errors import DataError, NumericError
from .regression import DEFAULT_CLAMP, SolverSettings, fit_model

log = logging.getLogger("kalium")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _clamp(text: str):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo,hi but got {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"clamp bounds must satisfy lo < hi, got {text!r}")
    return lo, hi


def _unit_interval(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"wr must lie in [0, 1], got {v}")
    return v


def _wr_list(text: str):
    out = []
    for part in text.split(","):
        part = part.strip().lower()
        out.append(None if part in ("none", "no", "no-weights") else _unit_interval(part))
    if not out:
        raise argparse.ArgumentTypeError("empty wr list")
    return tuple(out)


# -- option groups -------------------------------------------------------------

def _add_filter_args(p):
    d = FilterSpec()
    g = p.add_argument_group("filtering")
    g.add_argument("--hp", type=float, default=d.hp_cutoff, help="highpass cutoff, Hz")
    g.add_argument("--lp", type=float, default=d.lp_cutoff, help="lowpass cutoff, Hz")
    g.add_argument("--notch", type=float, default=d.notch_center, help="notch center, Hz")
    g.add_argument("--notch-sigma", type=float, default=d.notch_sigma, help="notch Gaussian width, Hz")


def _add_segment_args(p):
    d = SegmentSpec()
    g = p.add_argument_group("segmentation")
    g.add_argument("--half-window", type=float, default=d.half_window,
                   help="segment half length around each blood draw, s")
    g.add_argument("--corr-min", type=float, default=d.beat_correlation_min,
                   help="minimum beat-to-median correlation")
    g.add_argument("--causal", action="store_true", help="use the window [t - 2 half_window, t]")


def _add_model_args(p, sweep: bool = False):
    g = p.add_argument_group("regression")
    if sweep:
        g.add_argument("--wr-list", type=_wr_list, default=TABLE_SETTINGS,
                       help="comma-separated wr values, 'none' for unweighted (default none,0,0.5,1)")
    else:
        w = g.add_mutually_exclusive_group()
        w.add_argument("--wr", type=_unit_interval, default=0.0, help="weighting ratio in [0, 1]")
        w.add_argument("--no-weights", action="store_true", help="unweighted least squares")
    g.add_argument("--lambda", dest="lam", type=float, default=SolverSettings().lam, help="L1 weight")
    g.add_argument("--cross-terms", action="store_true", help="full degree-3 basis with cross terms")
    g.add_argument("--clamp", type=_clamp, default=DEFAULT_CLAMP, help="prediction range lo,hi")


def _synth_fields():
    from .synth import SynthConfig
    return [f for f in dataclasses.fields(SynthConfig) if f.name != "seed"]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kalium", description="Potassium estimation from ECG T-wave features.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more diagnostics on stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--out", required=True, type=Path, help="output directory")
    s.add_argument("--seed", type=int, default=None, help="random seed (overrides the config file)")
    s.add_argument("--config", type=Path, help="key = value configuration file")
    g = s.add_argument_group("generator settings (override the config file)")
    for f in _synth_fields():
        g.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar="VALUE",
                       help=f"default {','.join(map(str, f.default)) if isinstance(f.default, tuple) else f.default}")

    s = sub.add_parser("pipeline", help="extract T-wave features from recordings")
    s.add_argument("--data", required=True, type=Path, help="directory of *.ecg.csv / *.k.csv pairs")
    s.add_argument("--out", required=True, type=Path, help="feature table CSV")
    s.add_argument("--templates", type=Path, help="also write the reduced templates (long CSV)")
    _add_filter_args(s)
    _add_segment_args(s)

    s = sub.add_parser("fit", help="fit a model on a feature table")
    s.add_argument("--features", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path, help="model JSON")
    _add_model_args(s)

    s = sub.add_parser("crossval", help="leave-one-patient-out evaluation")
    s.add_argument("--features", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path, help="report JSON")
    _add_model_args(s)

    s = sub.add_parser("sweep", help="cross-validate several weighting settings")
    s.add_argument("--features", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path, help="output directory (sweep.csv/.txt/.json)")
    _add_model_args(s, sweep=True)

    s = sub.add_parser("plot", help="template overlay and weighting figures (SVG + CSV)")
    s.add_argument("--templates", type=Path, help="template CSV written by 'pipeline --templates'")
    s.add_argument("--features", type=Path, help="feature table for the histogram/weighting figure")
    s.add_argument("--patient", help="restrict the template overlay to one patient")
    s.add_argument("--session", type=int, help="restrict the template overlay to one session")
    s.add_argument("--out", required=True, type=Path, help="output directory")
    return p


# -- commands --------------------------------------------------------------------

def _cmd_synth(args):
    from .synth import SynthConfig, read_config_file, write_dataset

    base = read_config_file(args.config) if args.config else SynthConfig()
    values = {f.name: getattr(args, "cfg_" + f.name) for f in _synth_fields()
              if getattr(args, "cfg_" + f.name) is not None}
    if args.seed is not None:
        values["seed"] = args.seed
    elif args.config is None:
        log.warning("no --seed given; using the default seed %d", base.seed)
    merged = {k: ",".join(map(str, v)) if isinstance(v, tuple) else str(v)
              for k, v in dataclasses.asdict(base).items()}
    merged.update(values)
    config = SynthConfig.from_mapping(merged)
    paths = write_dataset(config, args.out)
    log.info("wrote %d sessions to %s", len(paths), args.out)


def _cmd_pipeline(args):
    from .pipeline import run_pipeline

    filt = FilterSpec(hp_cutoff=args.hp, lp_cutoff=args.lp, notch_center=args.notch, notch_sigma=args.notch_sigma)
    seg = SegmentSpec(half_window=args.half_window, beat_correlation_min=args.corr_min, causal=args.causal)
    result = run_pipeline(args.data, args.out, filt, seg, templates_out=args.templates)
    log.info("%d feature rows, %d skipped measurements -> %s", len(result.rows), len(result.skips), args.out)


def _model_kwargs(args):
    return dict(settings=SolverSettings(lam=args.lam), cross_terms=args.cross_terms, clamp=args.clamp)


def _cmd_fit(args):
    rows = io.load_features(args.features)
    model = fit_model(rows, wr=None if args.no_weights else args.wr, **_model_kwargs(args))
    io.store_model(model, args.out)
    log.info("model fitted on %d rows -> %s", len(rows), args.out)


def _cmd_crossval(args):
    rows = io.load_features(args.features)
    report = cross_validate(rows, wr=None if args.no_weights else args.wr, **_model_kwargs(args))
    io.store_report(report, args.out)
    log.info("cross-validation MAE all %.3f -> %s", report.all.mae, args.out)


def _cmd_sweep(args):
    rows = io.load_features(args.features)
    sweep = run_sweep(rows, args.wr_list, **_model_kwargs(args))
    io.store_sweep(sweep, args.out)
    log.info("sweep written to %s\n%s", args.out, render_table(sweep))


def _cmd_plot(args):
    from .pipeline import load_templates
    from .plots import plot_templates, plot_weighting

    if args.templates is None and args.features is None:
        raise UsageError("plot needs --templates and/or --features")
    if args.templates is not None:
        table = load_templates(args.templates)
        if args.patient is not None:
            table = table[table["patient_id"].astype(str) == args.patient]
        if args.session is not None:
            table = table[table["session_index"] == args.session]
        plot_templates(table, args.out)
    if args.features is not None:
        rows = io.load_features(args.features)
        plot_weighting([r.k_value for r in rows], args.out)
    log.info("figures written to %s", args.out)


COMMANDS = {"synth": _cmd_synth, "pipeline": _cmd_pipeline, "fit": _cmd_fit,
            "crossval": _cmd_crossval, "sweep": _cmd_sweep, "plot": _cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    root = logging.getLogger("kalium")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except DataError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
