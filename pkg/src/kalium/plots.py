"""Deterministic SVG figures with their plotted data as CSV.

Two figure types: an overlay of beat templates color-graded by [K+], and a
concentration histogram with weighting curves for several wr values.
"""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
import pandas as pd

from .errors import DataError
from .regression import DEFAULT_BANDWIDTH, build_weighting, relative_density, weight_of

WIDTH, HEIGHT = 640, 400
MARGIN = 50
CURVE_WRS = (0.0, 0.5, 1.0)
CURVE_COLORS = ("#1b9e77", "#d95f02", "#7570b3")
HIST_BIN = 0.25  # mmol/l
LOW_COLOR = (0x2c, 0x7b, 0xb6)
HIGH_COLOR = (0xd7, 0x19, 0x1c)


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def k_color(k: float, k_min: float, k_max: float) -> str:
    """Hex color on a blue (low) to red (high) ramp."""
    f = 0.0 if k_max <= k_min else (k - k_min) / (k_max - k_min)
    f = min(max(f, 0.0), 1.0)
    rgb = [round(lo + f * (hi - lo)) for lo, hi in zip(LOW_COLOR, HIGH_COLOR)]
    return "#" + "".join(f"{c:02x}" for c in rgb)


class _Axes:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0

    def px(self, x):
        return MARGIN + (np.asarray(x) - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * MARGIN)

    def py(self, y):
        return HEIGHT - MARGIN - (np.asarray(y) - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * MARGIN)

    def frame(self, xlabel: str, ylabel: str) -> list:
        b = HEIGHT - MARGIN
        out = [f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
               f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="#000"/>']
        for v in np.linspace(self.x0, self.x1, 5):
            out.append(f'<text x="{_fmt(self.px(v))}" y="{b + 16}" font-size="11" '
                       f'text-anchor="middle">{v:.3g}</text>')
        for v in np.linspace(self.y0, self.y1, 5):
            out.append(f'<text x="{MARGIN - 6}" y="{_fmt(self.py(v) + 4)}" font-size="11" '
                       f'text-anchor="end">{v:.3g}</text>')
        out.append(f'<text x="{WIDTH / 2:g}" y="{HEIGHT - 10}" font-size="12" '
                   f'text-anchor="middle">{escape(xlabel)}</text>')
        out.append(f'<text x="14" y="{HEIGHT / 2:g}" font-size="12" text-anchor="middle" '
                   f'transform="rotate(-90 14 {HEIGHT / 2:g})">{escape(ylabel)}</text>')
        return out

    def polyline(self, x, y, color: str, extra: str = "") -> str:
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(self.px(x), self.py(y)))
        return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.2"{extra}/>'


def _document(title: str, body: list) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">')
    return "\n".join([head, f"<title>{escape(title)}</title>",
                      f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#fff"/>', *body, "</svg>"]) + "\n"


def _write(text: str, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def plot_templates(table: pd.DataFrame, out_dir, stem: str = "templates") -> dict:
    """Overlay of beat templates, one polyline per measurement.

    ``table`` is the long-format template table written by the pipeline
    (columns patient_id, session_index, time_s, k_mmol_l, t_rel_s, mv).
    Returns the written SVG and CSV paths.
    """
    if table is None or len(table) == 0:
        raise DataError("no templates to plot")
    keys = ["patient_id", "session_index", "time_s"]
    table = table.sort_values(keys + ["t_rel_s"], kind="mergesort").reset_index(drop=True)
    groups = list(table.groupby(keys, sort=True))
    k_all = table["k_mmol_l"].to_numpy(dtype=np.float64)
    k_min, k_max = float(k_all.min()), float(k_all.max())
    mv = table["mv"].to_numpy(dtype=np.float64)
    ax = _Axes((float(table["t_rel_s"].min()), float(table["t_rel_s"].max())),
               (float(mv.min()), float(mv.max())))
    body = ax.frame("time relative to R (s)", "amplitude (mV)")
    for (pid, sess, t), g in groups:
        k = float(g["k_mmol_l"].iloc[0])
        label = f' data-k="{k:.2f}" data-id="{escape(str(pid))}/s{int(sess)}/t{t:g}"'
        body.append(ax.polyline(g["t_rel_s"].to_numpy(), g["mv"].to_numpy(), k_color(k, k_min, k_max), label))
    out = Path(out_dir)
    paths = {"svg": out / f"{stem}.svg", "csv": out / f"{stem}.csv"}
    _write(_document(f"Beat templates, K {k_min:.2f} to {k_max:.2f} mmol/l", body), paths["svg"])
    table.to_csv(paths["csv"], index=False, lineterminator="\n", encoding="utf-8")
    return paths


def weighting_curves(k_values, wr_list=CURVE_WRS, bandwidth: float = DEFAULT_BANDWIDTH,
                     n_grid: int = 201) -> pd.DataFrame:
    """Weight of each wr on a concentration grid that contains the densest training value."""
    k = np.asarray(k_values, dtype=np.float64)
    if k.size == 0:
        raise DataError("no concentration values to plot")
    base = build_weighting(k, 0.0, bandwidth)
    mode = float(k[np.argmax(relative_density(base, k))])
    lo, hi = float(k.min()) - 3 * bandwidth, float(k.max()) + 3 * bandwidth
    grid = np.union1d(np.linspace(lo, hi, n_grid), [mode])
    cols = {"k_mmol_l": grid, "is_mode": (grid == mode).astype(int)}
    for wr in wr_list:
        cols[f"w_wr{wr:g}"] = weight_of(build_weighting(k, wr, bandwidth), grid)
    return pd.DataFrame(cols)


def concentration_histogram(k_values, bin_width: float = HIST_BIN) -> pd.DataFrame:
    k = np.asarray(k_values, dtype=np.float64)
    if k.size == 0:
        raise DataError("no concentration values to plot")
    lo = np.floor(k.min() / bin_width) * bin_width
    hi = np.ceil(k.max() / bin_width) * bin_width
    n_bins = max(1, int(round((hi - lo) / bin_width)))
    edges = lo + bin_width * np.arange(n_bins + 1)
    edges[-1] = max(edges[-1], k.max())
    counts, _ = np.histogram(k, bins=edges)
    return pd.DataFrame({"bin_lo": edges[:-1], "bin_hi": edges[1:], "count": counts})


def plot_weighting(k_values, out_dir, wr_list=CURVE_WRS, bandwidth: float = DEFAULT_BANDWIDTH,
                   stem: str = "weighting") -> dict:
    """Histogram of concentrations with overlaid weighting curves (right axis 0..1)."""
    hist = concentration_histogram(k_values)
    curves = weighting_curves(k_values, wr_list, bandwidth)
    ax = _Axes((float(curves["k_mmol_l"].min()), float(curves["k_mmol_l"].max())),
               (0.0, float(hist["count"].max())))
    wax = _Axes((ax.x0, ax.x1), (0.0, 1.0))
    body = ax.frame("[K+] (mmol/l)", "count")
    for lo, hi, c in hist.itertuples(index=False):
        x0, x1 = ax.px(lo), ax.px(hi)
        y = ax.py(c)
        body.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y)}" width="{_fmt(x1 - x0)}" '
                    f'height="{_fmt(ax.py(0) - y)}" fill="#bbb" stroke="#888"/>')
    colors = CURVE_COLORS * (len(wr_list) // len(CURVE_COLORS) + 1)
    for wr, color in zip(wr_list, colors):
        body.append(wax.polyline(curves["k_mmol_l"].to_numpy(), curves[f"w_wr{wr:g}"].to_numpy(),
                                 color, f' data-wr="{wr:g}"'))
    out = Path(out_dir)
    paths = {"svg": out / f"{stem}.svg", "csv": out / f"{stem}.csv", "hist_csv": out / f"{stem}_hist.csv"}
    _write(_document("Concentration histogram and weighting curves", body), paths["svg"])
    curves.to_csv(paths["csv"], index=False, lineterminator="\n", encoding="utf-8")
    hist.to_csv(paths["hist_csv"], index=False, lineterminator="\n", encoding="utf-8")
    return paths
