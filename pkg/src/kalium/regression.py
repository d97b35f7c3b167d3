"""Density-weighted, L1-regularised polynomial regression of [K+] on T-wave features.

The fitted objective is::

    J(x) = 0.5 * || w * (A x - b) ||_2^2 + lam * || x[1:] ||_1

where ``A`` is a per-feature power expansion (degrees 1..3 plus an intercept)
of z-scored features, ``b`` the measured concentrations and ``w`` a weight per
sample that shrinks where concentrations are frequent.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import DataError, NumericError
from .records import PotassiumModel, TWaveFeatureRow, WeightingCurve

log = logging.getLogger(__name__)

DEFAULT_BANDWIDTH = 0.25
DEFAULT_CLAMP = (1.5, 9.0)
N_FEATURES = 3


@dataclass(frozen=True)
class SolverSettings:
    lam: float = 0.9
    max_iterations: int = 10000
    tolerance: float = 1e-8
    penalize_intercept: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise DataError(f"lambda must be non-negative, got {self.lam}")
        if not self.tolerance > 0:
            raise DataError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise DataError("max_iterations must be at least 1")


@dataclass(frozen=True)
class FitInfo:
    coefficients: np.ndarray
    iterations: int
    converged: bool
    history: Optional[list] = None


# -- weighting ---------------------------------------------------------------

def build_weighting(training_values, wr: float, bandwidth: float = DEFAULT_BANDWIDTH) -> WeightingCurve:
    """Fit the weighting curve on the concentrations of a training split."""
    values = np.asarray(training_values, dtype=np.float64).ravel()
    if values.size == 0:
        raise DataError("cannot build a weighting curve from an empty training set")
    if not np.all(np.isfinite(values)):
        raise DataError("training concentrations must be finite")
    density = _kernels.kde_sum(values, values, bandwidth)
    return WeightingCurve(bandwidth=float(bandwidth), wr=float(wr), training_values=values,
                          normalizer=float(density.max()))


def relative_density(curve: WeightingCurve, c):
    """Kernel density at ``c`` divided by its maximum over the training values, clipped to [0, 1]."""
    c = np.asarray(c, dtype=np.float64)
    d = _kernels.kde_sum(c.ravel(), curve.training_values, curve.bandwidth)
    return np.clip(d / curve.normalizer, 0.0, 1.0).reshape(c.shape)


def weight_of(curve: WeightingCurve, c):
    """Error weight for concentration(s) ``c``.

    ``w(c) = 1 - (1 + wr) / 2 * h(c)`` with ``h`` the relative density, so the
    most frequent training value gets ``(1 - wr) / 2`` and values far from all
    training data approach 1.
    """
    if curve.training_values.size == 0:
        raise DataError("weighting curve has no training values")
    w = 1.0 - 0.5 * (1.0 + curve.wr) * relative_density(curve, c)
    return float(w) if np.ndim(w) == 0 else w


# -- design ------------------------------------------------------------------

def _monomials(cross_terms: bool):
    if not cross_terms:
        return [(j,) * d for j in range(N_FEATURES) for d in (1, 2, 3)]
    return [m for d in (1, 2, 3)
            for m in itertools.combinations_with_replacement(range(N_FEATURES), d)]


def expand(z, cross_terms: bool = False) -> np.ndarray:
    """Polynomial expansion of standardized features ``z`` (n x 3).

    Columns are ``[1, z1, z1^2, z1^3, z2, ..., z3^3]``; with ``cross_terms`` the
    full total-degree-3 basis (20 columns) is produced instead.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] != N_FEATURES:
        raise DataError(f"expected {N_FEATURES} features per row, got {z.shape[1]}")
    cols = [np.ones(z.shape[0])]
    for mono in _monomials(cross_terms):
        col = np.ones(z.shape[0])
        for j in mono:
            col = col * z[:, j]
        cols.append(col)
    return np.column_stack(cols)


def feature_matrix(rows: Sequence[TWaveFeatureRow]) -> np.ndarray:
    return np.array([r.features for r in rows], dtype=np.float64).reshape(-1, N_FEATURES)


def feature_stats(rows: Sequence[TWaveFeatureRow]):
    """Means and population standard deviations of the three features."""
    X = feature_matrix(rows)
    if X.shape[0] == 0:
        raise DataError("no feature rows")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    if np.any(stds <= 1e-12 * np.maximum(np.abs(means), 1.0)):
        raise DataError("zero feature variance in training split")
    return means, stds


def build_design(rows: Sequence[TWaveFeatureRow], means, stds, cross_terms: bool = False):
    """Return ``(A, b)`` for rows standardized with the given training statistics."""
    stds = np.asarray(stds, dtype=np.float64)
    if np.any(stds <= 0):
        raise DataError("zero feature variance in training split")
    z = (feature_matrix(rows) - np.asarray(means)) / stds
    b = np.array([r.k_value for r in rows], dtype=np.float64)
    return expand(z, cross_terms), b


# -- solver ------------------------------------------------------------------

def fit_wlasso(A, b, w=None, settings: SolverSettings = SolverSettings(),
               has_intercept: bool = True, record: bool = False, backend: Optional[str] = None):
    """Minimise ``0.5 |w * (A x - b)|^2 + lam |x|_1`` by accelerated proximal gradient.

    Parameters
    ----------
    A : (n, p) array
        Design matrix.
    b : (n,) array
        Targets.
    w : (n,) array, optional
        Non-negative error weights; ``None`` means all ones.
    settings : SolverSettings
    has_intercept : bool
        Column 0 is an intercept; it is left unpenalised unless
        ``settings.penalize_intercept``.
    record : bool
        Return a :class:`FitInfo` with every accepted iterate instead of the
        bare coefficient vector.
    backend : {"cython", "python"}, optional
        Force a kernel implementation; the default is the active one.

    Notes
    -----
    The solver works on the weighted Gram matrix, so iteration cost is
    independent of ``n``. When the Gram matrix is nonsingular the stop is a
    certified bound ``|x - x*|_2 <= tolerance``; otherwise the relative
    objective decrease of a plain proximal step is compared to the tolerance.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise DataError(f"shape mismatch: A {A.shape}, b {b.shape}")
    w = np.ones_like(b) if w is None else np.asarray(w, dtype=np.float64)
    if w.shape != b.shape:
        raise DataError(f"shape mismatch: w {w.shape}, b {b.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(w))):
        raise NumericError("non-finite values in solver input")
    if np.any(w < 0):
        raise DataError("weights must be non-negative")
    if not np.any(w > 0):
        raise NumericError("all weights are zero")

    Aw = A * w[:, None]
    bw = b * w
    G = Aw.T @ Aw
    c = Aw.T @ bw
    eig = np.linalg.eigvalsh(G)
    lmax = float(eig[-1])
    mu = float(max(eig[0], 0.0))
    p = A.shape[1]
    L0 = max(float(np.trace(G)) / p, np.finfo(float).tiny)
    penalized = np.ones(p, dtype=bool)
    if has_intercept and not settings.penalize_intercept:
        penalized[0] = False

    if backend is None:
        kernel = _kernels.wlasso_gram
    else:
        impls = _kernels.backends()
        if backend not in impls:
            raise DataError(f"kernel backend {backend!r} unavailable (have {sorted(impls)})")
        kernel = impls[backend].wlasso_gram
    x, iters, converged, history = kernel(
        G, c, float(bw @ bw), penalized, float(settings.lam), L0, max(lmax, L0), mu,
        int(settings.max_iterations), float(settings.tolerance), record)
    if not np.all(np.isfinite(x)):
        raise NumericError("solver diverged to non-finite coefficients")
    if not converged:
        log.debug("wlasso stopped at max_iterations=%d without meeting tolerance", iters)
    if record:
        return FitInfo(coefficients=x, iterations=iters, converged=converged, history=history)
    return x


def objective(A, b, w, x, lam, has_intercept=True, penalize_intercept=False):
    """Evaluate J(x) directly from residuals."""
    A = np.asarray(A, dtype=np.float64)
    w = np.ones(A.shape[0]) if w is None else np.asarray(w, dtype=np.float64)
    r = w * (A @ x - b)
    pen = np.abs(x[1:] if has_intercept and not penalize_intercept else x).sum()
    return 0.5 * float(r @ r) + lam * float(pen)


# -- model ------------------------------------------------------------------

def fit_model(rows: Sequence[TWaveFeatureRow], wr: Optional[float] = 0.0,
              settings: SolverSettings = SolverSettings(),
              bandwidth: float = DEFAULT_BANDWIDTH, cross_terms: bool = False,
              clamp=DEFAULT_CLAMP) -> PotassiumModel:
    """Fit a :class:`PotassiumModel` on ``rows``; ``wr=None`` gives the unweighted fit."""
    if len(rows) == 0:
        raise DataError("cannot fit a model without training rows")
    means, stds = feature_stats(rows)
    A, b = build_design(rows, means, stds, cross_terms)
    if wr is None:
        curve = None
        w = None
    else:
        curve = build_weighting(b, wr, bandwidth)
        w = weight_of(curve, b)
    x = fit_wlasso(A, b, w, settings)
    return PotassiumModel(feature_means=means, feature_stds=stds, coefficients=x,
                          lam=settings.lam, wr=None if wr is None else float(wr),
                          weighting=curve, clamp_range=tuple(clamp), cross_terms=cross_terms)


def raw_predict(model: PotassiumModel, features) -> np.ndarray:
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite features")
    z = (X - model.feature_means) / model.feature_stds
    return expand(z, model.cross_terms) @ model.coefficients


def predict(model: PotassiumModel, features):
    """Predicted [K+] in mmol/l, clamped to the model's ``clamp_range``.

    ``features`` is one (amplitude, asc slope, desc slope) triple or an
    (n, 3) array; a scalar is returned for a single triple.
    """
    scalar = np.ndim(features) == 1
    out = np.clip(raw_predict(model, features), *model.clamp_range)
    return float(out[0]) if scalar else out


def predict_rows(model: PotassiumModel, rows: Sequence[TWaveFeatureRow]) -> np.ndarray:
    return predict(model, feature_matrix(rows))


def compute_offset(model: PotassiumModel, first_session_rows: Sequence[TWaveFeatureRow]) -> float:
    """Mean signed error ``k - prediction`` over a patient's first session."""
    if len(first_session_rows) == 0:
        raise DataError("empty first session: cannot calibrate patient offset")
    truth = np.array([r.k_value for r in first_session_rows])
    return float(np.mean(truth - predict_rows(model, first_session_rows)))
