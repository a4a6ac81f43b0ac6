"""Closed-form optimal encoders for four generative families.

When every class follows the same parametric family with class-specific
parameters, standardizing each class onto one common distribution makes
the encoded message independent of the class. The fits below estimate the
per-class parameters from data and return the corresponding mapping:

=========  =============================  ==========================
family     class model                    encoder
=========  =============================  ==========================
normal     N(mu_c, Sigma_c)               Sigma_c^(-1/2) (x - mu_c)
exp        Exp(rate_c)                    rate_c * x
gamma      Gamma(shape k, scale theta_c)  x / theta_c
uniform    U(a_c, b_c)                    (x - a_c) / (b_c - a_c)
=========  =============================  ==========================

Scalar families are applied coordinatewise with independent parameters per
dimension.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .core import Family, LabeledDataset, NumericError, PrivacyMapping, ValidationError
from .density import Grid, build_histogram, equal_width_grid

GOLDEN_MAX_ITER = 100
SHAPE_BOUNDS = (1e-3, 1e3)


@dataclass
class FitReport:
    """Estimates behind a fitted mapping, for auditing."""

    family: Family
    mapping: PrivacyMapping
    counts: dict[str, int]
    warnings: list[str] = field(default_factory=list)


def matrix_inv_sqrt(m) -> np.ndarray:
    """Symmetric positive-definite inverse square root of ``m``.

    Uses the spectral decomposition ``m = V diag(w) V^T`` and returns
    ``V diag(w^-1/2) V^T``, the unique SPD matrix ``W`` with
    ``W m W^T = I``.

    Raises
    ------
    ValidationError
        If ``m`` is not square or not symmetric to 1e-10 relative.
    NumericError
        If the smallest eigenvalue is not above 1e-12 times the largest.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {m.shape}")
    scale = np.max(np.abs(m)) if m.size else 0.0
    if not np.all(np.isfinite(m)):
        raise NumericError("matrix has non-finite entries")
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-10 * max(scale, np.finfo(float).tiny):
        raise ValidationError("matrix is not symmetric")
    sym = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(sym)
    if w[-1] <= 0 or w[0] <= 1e-12 * w[-1]:
        raise NumericError(
            f"matrix is not positive definite: smallest eigenvalue {w[0]:.3e}, largest {w[-1]:.3e}"
        )
    out = (v / np.sqrt(w)) @ v.T
    return 0.5 * (out + out.T)


def _require_classes(data: LabeledDataset) -> None:
    if len(data) == 0:
        raise ValidationError("dataset is empty")
    data.require_nonempty_classes()


def _require_positive(data: LabeledDataset) -> None:
    bad = data.points <= 0
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise ValidationError(
            f"point {row}, coordinate {col} = {data.points[row, col]!r}: data must be positive"
        )


def fit_normal_report(data: LabeledDataset) -> FitReport:
    _require_classes(data)
    n = data.dimension
    means, whitening, covariances, notes = [], [], [], []
    for i, name in enumerate(data.classes):
        pts = data.points[data.labels == i]
        if len(pts) < n + 1:
            raise NumericError(
                f"class {name!r}: {len(pts)} points cannot give a non-singular "
                f"covariance in dimension {n} (need {n + 1})"
            )
        mu = pts.mean(axis=0)
        cov = np.atleast_2d(np.cov(pts, rowvar=False, ddof=1))
        try:
            w = matrix_inv_sqrt(cov)
        except NumericError as exc:
            raise NumericError(f"class {name!r}: singular covariance ({exc})") from None
        eig = np.linalg.eigvalsh(cov)
        if eig[0] < 1e-8 * eig[-1]:
            notes.append(f"class {name}: near-singular covariance (condition {eig[-1] / eig[0]:.2e})")
        means.append(mu)
        whitening.append(w)
        covariances.append(cov)
    mapping = PrivacyMapping(
        Family.NORMAL,
        data.classes,
        {"mean": means, "whitening": whitening, "covariance": covariances},
    )
    return FitReport(Family.NORMAL, mapping, _counts(data), notes)


def fit_normal(data: LabeledDataset) -> PrivacyMapping:
    """Whiten each class with its sample mean and unbiased covariance."""
    report = fit_normal_report(data)
    _warn(report.warnings)
    return report.mapping


def fit_exponential(data: LabeledDataset) -> PrivacyMapping:
    """Per class and dimension, rate = 1 / sample mean (the MLE)."""
    _require_classes(data)
    _require_positive(data)
    rates = [1.0 / data.points[data.labels == i].mean(axis=0) for i in range(data.n_classes)]
    return PrivacyMapping(Family.EXPONENTIAL, data.classes, {"rate": rates})


def _golden_max(f, lo: float, hi: float, tol: float = 1e-10) -> float:
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(GOLDEN_MAX_ITER):
        if b - a <= tol * (1.0 + abs(a) + abs(b)):
            return 0.5 * (a + b)
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    raise NumericError(f"shape estimation did not converge in {GOLDEN_MAX_ITER} iterations")


def estimate_shared_shape(data: LabeledDataset) -> np.ndarray:
    """Common gamma shape per dimension by pooled profile likelihood.

    For a fixed shape ``k`` the scale MLE of class ``c`` is ``mean_c / k``.
    Substituting it gives a profile log-likelihood summed over classes,
    maximized by golden-section search on ``log k`` over [1e-3, 1e3].
    """
    _require_classes(data)
    _require_positive(data)
    shapes = np.empty(data.dimension)
    stats = []
    for i in range(data.n_classes):
        pts = data.points[data.labels == i]
        stats.append((len(pts), pts.mean(axis=0), np.log(pts).mean(axis=0)))
    for j in range(data.dimension):

        def profile(log_k, j=j):
            k = math.exp(log_k)
            total = 0.0
            for n_c, mean, mean_log in stats:
                total += n_c * (
                    (k - 1.0) * mean_log[j] - k - k * math.log(mean[j] / k) - gammaln(k)
                )
            return total

        shapes[j] = math.exp(_golden_max(profile, *map(math.log, SHAPE_BOUNDS)))
    return shapes


def fit_gamma(data: LabeledDataset, shared_shape=None) -> PrivacyMapping:
    """Scale per class and dimension = sample mean / shape.

    ``shared_shape`` (scalar or per-dimension) is estimated from the pooled
    data when omitted.
    """
    _require_classes(data)
    _require_positive(data)
    if shared_shape is None:
        shape = estimate_shared_shape(data)
    else:
        shape = np.broadcast_to(np.asarray(shared_shape, dtype=float), (data.dimension,)).copy()
        if np.any(shape <= 0) or not np.all(np.isfinite(shape)):
            raise ValidationError("shared shape must be positive and finite")
    scales = [data.points[data.labels == i].mean(axis=0) / shape for i in range(data.n_classes)]
    return PrivacyMapping(Family.GAMMA, data.classes, {"shape": shape, "scale": scales})


def fit_uniform(data: LabeledDataset) -> PrivacyMapping:
    """Per class and dimension, the interval [sample min, sample max]."""
    _require_classes(data)
    lows, highs = [], []
    for i, name in enumerate(data.classes):
        pts = data.points[data.labels == i]
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        flat = np.flatnonzero(hi <= lo)
        if flat.size:
            raise ValidationError(f"class {name!r}: degenerate dimension {int(flat[0])} (max = min)")
        lows.append(lo)
        highs.append(hi)
    return PrivacyMapping(Family.UNIFORM, data.classes, {"low": lows, "high": highs})


FITTERS = {
    Family.NORMAL: fit_normal,
    Family.EXPONENTIAL: fit_exponential,
    Family.GAMMA: fit_gamma,
    Family.UNIFORM: fit_uniform,
}


def fit(data: LabeledDataset, family: Family | str) -> PrivacyMapping:
    family = Family(family)
    if family not in FITTERS:
        raise ValidationError(f"no closed-form fit for family {family.value!r}")
    return FITTERS[family](data)


def standardization_check(encoded: LabeledDataset, bins: Grid | int | list[int] = 20) -> float:
    """Largest total-variation distance between two class histograms.

    ``bins`` is either a ready grid or per-dimension bin counts for an
    equal-width grid spanning the pooled data. A value near 0 means every
    class has (empirically) the same encoded distribution.
    """
    if encoded.n_classes < 2:
        raise ValidationError("need at least two classes")
    _require_classes(encoded)
    grid = bins if isinstance(bins, Grid) else equal_width_grid(encoded.points, bins)
    model = build_histogram(encoded, grid)
    cond = model.conditionals
    worst = 0.0
    for a in range(len(cond)):
        for b in range(a + 1, len(cond)):
            worst = max(worst, 0.5 * float(np.abs(cond[a] - cond[b]).sum()))
    return min(worst, 1.0)


def _counts(data: LabeledDataset) -> dict[str, int]:
    return dict(zip(data.classes, map(int, data.class_counts())))


def _warn(notes: list[str]) -> None:
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=3)
