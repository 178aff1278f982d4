"""KL divergence, Frechet distance between fitted Gaussians, box-plot summaries."""
from dataclasses import asdict, dataclass, field
import math

import numpy as np

from .errors import InsufficientSamplesError, NumericalInstabilityError, ShapeError

KL_EPS = 1e-12
SHRINKAGE = 1e-3


def kl_divergence(p, q, with_flag=False):
    """``sum p log(p / q)`` with ``0 log 0 = 0``.

    When ``q`` vanishes where ``p`` does not, ``KL_EPS`` is added to ``q``
    before renormalising; ``with_flag=True`` also returns whether that
    happened.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ShapeError(f"distributions differ in shape: {p.shape} vs {q.shape}")
    smoothed = bool(np.any((q <= 0) & (p > 0)))
    if smoothed:
        q = q + KL_EPS
        q = q / q.sum()
    mask = p > 0
    value = float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
    value = max(value, 0.0)
    return (value, smoothed) if with_flag else value


def histogram(levels, k: int) -> np.ndarray:
    """Normalised frequency of each level ``0 .. k-1``."""
    counts = np.bincount(np.asarray(levels).ravel(), minlength=k).astype(float)
    return counts / counts.sum()


def sqrtm_psd(m, sym_tol=1e-10):
    m = np.asarray(m, dtype=float)
    asym = np.abs(m - m.T).max() if m.size else 0.0
    if asym > sym_tol * max(1.0, np.abs(m).max()):
        raise ShapeError(f"matrix is not symmetric (max asymmetry {asym:.2e})")
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def fit_gaussian(features, shrinkage=SHRINKAGE):
    """Mean and shrinkage-regularised unbiased covariance of the rows of ``features``."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, np.newaxis]
    if x.shape[0] < 2:
        raise InsufficientSamplesError("need at least two samples to fit a covariance")
    if not np.all(np.isfinite(x)):
        raise ShapeError("features contain non-finite values")
    mu = x.mean(axis=0)
    sigma = np.atleast_2d(np.cov(x, rowvar=False))
    d = sigma.shape[0]
    sigma = (1 - shrinkage) * sigma + shrinkage * np.trace(sigma) / d * np.eye(d)
    return mu, sigma


def frechet_terms(mu1, sigma1, mu2, sigma2):
    """Return ``(|mu1 - mu2|^2, tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2))``."""
    mu1, mu2 = np.atleast_1d(mu1), np.atleast_1d(mu2)
    sigma1, sigma2 = np.atleast_2d(sigma1), np.atleast_2d(sigma2)
    if mu1.shape != mu2.shape:
        raise ShapeError(f"feature dimensions differ: {mu1.shape} vs {mu2.shape}")
    root1 = sqrtm_psd(sigma1)
    middle = root1 @ sigma2 @ root1
    cross = np.trace(sqrtm_psd(0.5 * (middle + middle.T)))
    mean_term = float(np.sum((mu1 - mu2) ** 2))
    return mean_term, float(np.trace(sigma1) + np.trace(sigma2) - 2 * cross)


def frechet_from_moments(mu1, sigma1, mu2, sigma2) -> float:
    mean_term, cov_term = frechet_terms(mu1, sigma1, mu2, sigma2)
    d = mean_term + cov_term
    if d < 0:
        scale = max(1.0, float(np.trace(np.atleast_2d(sigma1)) + np.trace(np.atleast_2d(sigma2))))
        if d < -1e-8 * scale:
            raise NumericalInstabilityError(f"negative Frechet distance {d:.3e}")
        d = 0.0
    return d


def frechet_distance(a, b, shrinkage=SHRINKAGE, feature_map=None) -> float:
    """Frechet distance between Gaussians fitted to two sample sets.

    ``feature_map`` (optional) is applied to each set first; by default the
    rows are used as they are, e.g. flattened pixel levels.
    """
    if feature_map is not None:
        a, b = feature_map(a), feature_map(b)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a.reshape(len(a), -1)
    b = b.reshape(len(b), -1)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    return frechet_from_moments(*fit_gaussian(a, shrinkage), *fit_gaussian(b, shrinkage))


@dataclass
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: list = field(default_factory=list)
    mean: float = 0.0
    sem: float = 0.0

    def to_dict(self):
        return asdict(self)


def boxplot_stats(values) -> BoxStats:
    """Tukey box-plot summary; quantiles interpolate linearly between order statistics."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size < 5:
        raise InsufficientSamplesError(f"box statistics need at least 5 values, got {x.size}")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo) & (x <= hi)]
    return BoxStats(
        median=float(med), q1=float(q1), q3=float(q3),
        whisker_low=float(inside.min()), whisker_high=float(inside.max()),
        outliers=[float(v) for v in x[(x < lo) | (x > hi)]],
        mean=float(x.mean()),
        sem=float(x.std(ddof=1) / math.sqrt(x.size)),
    )
