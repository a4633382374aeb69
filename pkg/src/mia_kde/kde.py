"""Univariate Gaussian kernel density estimation."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_1d

BANDWIDTH_FLOOR = 1e-9
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
# queries x samples evaluated per chunk; bounds the temporary matrix
_CHUNK_ELEMENTS = 1 << 22


def scott_bandwidth(samples) -> tuple[float, bool]:
    """Scott's rule ``sd * n ** (-1/5)`` with the n-1 standard deviation.

    Returns ``(h, degenerate)``. Constant samples give ``h = 1e-9`` and
    ``degenerate = True``.
    """
    x = check_1d(samples, "samples")
    if len(x) < 2:
        raise ValueError("Scott's rule needs at least 2 samples")
    sd = float(np.std(x, ddof=1))
    if not sd >= BANDWIDTH_FLOOR:
        return BANDWIDTH_FLOOR, True
    return sd * len(x) ** (-1 / 5), False


def resolve_bandwidth(samples, bandwidth) -> tuple[float, bool]:
    if isinstance(bandwidth, str):
        if bandwidth != "scott":
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
        return scott_bandwidth(samples)
    h = float(bandwidth)
    if not (math.isfinite(h) and h > 0):
        raise ValueError(f"bandwidth must be a positive number, got {bandwidth!r}")
    return h, False


def gaussian_kde_density(samples: np.ndarray, h: float, x) -> np.ndarray:
    """Evaluate ``1/(n h) * sum_i phi((x - X_i) / h)`` at each point of ``x``."""
    samples = np.asarray(samples, dtype=np.float64)
    xq = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = np.empty(xq.shape, dtype=np.float64)
    flat_x, flat_out = xq.ravel(), out.reshape(-1)
    n = len(samples)
    step = max(1, _CHUNK_ELEMENTS // max(n, 1))
    norm = _INV_SQRT_2PI / (n * h)
    for start in range(0, flat_x.size, step):
        z = (flat_x[start : start + step, None] - samples[None, :]) / h
        flat_out[start : start + step] = np.exp(-0.5 * z * z).sum(axis=1) * norm
    return out


class GaussianKDE(BaseEstimator):
    """One-dimensional kernel density estimate with a Gaussian kernel.

    Parameters
    ----------
    bandwidth : "scott" or float, default="scott"

    Attributes
    ----------
    samples_ : ndarray of shape (n_samples,)
    bandwidth_ : float
        Resolved bandwidth.
    degenerate_ : bool
        True when Scott's rule hit the bandwidth floor (constant samples).
    """

    def __init__(self, bandwidth="scott"):
        self.bandwidth = bandwidth

    def fit(self, X, y=None):
        x = check_1d(X, "X")
        if len(x) == 0:
            raise ValueError("cannot fit a KDE on zero samples")
        self.bandwidth_, self.degenerate_ = resolve_bandwidth(x, self.bandwidth)
        self.samples_ = x.copy()
        self.samples_.setflags(write=False)
        return self

    def density(self, X) -> np.ndarray:
        check_is_fitted(self, "samples_")
        return gaussian_kde_density(self.samples_, self.bandwidth_, check_1d(X, "X"))

    def score_samples(self, X) -> np.ndarray:
        """Log density, following the scikit-learn convention."""
        with np.errstate(divide="ignore"):
            return np.log(self.density(X))

    def curve(self, grid) -> np.ndarray:
        """``(len(grid), 2)`` array of ``(x, density)`` rows for plotting."""
        g = check_1d(grid, "grid")
        return np.column_stack([g, self.density(g)])


def kde_fit(samples, bandwidth="scott") -> GaussianKDE:
    return GaussianKDE(bandwidth).fit(samples)


def kde_eval(model: GaussianKDE, x):
    """Density at ``x``; returns a float for scalar input."""
    out = model.density(np.atleast_1d(x))
    return float(out[0]) if np.ndim(x) == 0 else out
