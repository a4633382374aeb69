"""Membership inference from nearest-neighbour distances.

Three attacks share one scoring rule. Class-conditional densities of the
distance ``d`` are estimated with Gaussian KDEs and combined by Bayes' rule::

    P(member | d) = pi f_m(d) / (pi f_m(d) + (1 - pi) f_n(d))

* :class:`TrueDistributionAttack` fits ``f_m`` / ``f_n`` on the true labels
  (the data custodian's view).
* :class:`RealisticAttack` fits them on pseudo-labels ``d < tau``.
* :class:`ThresholdAttack` skips the densities and predicts ``d < tau``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_1d, check_labels, check_probability
from .distance import DistanceTable
from .kde import GaussianKDE
from .tabular import MEMBER, NON_MEMBER

logger = logging.getLogger(__name__)

DEFAULT_PERCENTILES = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0)

TRUE_DIST = "true-dist"
REALISTIC = "realistic"
METHOD1 = "method1"


class DegenerateThresholdError(ValueError):
    """A distance threshold leaves one pseudo-class (nearly) empty."""


def posterior_from_densities(f_member, f_non_member, prior_member: float = 0.5):
    """Return ``(p_member, p_non_member, underflow)`` arrays.

    The normaliser is accumulated in extended precision so that exactly
    representable ratios (e.g. densities 0.3 and 0.1) come out exact. Only the
    smaller of the two posteriors is taken from the division; the larger is
    ``1 - smaller``, which makes ``p_member + p_non_member == 1`` hold exactly
    in double precision. Where both weighted densities are zero the evidence
    is uninformative: both posteriors are 0.5 and ``underflow`` is set.
    """
    fm = np.asarray(f_member, dtype=np.longdouble)
    fn = np.asarray(f_non_member, dtype=np.longdouble)
    a = np.longdouble(prior_member) * fm
    b = (np.longdouble(1.0) - np.longdouble(prior_member)) * fn
    s = a + b
    underflow = s == 0
    safe = np.where(underflow, np.longdouble(1.0), s)
    member_smaller = a <= b
    small = (np.where(member_smaller, a, b) / safe).astype(np.float64)
    small = np.where(underflow, 0.5, small)
    large = 1.0 - small
    p_m = np.where(member_smaller, small, large)
    p_n = np.where(member_smaller, large, small)
    return p_m, p_n, np.asarray(underflow, dtype=bool)


@dataclass(frozen=True)
class PosteriorModel:
    kde_member: GaussianKDE
    kde_non_member: GaussianKDE
    prior_member: float = 0.5

    def __post_init__(self):
        check_probability(self.prior_member, "prior_member")

    def densities(self, d) -> tuple[np.ndarray, np.ndarray]:
        x = check_1d(d, "d")
        return self.kde_member.density(x), self.kde_non_member.density(x)

    def posterior(self, d):
        """``(p_member, p_non_member, underflow)`` for an array of distances."""
        fm, fn = self.densities(d)
        return posterior_from_densities(fm, fn, self.prior_member)

    @property
    def degenerate(self) -> bool:
        return bool(self.kde_member.degenerate_ or self.kde_non_member.degenerate_)


def membership_posterior(pm: PosteriorModel, d: float, return_underflow: bool = False):
    p, _, under = pm.posterior([d])
    if return_underflow:
        return float(p[0]), bool(under[0])
    return float(p[0])


# ---------------------------------------------------------------------------
# estimators


class _PosteriorAttack(ClassifierMixin, BaseEstimator):
    def _fit_posterior(self, member_d, non_member_d):
        check_probability(self.decision_threshold, "decision_threshold", closed=True)
        self.posterior_model_ = PosteriorModel(
            GaussianKDE(self.bandwidth).fit(member_d),
            GaussianKDE(self.bandwidth).fit(non_member_d),
            self.prior_member,
        )
        self.classes_ = np.array([NON_MEMBER, MEMBER])
        self.n_features_in_ = 1
        return self

    def posterior(self, X):
        check_is_fitted(self, "posterior_model_")
        return self.posterior_model_.posterior(check_1d(X))

    def predict_proba(self, X):
        p_m, p_n, _ = self.posterior(X)
        return np.column_stack([p_n, p_m])

    def predict(self, X):
        p_m, _, _ = self.posterior(X)
        return np.where(p_m >= self.decision_threshold, MEMBER, NON_MEMBER).astype(np.int8)


class TrueDistributionAttack(_PosteriorAttack):
    """KDE posterior attack fitted on true membership labels.

    Parameters
    ----------
    bandwidth : "scott" or float, default="scott"
    decision_threshold : float, default=0.5
        A record is predicted a member when its posterior is at least this value.
    prior_member : float, default=0.5
    """

    def __init__(self, bandwidth="scott", decision_threshold=0.5, prior_member=0.5):
        self.bandwidth = bandwidth
        self.decision_threshold = decision_threshold
        self.prior_member = prior_member

    def fit(self, X, y):
        d = check_1d(X)
        y = check_labels(y, len(d))
        if not (y == MEMBER).any() or not (y == NON_MEMBER).any():
            raise ValueError("training distances must contain both members and non-members")
        return self._fit_posterior(d[y == MEMBER], d[y == NON_MEMBER])


class RealisticAttack(_PosteriorAttack):
    """KDE posterior attack fitted on pseudo-labels ``d < distance_threshold``.

    ``y`` is accepted for API compatibility and ignored.
    """

    def __init__(
        self, distance_threshold, bandwidth="scott", decision_threshold=0.5, prior_member=0.5
    ):
        self.distance_threshold = distance_threshold
        self.bandwidth = bandwidth
        self.decision_threshold = decision_threshold
        self.prior_member = prior_member

    def fit(self, X, y=None):
        d = check_1d(X)
        supposed = d < self.distance_threshold
        need = 2 if isinstance(self.bandwidth, str) else 1
        n_in, n_out = int(supposed.sum()), int((~supposed).sum())
        if n_in < need or n_out < need:
            raise DegenerateThresholdError(
                f"threshold {self.distance_threshold!r} gives {n_in} supposed members and "
                f"{n_out} supposed non-members (need at least {need} of each)"
            )
        self.supposed_labels_ = supposed.astype(np.int8)
        return self._fit_posterior(d[supposed], d[~supposed])


class ThresholdAttack(ClassifierMixin, BaseEstimator):
    """Hard threshold baseline: member iff ``d < distance_threshold``.

    ``predict_proba`` returns 0/1 rows; the scores are not probabilities.
    """

    def __init__(self, distance_threshold):
        self.distance_threshold = distance_threshold

    def fit(self, X=None, y=None):
        self.classes_ = np.array([NON_MEMBER, MEMBER])
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "classes_")
        d = check_1d(X)
        return np.where(d < self.distance_threshold, MEMBER, NON_MEMBER).astype(np.int8)

    def predict_proba(self, X):
        p = self.predict(X).astype(np.float64)
        return np.column_stack([1.0 - p, p])


# ---------------------------------------------------------------------------
# runs over a split distance table


@dataclass(frozen=True, eq=False)
class AttackOutcomes:
    """Per-test-record results of one attack run, stored column-wise."""

    attack: str
    source_index: np.ndarray
    distance: np.ndarray
    posterior: np.ndarray
    predicted: np.ndarray
    truth: np.ndarray
    threshold_percentile: float | None = None
    distance_threshold: float | None = None
    probabilistic: bool = True
    underflow: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.distance)
        for name in ("source_index", "posterior", "predicted", "truth"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} is not aligned with distance")

    def __len__(self) -> int:
        return len(self.distance)

    @property
    def n_underflow(self) -> int:
        return 0 if self.underflow is None else int(self.underflow.sum())


@dataclass(frozen=True)
class ThresholdGrid:
    percentiles: tuple[float, ...]
    thresholds: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(v) for v in self.percentiles)
        t = tuple(float(v) for v in self.thresholds)
        if len(p) != len(t) or not p:
            raise ValueError("percentiles and thresholds must be non-empty and aligned")
        if any(b <= a for a, b in zip(p, p[1:])):
            raise ValueError("percentiles must be strictly increasing")
        if any(b < a for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be non-decreasing")
        object.__setattr__(self, "percentiles", p)
        object.__setattr__(self, "thresholds", t)

    def __iter__(self):
        return iter(zip(self.percentiles, self.thresholds))

    def __len__(self) -> int:
        return len(self.percentiles)


def resolve_thresholds(
    dt: DistanceTable, percentiles: Sequence[float] = DEFAULT_PERCENTILES
) -> ThresholdGrid:
    """Linear-interpolation percentiles of every distance in ``dt``."""
    if len(dt) == 0:
        raise ValueError("empty distance table")
    pct = sorted(float(p) for p in percentiles)
    if not pct or any(not 0.0 < p < 100.0 for p in pct):
        raise ValueError("percentiles must lie strictly between 0 and 100")
    values = np.percentile(dt.distances, pct, method="linear")
    return ThresholdGrid(tuple(pct), tuple(float(v) for v in values))


def _score(
    attack: str,
    model: _PosteriorAttack,
    dt: DistanceTable,
    percentile: float | None = None,
    threshold: float | None = None,
) -> AttackOutcomes:
    d = dt.test_distances
    p_m, _, under = model.posterior(d)
    pred = np.where(p_m >= model.decision_threshold, MEMBER, NON_MEMBER).astype(np.int8)
    return AttackOutcomes(
        attack,
        dt.source_index[dt.test_indices],
        d,
        p_m,
        pred,
        dt.test_labels,
        percentile,
        threshold,
        True,
        under,
    )


def true_distribution_attack(
    dt: DistanceTable,
    bandwidth="scott",
    decision_threshold: float = 0.5,
    prior_member: float = 0.5,
) -> tuple[PosteriorModel, AttackOutcomes]:
    est = TrueDistributionAttack(bandwidth, decision_threshold, prior_member)
    est.fit(dt.train_distances, dt.train_labels)
    return est.posterior_model_, _score(TRUE_DIST, est, dt)


@dataclass(frozen=True)
class RealisticRun:
    percentile: float
    threshold: float
    model: PosteriorModel
    outcomes: AttackOutcomes
    n_supposed_members: int
    n_supposed_non_members: int


@dataclass
class RealisticSweep:
    runs: list[RealisticRun] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)


def realistic_attack(
    dt: DistanceTable,
    grid: ThresholdGrid,
    bandwidth="scott",
    decision_threshold: float = 0.5,
    prior_member: float = 0.5,
) -> RealisticSweep:
    """Fit one pseudo-labelled posterior per threshold on the training split.

    True labels are only used to score the test split. Thresholds that leave a
    pseudo-class too small are skipped and listed in ``skipped``.
    """
    sweep = RealisticSweep()
    train_d = dt.train_distances
    for pct, tau in grid:
        est = RealisticAttack(tau, bandwidth, decision_threshold, prior_member)
        try:
            est.fit(train_d)
        except DegenerateThresholdError as exc:
            logger.warning("skipping percentile %g: %s", pct, exc)
            sweep.skipped.append({"percentile": pct, "threshold": tau, "reason": str(exc)})
            continue
        n_in = int(est.supposed_labels_.sum())
        sweep.runs.append(
            RealisticRun(
                pct,
                tau,
                est.posterior_model_,
                _score(REALISTIC, est, dt, pct, tau),
                n_in,
                len(train_d) - n_in,
            )
        )
    if not sweep.runs:
        raise DegenerateThresholdError("every distance threshold is degenerate")
    return sweep


def method1_attack(dt: DistanceTable, grid: ThresholdGrid) -> list[AttackOutcomes]:
    d = dt.test_distances
    if len(d) == 0:
        raise ValueError("empty test split")
    src = dt.source_index[dt.test_indices]
    truth = dt.test_labels
    out = []
    for pct, tau in grid:
        pred = ThresholdAttack(tau).fit().predict(d)
        out.append(
            AttackOutcomes(
                METHOD1, src, d, pred.astype(np.float64), pred, truth, pct, tau, False, None
            )
        )
    return out


def max_posterior_increase(model: PosteriorModel, upper: float = 1.0, n_points: int = 1000) -> float:
    """Largest step-to-step rise of the member posterior on ``[0, upper]``.

    Zero means the posterior never increases with distance on the grid.
    Grid points where both densities underflow are left out, since their
    0.5 is a fallback and not a density ratio.
    """
    grid = np.linspace(0.0, upper, n_points)
    p, _, under = model.posterior(grid)
    p = p[~under]
    return float(max(0.0, np.diff(p).max())) if len(p) > 1 else 0.0
