"""Maximum entropy on a finite support under a single expectation constraint.

The solution is the Gibbs family ``p_i ∝ exp(-beta * v_i)``. Expectation is
strictly decreasing in ``beta``, so the constraint is solved by bracketing
and bisection on ``beta``; a guarded Newton polish only tightens the answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_positive
from .core import DIE, Distribution, Support, entropy
from .exceptions import ConstraintInfeasibleError, NumericalFailureError

__all__ = [
    "GibbsSolution",
    "gibbs_distribution",
    "epsilon_of_beta",
    "solve_for_expectation",
    "MaxEntEstimator",
]

DEFAULT_TOL = 1e-10
_MAX_BRACKET_DOUBLINGS = 64
_MAX_BISECTIONS = 400


@dataclass(frozen=True)
class GibbsSolution:
    """Result of :func:`solve_for_expectation`.

    ``boundary`` is True when the target equals an end of the support; then
    ``beta`` is ``±inf`` and ``distribution`` is the matching point mass.
    """

    beta: float
    distribution: Distribution
    epsilon: float
    iterations: int
    boundary: bool = False


def _gibbs_probs(beta, values):
    z = -beta * values
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()


def _mean_var(beta, values):
    p = _gibbs_probs(beta, values)
    m = float(np.dot(p, values))
    var = float(np.dot(p, (values - m) ** 2))
    return m, var, p


def gibbs_distribution(beta, s=DIE):
    if not math.isfinite(beta):
        raise ValueError(f"beta must be finite, got {beta!r}")
    return Distribution(s, _gibbs_probs(float(beta), s.values))


def epsilon_of_beta(beta, s=DIE):
    if not math.isfinite(beta):
        raise ValueError(f"beta must be finite, got {beta!r}")
    return float(np.dot(_gibbs_probs(float(beta), s.values), s.values))


def _bracket(target, values):
    """Find ``lo < hi`` with eps(lo) >= target >= eps(hi) by doubling."""
    mean0 = float(values.mean())
    step = 1.0
    for _ in range(_MAX_BRACKET_DOUBLINGS):
        if target > mean0:
            lo, hi = -step, 0.0
            if _mean_var(lo, values)[0] >= target:
                return lo, hi
        else:
            lo, hi = 0.0, step
            if _mean_var(hi, values)[0] <= target:
                return lo, hi
        step *= 2.0
    raise NumericalFailureError(
        f"could not bracket epsilon={target}", trace={"last_step": step}
    )


def solve_for_expectation(epsilon, s=DIE, tol=DEFAULT_TOL):
    """Maximum-entropy distribution on ``s`` with expectation ``epsilon``.

    Raises :class:`ConstraintInfeasibleError` outside ``[min, max]``; the
    two ends return flagged point masses instead of a diverging ``beta``.
    """
    check_positive(tol, "tol")
    epsilon = float(epsilon)
    values = s.values
    if not math.isfinite(epsilon) or epsilon < s.min or epsilon > s.max:
        raise ConstraintInfeasibleError(
            f"expectation {epsilon!r} is outside the support range [{s.min}, {s.max}]",
            lower=s.point_mass(s.min),
            upper=s.point_mass(s.max),
        )
    if epsilon == s.min:
        return GibbsSolution(math.inf, s.point_mass(s.min), epsilon, 0, boundary=True)
    if epsilon == s.max:
        return GibbsSolution(-math.inf, s.point_mass(s.max), epsilon, 0, boundary=True)
    if epsilon == float(values.mean()):
        return GibbsSolution(0.0, gibbs_distribution(0.0, s), epsilon, 0)

    lo, hi = _bracket(epsilon, values)
    it = 0
    mid = 0.5 * (lo + hi)
    m = _mean_var(mid, values)[0]
    while abs(m - epsilon) > tol:
        if m > epsilon:
            lo = mid
        else:
            hi = mid
        new_mid = 0.5 * (lo + hi)
        it += 1
        if new_mid in (lo, hi) or it > _MAX_BISECTIONS:
            # bracket collapsed to adjacent floats
            break
        mid = new_mid
        m = _mean_var(mid, values)[0]
    if abs(m - epsilon) > tol:
        raise NumericalFailureError(
            f"bisection stalled at |eps - target| = {abs(m - epsilon):.3e}",
            trace={"beta": mid, "bracket": (lo, hi), "iterations": it},
        )

    # Newton polish, kept only when it stays in the bracket and improves
    beta = mid
    for _ in range(3):
        m, var, _ = _mean_var(beta, values)
        if var <= 0:
            break
        cand = beta + (m - epsilon) / var
        if not lo <= cand <= hi:
            break
        m_cand = _mean_var(cand, values)[0]
        if abs(m_cand - epsilon) >= abs(m - epsilon):
            break
        beta = cand
    dist = gibbs_distribution(beta, s)
    return GibbsSolution(beta, dist, float(np.dot(dist.probs, values)), it)


class MaxEntEstimator(BaseEstimator):
    """Maximum-entropy model of a finite-valued variable.

    ``fit`` matches the sample mean of observed outcomes (equivalently, the
    maximum-likelihood fit of the one-parameter Gibbs family). Setting
    ``target_mean`` ignores the data and uses that expectation instead.

    Parameters
    ----------
    support : sequence of float, default (1, 2, 3, 4, 5, 6)
    target_mean : float or None
    tol : float
        Tolerance on the achieved expectation.

    Attributes
    ----------
    beta_, distribution_, probs_, epsilon_, n_iter_, boundary_
    """

    def __init__(self, support=(1, 2, 3, 4, 5, 6), target_mean=None, tol=DEFAULT_TOL):
        self.support = support
        self.target_mean = target_mean
        self.tol = tol

    def _support(self):
        return Support(self.support)

    def _check_outcomes(self, X, s):
        X = check_array(X, ensure_2d=False, dtype=float).ravel()
        idx = np.searchsorted(s.values, X)
        idx = np.clip(idx, 0, len(s) - 1)
        if np.any(s.values[idx] != X):
            raise ValueError("X contains values outside the support")
        return X, idx

    def fit(self, X=None, y=None):
        s = self._support()
        if self.target_mean is not None:
            target = float(self.target_mean)
        else:
            if X is None:
                raise ValueError("fit needs X when target_mean is None")
            X, _ = self._check_outcomes(X, s)
            target = float(X.mean())
        sol = solve_for_expectation(target, s, self.tol)
        self.beta_ = sol.beta
        self.distribution_ = sol.distribution
        self.probs_ = sol.distribution.probs
        self.epsilon_ = sol.epsilon
        self.n_iter_ = sol.iterations
        self.boundary_ = sol.boundary
        return self

    def predict_proba(self, X):
        """Model probability of each observed outcome in ``X``."""
        check_is_fitted(self, "probs_")
        _, idx = self._check_outcomes(X, self._support())
        return self.probs_[idx]

    def score(self, X, y=None):
        """Mean log-likelihood of ``X`` (``-inf`` if any outcome has zero mass)."""
        p = self.predict_proba(X)
        with np.errstate(divide="ignore"):
            return float(np.mean(np.log(p)))

    def entropy(self):
        check_is_fitted(self, "distribution_")
        return entropy(self.distribution_)

    def sample(self, n_samples=1, random_state=0):
        check_is_fitted(self, "probs_")
        rng = np.random.default_rng(random_state)
        return rng.choice(self._support().values, size=n_samples, p=self.probs_)
