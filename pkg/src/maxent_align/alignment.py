"""Total-expectation alignment between an update rule and a prior.

An update rule maps each evidence value ``eps`` (a posterior expectation) to
a posterior over outcomes; on a finite evidence grid this is a kernel matrix
with one column per grid point. A prior over evidence is then a weight
vector ``w`` and the law of total expectation requires ``K @ w == prior``.
This module solves and bounds that linear system with LPs (HiGHS).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ._validation import BOUNDARY_ATOL, check_real_vector, check_strictly_increasing, readonly
from .core import DIE, Distribution, Support, expectation
from .exceptions import InfeasibleSystemError, NumericalFailureError
from .maxent import solve_for_expectation

__all__ = [
    "EvidenceGrid",
    "Kernel",
    "EvidenceMeasure",
    "FeasibilityResult",
    "default_grid",
    "maxent_kernel",
    "piecewise_linear_kernel",
    "total_expectation_residual",
    "solve_evidence_measure",
    "bound_functional",
    "cdf_coefficients",
    "integral_coefficients",
    "convexity_witness",
]

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}
# weights below this are treated as LP round-off
_WEIGHT_FLOOR = 1e-13


@dataclass(frozen=True, eq=False)
class EvidenceGrid:
    """Strictly increasing evidence values; must contain ``center`` exactly."""

    points: np.ndarray
    center: float = 3.5

    def __post_init__(self):
        pts = check_real_vector(self.points, name="grid points")
        check_strictly_increasing(pts, name="grid points")
        if not np.any(pts == self.center):
            raise ValueError(f"grid must contain the prior mean {self.center} exactly")
        object.__setattr__(self, "points", readonly(pts))

    @classmethod
    def uniform(cls, lo, hi, n_points, center=3.5):
        """``n_points`` evenly spaced values; the one nearest ``center`` snaps onto it.

        If no point lies within half a step, ``center`` is inserted.
        """
        pts = np.linspace(lo, hi, n_points)
        step = (hi - lo) / (n_points - 1) if n_points > 1 else 0.0
        k = int(np.argmin(np.abs(pts - center)))
        if abs(pts[k] - center) < 1e-9 * max(step, 1.0):
            pts[k] = center
        else:
            pts = np.sort(np.append(pts, center))
        return cls(pts, center)

    def __len__(self):
        return self.points.size

    @property
    def step(self):
        return float(np.max(np.diff(self.points)))

    def index_of(self, value):
        idx = np.flatnonzero(self.points == value)
        if idx.size == 0:
            raise ValueError(f"{value} is not a grid point")
        return int(idx[0])


def default_grid(n_points=501, lo=1.02, hi=5.98, center=3.5):
    return EvidenceGrid.uniform(lo, hi, n_points, center)


@dataclass(frozen=True, eq=False)
class Kernel:
    """Posterior for every grid point; ``matrix[:, g]`` is column ``g``."""

    grid: EvidenceGrid
    support: Support
    columns: tuple
    prior: Distribution
    exceptions: tuple = ()

    def __post_init__(self):
        cols = tuple(self.columns)
        if len(cols) != len(self.grid):
            raise ValueError("need one column per grid point")
        for g, col in enumerate(cols):
            if col.support != self.support:
                raise ValueError(f"column {g} lives on a different support")
            if g in self.exceptions:
                continue
            if abs(expectation(col) - self.grid.points[g]) > BOUNDARY_ATOL:
                raise ValueError(
                    f"column {g} has expectation {expectation(col)}, "
                    f"grid says {self.grid.points[g]}"
                )
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "matrix", readonly(np.column_stack([c.probs for c in cols])))


@dataclass(frozen=True, eq=False)
class EvidenceMeasure:
    grid: EvidenceGrid
    weights: np.ndarray

    def __post_init__(self):
        w = check_real_vector(self.weights, name="weights")
        if w.size != len(self.grid):
            raise ValueError("need one weight per grid point")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1.0) > BOUNDARY_ATOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", readonly(w))

    @classmethod
    def point_mass(cls, grid, value):
        w = np.zeros(len(grid))
        w[grid.index_of(value)] = 1.0
        return cls(grid, w)

    def cdf(self, threshold):
        return float(self.weights @ cdf_coefficients(self.grid, threshold))


@dataclass(frozen=True)
class FeasibilityResult:
    """LP outcome: ``residual`` is the max marginal violation of ``measure``.

    ``concentration`` is the mass within one grid step of the prior mean.
    ``cdf_spread`` (when requested) maps thresholds to feasible CDF
    intervals; any non-degenerate interval means the solution is not unique.
    """

    measure: EvidenceMeasure
    residual: float
    concentration: float
    iterations: int
    cdf_spread: dict | None = None

    @property
    def unique(self):
        if self.cdf_spread is None:
            return None
        return all(hi - lo <= 1e-7 for lo, hi in self.cdf_spread.values())


def maxent_kernel(grid, s=DIE, prior=None):
    """Columns are the maximum-entropy posteriors for each grid expectation.

    Grid points at the support ends give the boundary point masses.
    """
    cols = tuple(solve_for_expectation(float(e), s).distribution for e in grid.points)
    return Kernel(grid, s, cols, prior if prior is not None else s.uniform())


def piecewise_linear_kernel(grid, center_exception=True):
    """Two-point interpolation rule on the die.

    Evidence ``eps`` puts ``floor(eps) + 1 - eps`` on face ``floor(eps)`` and
    ``eps - floor(eps)`` on the next face. With ``center_exception`` the
    column at the prior mean is the uniform prior itself, which makes an
    atom there trivially feasible; without it that column follows the rule.
    """
    s = DIE
    pts = grid.points
    if pts[0] < s.min or pts[-1] > s.max:
        raise ValueError("piecewise-linear grid must lie within [1, 6]")
    cols = []
    exceptions = ()
    for g, eps in enumerate(pts):
        if center_exception and eps == grid.center:
            cols.append(s.uniform())
            exceptions = (g,)
            continue
        lo = math.floor(eps)
        probs = np.zeros(len(s))
        probs[lo - 1] = lo + 1 - eps
        if eps > lo:
            probs[lo] = eps - lo
        cols.append(Distribution(s, probs))
    return Kernel(grid, s, tuple(cols), s.uniform(), exceptions)


def total_expectation_residual(k, m):
    """Max over outcomes of ``|sum_g w_g K[i, g] - prior_i|``."""
    if m.grid is not k.grid and not np.array_equal(m.grid.points, k.grid.points):
        raise ValueError("kernel and measure use different grids")
    return float(np.max(np.abs(k.matrix @ m.weights - k.prior.probs)))


def _clean_weights(w):
    w = np.where(w < _WEIGHT_FLOOR, 0.0, w)
    return w / w.sum()


def _polish(k, w):
    """Re-solve the equalities on the LP's support; keep it if it is better."""
    active = np.flatnonzero(w > 0)
    A = np.vstack([k.matrix[:, active], np.ones(active.size)])
    b = np.append(k.prior.probs, 1.0)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.any(sol < 0):
        return w
    cand = np.zeros_like(w)
    cand[active] = sol
    cand /= cand.sum()
    before = np.max(np.abs(k.matrix @ w - k.prior.probs))
    after = np.max(np.abs(k.matrix @ cand - k.prior.probs))
    return cand if after < before else w


def _concentration(grid, w):
    near = np.abs(grid.points - grid.center) <= grid.step * (1 + 1e-9)
    return float(w[near].sum())


def _minimax_lp(k):
    n_out, n_grid = k.matrix.shape
    # variables: w (n_grid), t; minimise t
    c = np.zeros(n_grid + 1)
    c[-1] = 1.0
    ones = np.ones((n_out, 1))
    A_ub = np.vstack([np.hstack([k.matrix, -ones]), np.hstack([-k.matrix, -ones])])
    b_ub = np.concatenate([k.prior.probs, -k.prior.probs])
    A_eq = np.append(np.ones(n_grid), 0.0)[None, :]
    return linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
        bounds=[(0, None)] * (n_grid + 1), method="highs", options=_HIGHS_OPTIONS,
    )


def solve_evidence_measure(k, tol=1e-9, check_uniqueness=False, thresholds=None):
    """Evidence weights minimising the max total-expectation violation.

    The reported ``residual`` is recomputed from the returned measure. With
    ``check_uniqueness`` the feasible CDF interval at each threshold
    (default: interior integers of the support) is attached as
    ``cdf_spread``.
    """
    res = _minimax_lp(k)
    if res.status != 0:
        raise NumericalFailureError(
            f"minimax LP failed: {res.message}",
            trace={"status": res.status, "iterations": res.nit, "message": res.message},
        )
    w = _clean_weights(res.x[:-1])
    if np.max(np.abs(k.matrix @ w - k.prior.probs)) > 0:
        w = _polish(k, w)
    measure = EvidenceMeasure(k.grid, w)
    residual = total_expectation_residual(k, measure)
    spread = None
    if check_uniqueness and residual <= tol:
        if thresholds is None:
            thresholds = k.support.values[1:-1]
        spread = {
            float(t): bound_functional(k, cdf_coefficients(k.grid, t))
            for t in thresholds
        }
    return FeasibilityResult(measure, residual, _concentration(k.grid, w), int(res.nit), spread)


def _certificate(k):
    res = _minimax_lp(k)
    duals = None
    if res.status == 0 and res.ineqlin is not None:
        duals = np.asarray(res.ineqlin.marginals).tolist()
    return {"min_max_violation": float(res.fun) if res.status == 0 else None, "duals": duals}


def bound_functional(k, c):
    """``(min, max)`` of ``c @ w`` over all evidence measures aligning ``k``."""
    c = check_real_vector(c, name="c")
    if c.size != len(k.grid):
        raise ValueError("need one coefficient per grid point")
    A_eq = np.vstack([k.matrix, np.ones(len(k.grid))])
    b_eq = np.append(k.prior.probs, 1.0)
    out = []
    for sign in (1.0, -1.0):
        res = linprog(
            sign * c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None),
            method="highs", options=_HIGHS_OPTIONS,
        )
        if res.status == 2:
            raise InfeasibleSystemError(
                "no evidence measure satisfies the total-expectation system",
                certificate=_certificate(k),
            )
        if res.status != 0:
            raise NumericalFailureError(
                f"bound LP failed: {res.message}",
                trace={"status": res.status, "iterations": res.nit},
            )
        out.append(sign * res.fun)
    lo, hi = out
    return float(min(lo, hi)), float(max(lo, hi))


def cdf_coefficients(grid, threshold):
    """Indicator of ``eps_g <= threshold``: turns ``w`` into ``F(threshold)``."""
    return (grid.points <= threshold + 1e-12).astype(float)


def integral_coefficients(grid, a, b):
    """Coefficients giving ``int_a^b F(eps) d eps`` for the step CDF of ``w``.

    Exact for a discrete measure: point ``eps_g`` contributes the length of
    ``[max(eps_g, a), b]``.
    """
    return np.clip(b - np.maximum(grid.points, a), 0.0, b - a)


def convexity_witness(m, s=DIE, mesh=501):
    """Smallest second difference of the mixed Gibbs profile over ``[min, max]``.

    Each grid value is mapped to its tilt ``beta_g`` and the profile
    ``x -> sum_g w_g exp(-beta_g x) / Z(beta_g)`` is differenced on a mesh.
    Each component's second difference is taken in closed form,
    ``4 sinh(beta h / 2)^2`` times its value, so a pure-uniform measure
    gives exactly 0 and any mass off ``beta = 0`` gives a positive value.
    """
    x = np.linspace(s.min, s.max, mesh)
    h = x[1] - x[0]
    inner = x[1:-1]
    total = np.zeros(inner.size)
    for eps, w in zip(m.grid.points, m.weights):
        if w == 0:
            continue
        beta = solve_for_expectation(float(eps), s).beta
        if beta == 0 or not math.isfinite(beta):
            continue
        shift = max(-beta * s.min, -beta * s.max)
        log_z = shift + math.log(np.sum(np.exp(-beta * s.values - shift)))
        prof = np.exp(-beta * inner - log_z)
        total += w * 4.0 * math.sinh(beta * h / 2.0) ** 2 * prof
    return float(total.min())
