"""Conditioning on sample-mean events in the space of length-``n`` sequences.

Exact results come from a convolution DP over integer sums. Samplers work on
face-count vectors: a sequence's mean and its pooled face frequencies depend
only on how many times each face occurs, so drawing ``multinomial(n, q)``
counts has exactly the law of drawing ``n`` i.i.d. faces from ``q``.

Randomness uses numpy's ``PCG64`` generator. Draws are split into fixed-size
chunks; chunk ``i`` takes the ``i``-th child of ``SeedSequence(seed)``, so
results do not depend on how many worker threads process the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._validation import check_int, check_positive, check_seed
from .core import DIE, Distribution, Histogram, Support
from .exceptions import (
    ConstraintInfeasibleError,
    EmptyConditioningEventError,
    NoSurvivorsError,
    UnstableEstimateError,
)
from .maxent import gibbs_distribution, solve_for_expectation

__all__ = [
    "SumTable",
    "EvidenceSample",
    "ConditioningEstimate",
    "sum_distribution",
    "conditional_face_distribution",
    "nearest_attainable_sum",
    "mean_window_probability",
    "window_conditional",
    "convergence_curve",
    "rejection_conditioner",
    "tilted_conditioner",
    "evidence_histogram_sequences",
    "evidence_histogram_simplex",
]

CHUNK_SIZE = 1 << 15
MIN_EFFECTIVE_SAMPLE_SIZE = 10.0
# refuse tables beyond this many entries
MAX_TABLE_ENTRIES = 50_000_000


@dataclass(frozen=True, eq=False)
class SumTable:
    """Distribution of the sum of ``n`` i.i.d. uniform draws from ``support``.

    ``mass[k]`` is the probability that the sum equals ``offset + k`` where
    ``offset = n * min(support)``.
    """

    n: int
    support: Support
    mass: np.ndarray

    @property
    def offset(self):
        return int(self.n * self.support.min)

    @property
    def sums(self):
        return np.arange(self.offset, self.offset + self.mass.size)

    def prob(self, total):
        k = int(total) - self.offset
        if 0 <= k < self.mass.size:
            return float(self.mass[k])
        return 0.0


@dataclass(frozen=True)
class EvidenceSample:
    source: str
    n: int | None
    means: Histogram
    mean: float
    std: float
    seed: int


@dataclass(frozen=True)
class ConditioningEstimate:
    """Full output of the Monte Carlo conditioners."""

    distribution: Distribution
    stderr: np.ndarray
    acceptance_rate: float
    effective_sample_size: float
    survivors: int
    draws: int
    beta: float


def _integer_support(s):
    if not s.is_integer:
        raise ValueError("exact sum tables need an integer-valued support")
    v = s.values.astype(np.int64)
    return v, int(v[0])


def _step_kernel(s):
    v, lo = _integer_support(s)
    kernel = np.zeros(int(v[-1]) - lo + 1)
    kernel[v - lo] = 1.0 / v.size
    return kernel


def _check_table_size(n, s):
    entries = n * (s.max - s.min) + 1
    if entries > MAX_TABLE_ENTRIES:
        raise MemoryError(f"sum table for n={n} needs {entries:.3g} entries")


def sum_distribution(n, s=DIE):
    n = check_int(n, "n", minimum=1)
    _check_table_size(n, s)
    kernel = _step_kernel(s)
    mass = kernel.copy()
    for _ in range(n - 1):
        mass = np.convolve(mass, kernel)
        mass /= mass.sum()
    mass.setflags(write=False)
    return SumTable(n, s, mass)


@lru_cache(maxsize=64)
def _log_sum_table(n, values):
    """Log-probabilities of the sum of ``n`` draws (``n >= 0``).

    Kept in log space so tail sums at large ``n`` do not underflow, which
    matters when conditioning on extreme targets.
    """
    v = np.asarray(values, dtype=np.int64)
    lo = int(v[0])
    shifts = v - lo
    width = int(shifts[-1])
    log_u = -math.log(v.size)
    table = np.zeros(1)
    for _ in range(n):
        stacked = np.full((shifts.size, table.size + width), -np.inf)
        for row, sh in enumerate(shifts):
            stacked[row, sh : sh + table.size] = table
        table = np.logaddexp.reduce(stacked, axis=0) + log_u
    table.setflags(write=False)
    return table


def _log_prob_sum(n, total, s):
    v, lo = _integer_support(s)
    table = _log_sum_table(n, tuple(v.tolist()))
    k = int(total) - n * lo
    if 0 <= k < table.size:
        return float(table[k])
    return -math.inf


def conditional_face_distribution(n, target_sum, s=DIE):
    """Face distribution of one roll given the ``n`` rolls sum to ``target_sum``.

    By exchangeability this is also the expected empirical face frequency
    among the surviving sequences.
    """
    n = check_int(n, "n", minimum=1)
    target_sum = check_int(target_sum, "target_sum")
    v, lo = _integer_support(s)
    _check_table_size(n, s)
    table = _log_sum_table(n - 1, tuple(v.tolist()))
    ks = target_sum - v - (n - 1) * lo
    logw = np.full(v.size, -np.inf)
    ok = (ks >= 0) & (ks < table.size)
    logw[ok] = table[ks[ok]]
    if not np.any(np.isfinite(logw)):
        raise EmptyConditioningEventError(
            f"sum {target_sum} is unattainable with n={n} draws from {s!r}"
        )
    w = np.exp(logw - logw.max())
    return Distribution(s, w / w.sum())


def nearest_attainable_sum(n, target_mean, s=DIE):
    """Attainable sum closest to ``n * target_mean``; ties go toward the prior mean."""
    v, lo = _integer_support(s)
    table = _log_sum_table(n, tuple(v.tolist()))
    sums = np.flatnonzero(np.isfinite(table)) + n * lo
    goal = n * float(target_mean)
    dist = np.abs(sums - goal)
    best = sums[dist <= dist.min() + 1e-9]
    if best.size == 1:
        return int(best[0])
    prior_total = n * float(s.values.mean())
    return int(best[np.argmin(np.abs(best - prior_total))])


def _window_sums(table, center, halfwidth):
    sums = table.sums
    return np.abs(sums / table.n - center) < halfwidth


def mean_window_probability(n, center, halfwidth, s=DIE):
    check_positive(halfwidth, "halfwidth", allow_zero=True)
    table = sum_distribution(n, s)
    return float(table.mass[_window_sums(table, center, halfwidth)].sum())


def window_conditional(n, center, halfwidth, s=DIE):
    """Exact pooled face frequencies given ``|mean - center| < halfwidth``."""
    n = check_int(n, "n", minimum=1)
    v, lo = _integer_support(s)
    log_n = _log_sum_table(n, tuple(v.tolist()))
    sums = np.arange(log_n.size) + n * lo
    inside = (np.abs(sums / n - center) < halfwidth) & np.isfinite(log_n)
    if not np.any(inside):
        raise EmptyConditioningEventError(
            f"no attainable mean within {halfwidth} of {center} at n={n}"
        )
    logp = log_n[inside]
    weights = np.exp(logp - logp.max())
    acc = np.zeros(v.size)
    for w, total in zip(weights, sums[inside]):
        acc += w * conditional_face_distribution(n, int(total), s).probs
    return Distribution(s, acc / acc.sum())


def convergence_curve(target_epsilon, n_list, s=DIE):
    """TV distance between the exact conditional and the MaxEnt solution, per ``n``."""
    reference = solve_for_expectation(target_epsilon, s).distribution
    out = []
    for n in n_list:
        total = nearest_attainable_sum(n, target_epsilon, s)
        cond = conditional_face_distribution(n, total, s)
        out.append((int(n), float(0.5 * np.abs(cond.probs - reference.probs).sum())))
    return out


def _chunk_sizes(total):
    full, rest = divmod(total, CHUNK_SIZE)
    return [CHUNK_SIZE] * full + ([rest] if rest else [])


def _map_chunks(fn, total, seed, n_jobs):
    sizes = _chunk_sizes(total)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    args = [(np.random.Generator(np.random.PCG64(ss)), m) for ss, m in zip(seqs, sizes)]
    if n_jobs is None or n_jobs <= 1 or len(args) == 1:
        return [fn(rng, m) for rng, m in args]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(lambda a: fn(*a), args))


def _sample_window(n, epsilon, delta, probs, values, log_ratio, draws, seed, n_jobs):
    def work(rng, m):
        counts = rng.multinomial(n, probs, size=m)
        # same predicate as the exact window computations
        keep = np.abs((counts @ values) / n - epsilon) < delta
        kept = counts[keep]
        return kept, kept @ log_ratio

    parts = _map_chunks(work, draws, seed, n_jobs)
    counts = np.concatenate([p[0] for p in parts]) if parts else np.empty((0, values.size))
    logw = np.concatenate([p[1] for p in parts]) if parts else np.empty(0)
    return counts, logw


def _weighted_estimate(counts, logw, n):
    freqs = counts / n
    w = np.exp(logw - logw.max())
    wsum = w.sum()
    est = (w @ freqs) / wsum
    ess = wsum**2 / np.sum(w**2)
    # delta-method standard error of a self-normalised ratio estimator
    resid = freqs - est
    se = np.sqrt(np.sum((w[:, None] * resid) ** 2, axis=0)) / wsum
    return est, float(ess), se


def rejection_conditioner(n, epsilon, delta, max_draws, seed=0, *, n_jobs=None, full_output=False):
    """Estimate the window-conditional face distribution by rejection.

    Returns ``(distribution, acceptance_rate)``, or a
    :class:`ConditioningEstimate` when ``full_output`` is set.
    """
    n = check_int(n, "n", minimum=1)
    check_positive(delta, "delta")
    max_draws = check_int(max_draws, "max_draws", minimum=1)
    seed = check_seed(seed)
    s = DIE
    base = gibbs_distribution(0.0, s).probs
    counts, logw = _sample_window(
        n, epsilon, delta, base, s.values, np.zeros(len(s)), max_draws, seed, n_jobs
    )
    if counts.shape[0] == 0:
        raise NoSurvivorsError(
            f"no sequence among {max_draws} draws had mean within {delta} of "
            f"{epsilon} at n={n}; use tilted_conditioner for rare windows"
        )
    est, ess, se = _weighted_estimate(counts, logw, n)
    rate = counts.shape[0] / max_draws
    result = ConditioningEstimate(
        Distribution(s, est, normalize=True), se, rate, ess, counts.shape[0], max_draws, 0.0
    )
    if full_output:
        return result
    return result.distribution, rate


def tilted_conditioner(n, epsilon, delta, draws, seed=0, *, n_jobs=None, full_output=False):
    """Importance-sampling estimate of the window-conditional face distribution.

    Sequences are drawn from the Gibbs distribution whose mean is ``epsilon``
    and survivors are reweighted by the uniform-to-tilted likelihood ratio.
    Returns ``(distribution, effective_sample_size)``, or a
    :class:`ConditioningEstimate` when ``full_output`` is set.
    """
    n = check_int(n, "n", minimum=1)
    check_positive(delta, "delta")
    draws = check_int(draws, "draws", minimum=1)
    seed = check_seed(seed)
    s = DIE
    if not s.min < epsilon < s.max:
        raise ConstraintInfeasibleError(
            f"tilting needs epsilon strictly inside ({s.min}, {s.max}), got {epsilon!r}",
            lower=s.point_mass(s.min),
            upper=s.point_mass(s.max),
        )
    beta = solve_for_expectation(epsilon, s).beta
    tilted = gibbs_distribution(beta, s).probs
    uniform = gibbs_distribution(0.0, s).probs
    log_ratio = np.log(uniform) - np.log(tilted)
    counts, logw = _sample_window(
        n, epsilon, delta, tilted, s.values, log_ratio, draws, seed, n_jobs
    )
    if counts.shape[0] == 0:
        raise UnstableEstimateError(f"no tilted draw landed in the window (draws={draws})")
    est, ess, se = _weighted_estimate(counts, logw, n)
    if ess < MIN_EFFECTIVE_SAMPLE_SIZE:
        raise UnstableEstimateError(
            f"effective sample size {ess:.2f} < {MIN_EFFECTIVE_SAMPLE_SIZE}"
        )
    result = ConditioningEstimate(
        Distribution(s, est, normalize=True), se, counts.shape[0] / draws, ess,
        counts.shape[0], draws, beta,
    )
    if full_output:
        return result
    return result.distribution, ess


def _mean_stats(parts):
    vals = np.concatenate(parts)
    return vals, float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0


def evidence_histogram_sequences(n, samples, bin_width=0.002, seed=0, *, n_jobs=None):
    """Histogram of sample means of ``samples`` uniform length-``n`` sequences."""
    n = check_int(n, "n", minimum=1)
    samples = check_int(samples, "samples", minimum=1)
    seed = check_seed(seed)
    values = DIE.values
    probs = gibbs_distribution(0.0, DIE).probs

    def work(rng, m):
        return (rng.multinomial(n, probs, size=m) @ values) / n

    means, mu, sd = _mean_stats(_map_chunks(work, samples, seed, n_jobs))
    return EvidenceSample(
        "sequence-space", n, Histogram.from_values(means, bin_width), mu, sd, seed
    )


def evidence_histogram_simplex(samples, bin_width=0.002, seed=0, *, n_jobs=None):
    """Histogram of expectations of flat-Dirichlet points on the die simplex."""
    samples = check_int(samples, "samples", minimum=1)
    seed = check_seed(seed)
    values = DIE.values

    def work(rng, m):
        e = rng.standard_exponential(size=(m, values.size))
        return (e @ values) / e.sum(axis=1)

    means, mu, sd = _mean_stats(_map_chunks(work, samples, seed, n_jobs))
    return EvidenceSample(
        "simplex-space", None, Histogram.from_values(means, bin_width), mu, sd, seed
    )
