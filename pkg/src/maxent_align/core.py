"""Finite supports, probability vectors, histograms and information metrics.

All logarithms are natural (nats). Every type here is immutable once built.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    CORE_ATOL,
    check_positive,
    check_probability_vector,
    check_real_vector,
    check_strictly_increasing,
    readonly,
)
from .exceptions import AbsoluteContinuityError, SupportMismatchError

__all__ = [
    "Support",
    "Distribution",
    "Histogram",
    "DIE",
    "expectation",
    "entropy",
    "kl_divergence",
    "tv_distance",
]


@dataclass(frozen=True, eq=False)
class Support:
    """Ordered, strictly increasing set of real outcome values."""

    values: np.ndarray

    def __post_init__(self):
        arr = check_real_vector(self.values, name="support values", min_length=2)
        check_strictly_increasing(arr, name="support values")
        object.__setattr__(self, "values", readonly(arr))

    @classmethod
    def die(cls, faces=6):
        return cls(np.arange(1, faces + 1, dtype=float))

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, Support):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.all(self.values == other.values)
        )

    def __hash__(self):
        return hash(tuple(self.values.tolist()))

    def __repr__(self):
        return f"Support({self.values.tolist()})"

    @property
    def min(self):
        return float(self.values[0])

    @property
    def max(self):
        return float(self.values[-1])

    @property
    def is_integer(self):
        return bool(np.all(self.values == np.round(self.values)))

    def uniform(self):
        return Distribution(self, np.full(len(self), 1.0 / len(self)))

    def point_mass(self, value):
        idx = np.flatnonzero(self.values == value)
        if idx.size == 0:
            raise ValueError(f"{value!r} is not in {self!r}")
        probs = np.zeros(len(self))
        probs[idx[0]] = 1.0
        return Distribution(self, probs)


DIE = Support.die()


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector over a :class:`Support`.

    Negative entries are always rejected. Entries must already sum to one
    within 1e-12 unless ``normalize=True`` is passed, in which case the
    vector is rescaled explicitly.
    """

    support: Support
    probs: np.ndarray
    normalize: bool = field(default=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.support, Support):
            object.__setattr__(self, "support", Support(self.support))
        arr = check_real_vector(self.probs, name="probs")
        if arr.size != len(self.support):
            raise ValueError(
                f"probs has {arr.size} entries but support has {len(self.support)}"
            )
        if np.any(arr < 0):
            raise ValueError("probs has negative entries")
        if self.normalize:
            total = arr.sum()
            if not total > 0:
                raise ValueError("cannot normalize an all-zero vector")
            arr = arr / total
        check_probability_vector(arr, atol=CORE_ATOL)
        object.__setattr__(self, "probs", readonly(arr))

    def __repr__(self):
        return f"Distribution({self.support.values.tolist()}, {self.probs.tolist()})"

    def __len__(self):
        return self.probs.size

    def to_dict(self):
        return {"support": self.support.values.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(Support(data["support"]), data["probs"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["value", "prob"])
        for v, p in zip(self.support.values, self.probs):
            writer.writerow([repr(float(v)), repr(float(p))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            Support([float(r["value"]) for r in rows]),
            [float(r["prob"]) for r in rows],
        )


@dataclass(frozen=True, eq=False)
class Histogram:
    """Counts over half-open bins ``[origin + k*w, origin + (k+1)*w)``."""

    bin_width: float
    origin: float
    counts: dict
    total: int

    def __post_init__(self):
        check_positive(self.bin_width, "bin_width")
        counts = {int(k): int(v) for k, v in dict(self.counts).items()}
        if any(v < 0 for v in counts.values()):
            raise ValueError("histogram counts must be non-negative")
        if sum(counts.values()) != self.total:
            raise ValueError(
                f"counts sum to {sum(counts.values())}, total says {self.total}"
            )
        object.__setattr__(self, "counts", dict(sorted(counts.items())))
        object.__setattr__(self, "origin", float(self.origin))
        object.__setattr__(self, "bin_width", float(self.bin_width))

    @classmethod
    def from_values(cls, values, bin_width=0.002, origin=0.0):
        check_positive(bin_width, "bin_width")
        values = np.asarray(values, dtype=float).ravel()
        idx = np.floor((values - origin) / bin_width).astype(np.int64)
        keys, cnt = np.unique(idx, return_counts=True)
        return cls(bin_width, origin, dict(zip(keys.tolist(), cnt.tolist())), int(values.size))

    def bin_index(self, x):
        return int(math.floor((x - self.origin) / self.bin_width))

    def bin_edges(self, k):
        # rounded so CSV edges read 1.882 rather than 1.8820000000000001
        left = round(self.origin + k * self.bin_width, 12)
        return left, round(left + self.bin_width, 12)

    def frequency(self, k):
        return self.counts.get(k, 0) / self.total if self.total else 0.0

    def mass_between(self, lo, hi):
        """Fraction of the total in bins lying entirely inside ``[lo, hi]``."""
        inside = 0
        for k, c in self.counts.items():
            left, right = self.bin_edges(k)
            if left >= lo - 1e-12 and right <= hi + 1e-12:
                inside += c
        return inside / self.total

    def mean(self):
        """Mean of bin centres, weighted by count."""
        ks = np.fromiter(self.counts.keys(), dtype=float)
        cs = np.fromiter(self.counts.values(), dtype=float)
        centres = self.origin + (ks + 0.5) * self.bin_width
        return float(np.dot(centres, cs) / cs.sum())

    def symmetry_defect(self, center):
        """Signed mass imbalance about ``center`` and its standard error.

        ``center`` must sit on a bin edge. Returns ``(upper - lower, stderr)``
        where the standard error is the multinomial one for a difference of
        two cell proportions.
        """
        edge = (center - self.origin) / self.bin_width
        k0 = int(round(edge))
        if abs(edge - k0) > 1e-6:
            raise ValueError(f"{center} is not on a bin edge")
        upper = sum(c for k, c in self.counts.items() if k >= k0) / self.total
        lower = 1.0 - upper
        diff = upper - lower
        se = math.sqrt(max(upper + lower - diff**2, 0.0) / self.total)
        return diff, se

    def to_dict(self):
        return {
            "bin_width": self.bin_width,
            "origin": self.origin,
            "counts": {str(k): v for k, v in self.counts.items()},
            "total": self.total,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["bin_width"], data["origin"], {int(k): v for k, v in data["counts"].items()}, data["total"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def rows(self):
        for k, c in self.counts.items():
            left, right = self.bin_edges(k)
            yield left, right, c, c / self.total

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bin_left", "bin_right", "count", "frequency"])
        for left, right, c, f in self.rows():
            writer.writerow([repr(left), repr(right), c, repr(f)])
        return buf.getvalue()


def _same_support(p, q):
    if p.support != q.support:
        raise SupportMismatchError(f"support mismatch: {p.support!r} vs {q.support!r}")


def expectation(d):
    return float(np.dot(d.probs, d.support.values))


def entropy(d):
    p = d.probs[d.probs > 0]
    return float(-np.sum(p * np.log(p)))


def kl_divergence(p, q):
    """Relative entropy ``sum p log(p/q)`` in nats."""
    _same_support(p, q)
    mask = p.probs > 0
    if np.any(q.probs[mask] == 0):
        raise AbsoluteContinuityError("q vanishes where p is positive")
    pp, qq = p.probs[mask], q.probs[mask]
    return float(max(np.sum(pp * (np.log(pp) - np.log(qq))), 0.0))


def tv_distance(p, q):
    _same_support(p, q)
    return float(0.5 * np.sum(np.abs(p.probs - q.probs)))
