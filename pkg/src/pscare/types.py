"""Core domain types for piecewise-stationary covariate-assisted ranking.

Items are indexed 1..n (the public convention; arrays are 0-based
internally).  All types are immutable after construction; numpy arrays
are stored with the writeable flag cleared so instances can be shared
freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .exceptions import InputError

CONSTRAINT_TOL = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CovariateSet:
    """Static per-item covariates: an n-by-d matrix with row i = z_i."""

    n: int
    d: int
    Z: np.ndarray

    def __post_init__(self):
        if self.n < 2:
            raise InputError(f"need at least 2 items, got n={self.n}")
        if self.d < 0:
            raise InputError(f"covariate dimension must be >= 0, got d={self.d}")
        if self.d >= self.n - 1:
            raise InputError(
                f"covariate dimension d={self.d} must be < n-1={self.n - 1}; "
                "the constrained parameter space is degenerate otherwise"
            )
        Z = np.asarray(self.Z, dtype=np.float64).reshape(self.n, self.d)
        if not np.all(np.isfinite(Z)):
            raise InputError("covariate matrix contains non-finite entries")
        object.__setattr__(self, "Z", _frozen(Z))

    @classmethod
    def without_covariates(cls, n: int) -> "CovariateSet":
        return cls(n=n, d=0, Z=np.empty((n, 0)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, CovariateSet):
            return NotImplemented
        return self.n == other.n and self.d == other.d and np.array_equal(self.Z, other.Z)

    __hash__ = object.__hash__


@dataclass(frozen=True)
class ComparisonEvent:
    """One pairwise comparison: at time t, item i beat item j iff y == 1."""

    t: int
    i: int
    j: int
    y: int

    def __post_init__(self):
        if self.t < 1:
            raise InputError(f"time index must be >= 1, got t={self.t}")
        if self.i == self.j:
            raise InputError(f"an item cannot be compared with itself (t={self.t}, i={self.i})")
        if self.i < 1 or self.j < 1:
            raise InputError(f"item indices must be >= 1 (t={self.t})")
        if self.y not in (0, 1):
            raise InputError(f"outcome must be 0 or 1, got y={self.y} (t={self.t})")


@dataclass(frozen=True, eq=False)
class ComparisonDataset:
    """Time-ordered comparisons (exactly one per time point 1..T) plus covariates.

    The canonical storage is three int arrays of length T; `events`
    iterates the same data as `ComparisonEvent` objects.
    """

    covariates: CovariateSet
    i_idx: np.ndarray  # 0-based winner-slot item per event
    j_idx: np.ndarray  # 0-based second item per event
    y: np.ndarray      # 1 iff item i_idx beat item j_idx

    # lazily built likelihood caches, see likelihood.PairStats
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = self.covariates.n
        i = np.asarray(self.i_idx, dtype=np.int64)
        j = np.asarray(self.j_idx, dtype=np.int64)
        y = np.asarray(self.y, dtype=np.int64)
        if not (i.shape == j.shape == y.shape) or i.ndim != 1:
            raise InputError("event arrays must be 1-d and of equal length")
        if i.size == 0:
            raise InputError("dataset contains no comparisons")
        if np.any(i == j):
            t = int(np.argmax(i == j)) + 1
            raise InputError(f"an item cannot be compared with itself (t={t})")
        if np.any((i < 0) | (i >= n) | (j < 0) | (j >= n)):
            raise InputError(f"event references an item index outside 1..{n}")
        if np.any((y != 0) & (y != 1)):
            raise InputError("outcomes must be 0 or 1")
        for name, arr in (("i_idx", i), ("j_idx", j), ("y", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_events(cls, covariates: CovariateSet,
                    events: Sequence[ComparisonEvent]) -> "ComparisonDataset":
        if not events:
            raise InputError("dataset contains no comparisons")
        ts = [e.t for e in events]
        if ts != list(range(1, len(events) + 1)):
            raise InputError("event times must form the contiguous range 1..T in order")
        i = np.array([e.i - 1 for e in events], dtype=np.int64)
        j = np.array([e.j - 1 for e in events], dtype=np.int64)
        y = np.array([e.y for e in events], dtype=np.int64)
        return cls(covariates=covariates, i_idx=i, j_idx=j, y=y)

    @property
    def T(self) -> int:
        return int(self.i_idx.size)

    @property
    def n(self) -> int:
        return self.covariates.n

    @property
    def d(self) -> int:
        return self.covariates.d

    def events(self) -> Iterator[ComparisonEvent]:
        for t in range(self.T):
            yield ComparisonEvent(t=t + 1, i=int(self.i_idx[t]) + 1,
                                  j=int(self.j_idx[t]) + 1, y=int(self.y[t]))

    def event(self, t: int) -> ComparisonEvent:
        if not 1 <= t <= self.T:
            raise InputError(f"time index {t} outside 1..{self.T}")
        return ComparisonEvent(t=t, i=int(self.i_idx[t - 1]) + 1,
                               j=int(self.j_idx[t - 1]) + 1, y=int(self.y[t - 1]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ComparisonDataset):
            return NotImplemented
        return (self.covariates == other.covariates
                and np.array_equal(self.i_idx, other.i_idx)
                and np.array_equal(self.j_idx, other.j_idx)
                and np.array_equal(self.y, other.y))

    __hash__ = object.__hash__


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Concatenated scores xi = (alpha, beta): per-item residuals plus
    covariate coefficients.  Lives in the constrained space {W' alpha = 0}."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.beta, dtype=np.float64)) if np.size(self.beta) \
            else np.empty(0)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InputError("parameter vector contains non-finite entries")
        object.__setattr__(self, "alpha", _frozen(a))
        object.__setattr__(self, "beta", _frozen(b))

    @property
    def xi(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta])

    @classmethod
    def from_xi(cls, xi: np.ndarray, n: int) -> "ParamVector":
        xi = np.asarray(xi, dtype=np.float64)
        return cls(alpha=xi[:n], beta=xi[n:])

    def scores(self, covariates: CovariateSet) -> np.ndarray:
        """Per-item fitted score theta_i = alpha_i + z_i . beta."""
        theta = self.alpha.copy()
        if covariates.d:
            theta = theta + covariates.Z @ self.beta
        return theta

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParamVector):
            return NotImplemented
        return np.array_equal(self.alpha, other.alpha) and np.array_equal(self.beta, other.beta)

    __hash__ = object.__hash__


@dataclass(frozen=True)
class SegmentSpan:
    """Closed time span [start, end], 1-based inclusive on both ends."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 1:
            raise InputError(f"span start must be >= 1, got {self.start}")
        if self.end < self.start:
            raise InputError(f"empty span [{self.start}, {self.end}]")

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def validate(self, T: int, min_len: int = 1) -> None:
        if self.end > T:
            raise InputError(f"span end {self.end} exceeds T={T}")
        if self.length < min_len:
            raise InputError(
                f"span [{self.start}, {self.end}] shorter than minimum segment length {min_len}"
            )
