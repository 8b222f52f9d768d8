"""Likelihood machinery for the covariate-assisted Bradley-Terry model.

Win probabilities are logistic in the score difference
theta_i - theta_j with theta_i = alpha_i + z_i . beta.  Segment
likelihoods are evaluated through per-pair sufficient statistics
(comparison and win counts), which makes span evaluations O(#pairs)
instead of O(span length); cumulative counts are cached per dataset.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from .exceptions import IdentifiabilityError, InputError
from .types import (
    CONSTRAINT_TOL,
    ComparisonDataset,
    ComparisonEvent,
    CovariateSet,
    ParamVector,
    SegmentSpan,
)

_RANK_TOL = 1e-10


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)) without overflow for large |x|."""
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def design_vector(event: ComparisonEvent, covariates: CovariateSet) -> np.ndarray:
    """The sparse comparison design row z*_t = z~_i - z~_j (length n+d)."""
    n, d = covariates.n, covariates.d
    if event.i > n or event.j > n:
        raise InputError(f"event references item outside 1..{n}")
    v = np.zeros(n + d)
    v[event.i - 1] = 1.0
    v[event.j - 1] = -1.0
    if d:
        v[n:] = covariates.Z[event.i - 1] - covariates.Z[event.j - 1]
    return v


def full_design_matrix(covariates: CovariateSet) -> np.ndarray:
    """Row i = z~_i = (e_i, z_i), the per-item extended design."""
    n, d = covariates.n, covariates.d
    out = np.zeros((n, n + d))
    out[:, :n] = np.eye(n)
    if d:
        out[:, n:] = covariates.Z
    return out


# ---------------------------------------------------------------------------
# identifiability projection


def _w_matrix(covariates: CovariateSet) -> np.ndarray:
    return np.column_stack([np.ones(covariates.n), covariates.Z])


_basis_cache: "weakref.WeakKeyDictionary[CovariateSet, np.ndarray]" = weakref.WeakKeyDictionary()


def constraint_basis(covariates: CovariateSet) -> np.ndarray:
    """Orthonormal basis Q of col(W), W = [1 | Z]; raises if W is rank deficient."""
    Q = _basis_cache.get(covariates)
    if Q is not None:
        return Q
    W = _w_matrix(covariates)
    names = ["intercept"] + [f"c{k}" for k in range(1, covariates.d + 1)]
    rank = 0
    dependent = []
    for c in range(W.shape[1]):
        r = np.linalg.matrix_rank(W[:, : c + 1], tol=_RANK_TOL * covariates.n)
        if r == rank:
            dependent.append(names[c])
        rank = r
    if dependent:
        raise IdentifiabilityError(
            "covariate design W = [1 | Z] is rank deficient; dependent columns: "
            + ", ".join(dependent)
        )
    Q, _ = np.linalg.qr(W)
    Q = np.ascontiguousarray(Q)
    Q.setflags(write=False)
    _basis_cache[covariates] = Q
    return Q


def project_to_theta(xi_raw: np.ndarray, covariates: CovariateSet) -> ParamVector:
    """Orthogonal projection of the alpha block onto {W' alpha = 0}; beta passes through."""
    n, d = covariates.n, covariates.d
    xi_raw = np.asarray(xi_raw, dtype=np.float64)
    if xi_raw.shape != (n + d,):
        raise InputError(f"expected parameter vector of length {n + d}, got {xi_raw.shape}")
    Q = constraint_basis(covariates)
    alpha = xi_raw[:n]
    alpha = alpha - Q @ (Q.T @ alpha)
    return ParamVector(alpha=alpha, beta=xi_raw[n:])


def constraint_residual(param: ParamVector, covariates: CovariateSet) -> float:
    """sup-norm of W' alpha; <= 1e-8 for a properly projected vector."""
    W = _w_matrix(covariates)
    return float(np.max(np.abs(W.T @ param.alpha))) if covariates.n else 0.0


def check_constraint(param: ParamVector, covariates: CovariateSet) -> None:
    r = constraint_residual(param, covariates)
    if r > CONSTRAINT_TOL:
        raise InputError(f"parameter vector violates W' alpha = 0 (residual {r:.3e})")


# ---------------------------------------------------------------------------
# per-pair sufficient statistics


@dataclass(frozen=True, eq=False)
class PairStats:
    """Pair-level aggregation of a dataset.

    `pairs` lists the distinct ordered pairs (i < j) that ever occur;
    `Xp[q]` is the design row for pair q oriented as (i beats j);
    `cum_m[t, q]` / `cum_w[t, q]` count comparisons / i-wins of pair q
    among events 1..t, so any span reduces to a difference of rows.
    """

    pairs: np.ndarray   # (q, 2) int64, 0-based
    pair_of_event: np.ndarray  # (T,) int64
    event_sign: np.ndarray     # (T,) +1 if event stored in pair orientation
    Xp: np.ndarray      # (q, n+d) float64
    cum_m: np.ndarray   # (T+1, q) int32
    cum_w: np.ndarray   # (T+1, q) int32

    def span_counts(self, span: SegmentSpan) -> tuple[np.ndarray, np.ndarray]:
        m = (self.cum_m[span.end] - self.cum_m[span.start - 1]).astype(np.float64)
        w = (self.cum_w[span.end] - self.cum_w[span.start - 1]).astype(np.float64)
        return m, w


def pair_stats(data: ComparisonDataset) -> PairStats:
    cached = data._cache.get("pair_stats")
    if cached is not None:
        return cached

    n, d, T = data.n, data.d, data.T
    lo = np.minimum(data.i_idx, data.j_idx)
    hi = np.maximum(data.i_idx, data.j_idx)
    keys = lo * n + hi
    uniq, pair_of_event = np.unique(keys, return_inverse=True)
    pairs = np.column_stack([uniq // n, uniq % n])
    q = pairs.shape[0]

    # orient each event to its pair's (lo beats hi) convention
    swapped = data.i_idx != pairs[pair_of_event, 0]
    wins_lo = np.where(swapped, 1 - data.y, data.y).astype(np.int32)

    Xp = np.zeros((q, n + d))
    Xp[np.arange(q), pairs[:, 0]] = 1.0
    Xp[np.arange(q), pairs[:, 1]] = -1.0
    if d:
        Xp[:, n:] = data.covariates.Z[pairs[:, 0]] - data.covariates.Z[pairs[:, 1]]

    cum_m = np.zeros((T + 1, q), dtype=np.int32)
    cum_w = np.zeros((T + 1, q), dtype=np.int32)
    rows = np.arange(1, T + 1)
    cum_m[rows, pair_of_event] = 1
    cum_w[rows, pair_of_event] = wins_lo
    np.cumsum(cum_m, axis=0, out=cum_m)
    np.cumsum(cum_w, axis=0, out=cum_w)

    for a in (pairs, pair_of_event, Xp, cum_m, cum_w):
        a.setflags(write=False)
    stats = PairStats(pairs=pairs, pair_of_event=pair_of_event,
                      event_sign=np.where(swapped, -1, 1),
                      Xp=Xp, cum_m=cum_m, cum_w=cum_w)
    data._cache["pair_stats"] = stats
    return stats


# ---------------------------------------------------------------------------
# likelihood, gradient, win probability


def win_probability(xi: ParamVector, event: ComparisonEvent,
                    covariates: CovariateSet) -> float:
    """P(item event.i beats item event.j) under scores theta = alpha + Z beta."""
    theta = xi.scores(covariates)
    if event.i > covariates.n or event.j > covariates.n:
        raise InputError(f"event references item outside 1..{covariates.n}")
    diff = theta[event.i - 1] - theta[event.j - 1]
    return float(sigmoid(diff))


def _validate_span(data: ComparisonDataset, span: SegmentSpan) -> None:
    span.validate(data.T)


def segment_nll(xi: ParamVector, data: ComparisonDataset, span: SegmentSpan) -> float:
    """Negative Bernoulli log-likelihood of the span at parameters xi."""
    _validate_span(data, span)
    st = pair_stats(data)
    m, w = st.span_counts(span)
    x = st.Xp @ xi.xi
    return float(np.dot(m, softplus(x)) - np.dot(w, x))


def segment_nll_gradient(xi: ParamVector, data: ComparisonDataset,
                         span: SegmentSpan) -> np.ndarray:
    """Gradient of segment_nll with respect to the raw (n+d) vector."""
    _validate_span(data, span)
    st = pair_stats(data)
    m, w = st.span_counts(span)
    x = st.Xp @ xi.xi
    r = m * sigmoid(x) - w
    return st.Xp.T @ r
