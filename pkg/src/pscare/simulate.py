"""Seeded data generator for the covariate-assisted comparison model.

Covariates are uniform draws, column-standardized, then rescaled by a
common factor so the largest item norm is sqrt((d+1)/n).  Each segment
gets fresh parameters: alpha uniform on [-0.3, 0.3]^n, beta uniform on
the sphere of radius 0.5*sqrt(n/(d+1)), projected onto the
identifiability subspace.  Events pick an unordered pair uniformly from
the complete graph and flip a Bernoulli coin with the model's win
probability.

Randomness is split with numpy SeedSequence spawning (one child stream
for covariates, one per segment's parameters, one per segment's
events), so replications are bit-reproducible and independent across
segments.  The generator family is recorded as RNG_SCHEME for output
metadata.  Items are relabeled into first-appearance order of the event
stream so that emitted files re-ingest to the identical dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .likelihood import project_to_theta, sigmoid
from .types import ComparisonDataset, CovariateSet, ParamVector

RNG_SCHEME = "numpy-pcg64-seedseq"


@dataclass(frozen=True)
class SimSpec:
    n: int
    d: int
    K: int
    delta: int
    seed: int
    alpha_range: tuple[float, float] = (-0.3, 0.3)
    beta_radius_factor: float = 0.5
    covariate_range: tuple[float, float] = (-0.5, 0.5)

    def __post_init__(self):
        if self.n < 2:
            raise InputError("need at least 2 items")
        if self.d < 0 or self.d >= self.n - 1:
            raise InputError("need 0 <= d < n - 1")
        if self.K < 0:
            raise InputError("K must be non-negative")
        if self.delta < 1:
            raise InputError("delta must be positive")

    @property
    def T(self) -> int:
        return (self.K + 1) * self.delta

    @property
    def true_changepoints(self) -> tuple[int, ...]:
        return tuple(i * self.delta for i in range(1, self.K + 1))

    def as_dict(self) -> dict:
        return {
            "n": self.n, "d": self.d, "K": self.K, "delta": self.delta,
            "seed": self.seed, "T": self.T,
            "alpha_range": list(self.alpha_range),
            "beta_radius_factor": self.beta_radius_factor,
            "covariate_range": list(self.covariate_range),
            "rng": RNG_SCHEME,
        }


@dataclass(frozen=True)
class SimOutput:
    spec: SimSpec
    dataset: ComparisonDataset
    true_changepoints: tuple[int, ...]
    true_params: tuple[ParamVector, ...]


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def gen_covariates(n: int, d: int, seed,
                   covariate_range: tuple[float, float] = (-0.5, 0.5)) -> CovariateSet:
    """Uniform covariates, column-standardized, max row norm sqrt((d+1)/n)."""
    if n < 2:
        raise InputError("need at least 2 items")
    if d == 0:
        return CovariateSet(n=n, d=0, Z=np.zeros((n, 0)))
    rng = _rng(seed)
    Z = rng.uniform(covariate_range[0], covariate_range[1], size=(n, d))
    Z = (Z - Z.mean(axis=0)) / Z.std(axis=0, ddof=1)
    h = np.max(np.linalg.norm(Z, axis=1))
    Z *= np.sqrt((d + 1) / n) / h
    return CovariateSet(n=n, d=d, Z=Z)


def gen_segment_params(covariates: CovariateSet, seed,
                       alpha_range: tuple[float, float] = (-0.3, 0.3),
                       beta_radius_factor: float = 0.5) -> ParamVector:
    """One segment's parameters, projected onto {W' alpha = 0}.

    beta is uniform on the sphere of radius
    beta_radius_factor * sqrt(n / (d+1)) (normalized Gaussian).
    """
    rng = _rng(seed)
    n, d = covariates.n, covariates.d
    alpha = rng.uniform(alpha_range[0], alpha_range[1], size=n)
    if d:
        beta = rng.standard_normal(d)
        beta *= beta_radius_factor * np.sqrt(n / (d + 1)) / np.linalg.norm(beta)
    else:
        beta = np.zeros(0)
    return project_to_theta(np.concatenate([alpha, beta]), covariates)


def _first_appearance_order(n: int, i_idx: np.ndarray, j_idx: np.ndarray) -> np.ndarray:
    """Old 0-based indices in the order they first occur in the stream."""
    flat = np.empty(2 * i_idx.size, dtype=np.int64)
    flat[0::2] = i_idx
    flat[1::2] = j_idx
    uniq, first = np.unique(flat, return_index=True)
    order = list(uniq[np.argsort(first)])
    seen = set(order)
    order.extend(k for k in range(n) if k not in seen)
    return np.asarray(order, dtype=np.int64)


def gen_dataset(spec: SimSpec) -> SimOutput:
    """Full dataset of T = (K+1)*delta events with truth attached."""
    K, delta, n, d = spec.K, spec.delta, spec.n, spec.d
    root = np.random.SeedSequence(spec.seed)
    cov_ss, par_ss, ev_ss = root.spawn(3)
    covariates = gen_covariates(n, d, cov_ss, spec.covariate_range)

    params: list[ParamVector] = []
    for seg_ss in par_ss.spawn(K + 1):
        xi = gen_segment_params(covariates, seg_ss,
                                spec.alpha_range, spec.beta_radius_factor)
        # identical adjacent parameters would erase the change point;
        # redraw from a child stream (probability-zero with real draws)
        while params and np.array_equal(xi.xi, params[-1].xi):
            seg_ss = seg_ss.spawn(1)[0]
            xi = gen_segment_params(covariates, seg_ss,
                                    spec.alpha_range, spec.beta_radius_factor)
        params.append(xi)

    iu, ju = np.triu_indices(n, k=1)
    i_parts, j_parts, y_parts = [], [], []
    for xi, seg_ev in zip(params, ev_ss.spawn(K + 1)):
        rng = _rng(seg_ev)
        theta = xi.scores(covariates)
        q = rng.integers(0, iu.size, size=delta)
        i0, j0 = iu[q], ju[q]
        p = sigmoid(theta[i0] - theta[j0])
        y = (rng.random(delta) < p).astype(np.int64)
        i_parts.append(i0)
        j_parts.append(j0)
        y_parts.append(y)
    i_idx = np.concatenate(i_parts)
    j_idx = np.concatenate(j_parts)
    y = np.concatenate(y_parts)

    # canonical relabeling: item 1 is the first item ever mentioned, etc.
    order = _first_appearance_order(n, i_idx, j_idx)
    new_of_old = np.empty(n, dtype=np.int64)
    new_of_old[order] = np.arange(n)
    i_new, j_new = new_of_old[i_idx], new_of_old[j_idx]
    # keep the emitted orientation i < j
    lo = np.minimum(i_new, j_new)
    hi = np.maximum(i_new, j_new)
    y = np.where(i_new == lo, y, 1 - y)
    cov_canon = CovariateSet(n=n, d=d, Z=covariates.Z[order])
    params_canon = tuple(ParamVector(alpha=xi.alpha[order], beta=xi.beta)
                         for xi in params)

    data = ComparisonDataset(covariates=cov_canon, i_idx=lo, j_idx=hi, y=y)
    return SimOutput(spec=spec, dataset=data,
                     true_changepoints=spec.true_changepoints,
                     true_params=params_canon)
