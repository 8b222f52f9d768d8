"""Two-part description-length criterion for a segmentation.

Total code length of K change points at positions tau splitting T
comparisons into segments of lengths n_k:

    log(K+1) + (K+1) log(T) + sum_k pc/2 * log(n_k) + scale * sum_k NLL_k

where pc is the per-segment free-parameter count and scale converts the
natural-log likelihood into bits (log2 e) or leaves it in nats,
depending on configuration.  Change point tau_k is the last time index
of segment k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import InputError
from .fitting import FitConfig, fit_rows
from .likelihood import constraint_basis, pair_stats
from .types import ComparisonDataset, SegmentSpan

LOG2E = math.log2(math.e)


@dataclass(frozen=True)
class MdlConfig:
    nll_scale: str = "log2e_factor"   # or "natural"
    param_count_rule: str = "paper"   # (n+d-1) or "constrained" (n-1)
    penalty_gamma: float | None = None  # per-segment penalty; defaults to log(T)

    def __post_init__(self):
        if self.nll_scale not in ("log2e_factor", "natural"):
            raise InputError(f"unknown nll_scale {self.nll_scale!r}")
        if self.param_count_rule not in ("paper", "constrained"):
            raise InputError(f"unknown param_count_rule {self.param_count_rule!r}")
        if self.penalty_gamma is not None and self.penalty_gamma <= 0:
            raise InputError("penalty_gamma must be positive")

    def scale(self) -> float:
        return LOG2E if self.nll_scale == "log2e_factor" else 1.0

    def param_count(self, n: int, d: int) -> int:
        return n + d - 1 if self.param_count_rule == "paper" else n - 1

    def gamma(self, T: int) -> float:
        return self.penalty_gamma if self.penalty_gamma is not None else math.log(T)


@dataclass(frozen=True)
class MdlBreakdown:
    cl_K: float
    cl_tau: float
    cl_params: float
    cl_resid: float
    total: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class CostEvaluator:
    """Caches segment costs for one dataset/configuration.

    Cost of span [s, e] is pc/2 * log(len) + scale * NLL at the span
    MLE, always cold-started so values are independent of evaluation
    order.  Misses are fitted in batch when several spans share an end.
    """

    MAX_CACHE = 2_000_000

    def __init__(self, data: ComparisonDataset, fit_config: FitConfig,
                 mdl_config: MdlConfig):
        self.data = data
        self.fit_config = fit_config
        self.mdl_config = mdl_config
        self.stats = pair_stats(data)
        self.basis = constraint_basis(data.covariates)
        self._scale = mdl_config.scale()
        self._pc = mdl_config.param_count(data.n, data.d)
        self._cache: dict[tuple[int, int], float] = {}

    def param_term(self, length: int) -> float:
        return 0.5 * self._pc * math.log(length)

    def cost_from_nll(self, length: int, nll: float) -> float:
        return self.param_term(length) + self._scale * nll

    def costs(self, starts: np.ndarray, end: int) -> np.ndarray:
        """Costs of spans [s, end] for every s in `starts` (1-based)."""
        starts = np.asarray(starts, dtype=np.int64)
        out = np.empty(starts.size)
        miss = []
        for k, s in enumerate(starts):
            c = self._cache.get((int(s), end))
            if c is None:
                miss.append(k)
            else:
                out[k] = c
        if miss:
            st = self.stats
            ms = starts[miss]
            M = (st.cum_m[end] - st.cum_m[ms - 1]).astype(np.float64)
            W = (st.cum_w[end] - st.cum_w[ms - 1]).astype(np.float64)
            Xi = np.zeros((len(miss), st.Xp.shape[1]))
            nll, _, _, _, _ = fit_rows(st.Xp, M, W, Xi, self.basis,
                                       self.data.n, self.fit_config)
            store = len(self._cache) < self.MAX_CACHE
            for k, s, v in zip(miss, ms, nll):
                c = self.cost_from_nll(end - int(s) + 1, float(v))
                out[k] = c
                if store:
                    self._cache[(int(s), end)] = c
        return out

    def cost(self, start: int, end: int) -> float:
        return float(self.costs(np.array([start]), end)[0])


def segment_cost(data: ComparisonDataset, span: SegmentSpan,
                 fit_config: FitConfig | None = None,
                 mdl_config: MdlConfig | None = None,
                 min_seg_len: int = 1) -> float:
    """Description-length cost of a single segment (parameter + residual part)."""
    span.validate(data.T, min_seg_len)
    ev = CostEvaluator(data, fit_config or FitConfig(), mdl_config or MdlConfig())
    return ev.cost(span.start, span.end)


def _segments_from_changepoints(changepoints: Sequence[int], T: int,
                                min_seg_len: int) -> list[SegmentSpan]:
    taus = [int(t) for t in changepoints]
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise InputError(f"change points must be strictly increasing, got {taus}")
    bounds = [0] + taus + [T]
    bad = [t for a, t in zip(bounds, bounds[1:]) if t - a < min_seg_len]
    if any(not 0 < t < T for t in taus) or bad:
        raise InputError(
            f"change points {taus} violate the minimum segment length "
            f"{min_seg_len} on [1, {T}] (offending boundaries: {bad})")
    return [SegmentSpan(a + 1, b) for a, b in zip(bounds, bounds[1:])]


def total_mdl(data: ComparisonDataset, changepoints: Sequence[int],
              fit_config: FitConfig | None = None,
              mdl_config: MdlConfig | None = None,
              min_seg_len: int = 1,
              evaluator: CostEvaluator | None = None) -> MdlBreakdown:
    """Full description length of the segmentation given by `changepoints`.

    tau values are the last time index of each non-final segment; the
    K = 0 case is the empty sequence.
    """
    mdl_config = mdl_config or MdlConfig()
    ev = evaluator or CostEvaluator(data, fit_config or FitConfig(), mdl_config)
    segs = _segments_from_changepoints(changepoints, data.T, min_seg_len)
    K = len(changepoints)
    cl_K = math.log(K + 1)
    cl_tau = (K + 1) * mdl_config.gamma(data.T)
    cl_params = 0.0
    cl_resid = 0.0
    for seg in segs:
        c = ev.cost(seg.start, seg.end)
        pt = ev.param_term(seg.length)
        cl_params += pt
        cl_resid += c - pt
    total = cl_K + cl_tau + cl_params + cl_resid
    return MdlBreakdown(cl_K=cl_K, cl_tau=cl_tau, cl_params=cl_params,
                        cl_resid=cl_resid, total=total)
