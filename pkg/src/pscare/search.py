"""Exact segmentation search: pruned dynamic programming plus an
exhaustive verification oracle.

The DP state F(s) is the best achievable sum of segment costs plus one
gamma per segment (minus a constant gamma, so F(0) = -gamma) over
admissible segmentations of comparisons 1..s; candidates for the last
change point are pruned with the subadditivity constant R, which keeps
the search exact whenever R lower-bounds the cost of merging adjacent
segments.  Ties are broken toward the smaller (earlier) change point.

Candidate costs are evaluated through the batch fitting kernel; while a
candidate stays alive its span end advances one step at a time, so the
previous solution warm-starts the next fit (disable with
DetectConfig.warm_start=False; results agree within the fit tolerance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError
from .fitting import (FitConfig, SegmentFit, fit_rows, fit_segment,
                      probe_fit_config)
from .likelihood import pair_stats
from .mdl import CostEvaluator, MdlBreakdown, MdlConfig, total_mdl
from .types import ComparisonDataset, CovariateSet, SegmentSpan


@dataclass(frozen=True)
class DetectConfig:
    min_seg_len: int | None = None       # default max(30, 2(n+d))
    gamma: float | None = None           # default log(T)
    prune_constant: float | None = None  # default (n+d-1)/2 * log(8*pi/T)
    max_changepoints: int | None = None  # default ceil(T/L) + 1
    pruning_enabled: bool = True
    warm_start: bool = True

    def resolve(self, data: ComparisonDataset) -> "ResolvedDetectConfig":
        n, d, T = data.n, data.d, data.T
        L = self.min_seg_len if self.min_seg_len is not None else max(30, 2 * (n + d))
        if L < 1:
            raise InputError("min_seg_len must be positive")
        if T < 2 * L:
            raise InputError(f"need T >= 2*min_seg_len, got T={T}, min_seg_len={L}")
        gamma = self.gamma if self.gamma is not None else math.log(T)
        R = (self.prune_constant if self.prune_constant is not None
             else 0.5 * (n + d - 1) * math.log(8.0 * math.pi / T))
        M = (self.max_changepoints if self.max_changepoints is not None
             else math.ceil(T / L) + 1)
        return ResolvedDetectConfig(min_seg_len=L, gamma=gamma, prune_constant=R,
                                    max_changepoints=M,
                                    pruning_enabled=self.pruning_enabled,
                                    warm_start=self.warm_start)


@dataclass(frozen=True)
class ResolvedDetectConfig:
    min_seg_len: int
    gamma: float
    prune_constant: float
    max_changepoints: int
    pruning_enabled: bool
    warm_start: bool

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class Segmentation:
    K_hat: int
    tau_hat: tuple[int, ...]
    spans: tuple[SegmentSpan, ...]
    segment_fits: tuple[SegmentFit, ...]
    mdl: MdlBreakdown
    objective: float                     # F(T) of the search
    pruning_stats: tuple[int, ...]       # candidate-set size per DP step
    config: ResolvedDetectConfig
    present_items: tuple[tuple[int, ...], ...] = field(default=())

    def as_dict(self) -> dict:
        return {
            "K_hat": self.K_hat,
            "tau_hat": list(self.tau_hat),
            "objective": self.objective,
            "mdl": self.mdl.as_dict(),
            "config": self.config.as_dict(),
            "segments": [
                {
                    "start": sp.start,
                    "end": sp.end,
                    "alpha": f.xi_hat.alpha.tolist(),
                    "beta": f.xi_hat.beta.tolist(),
                    "nll": f.nll,
                    "iters": f.iters,
                    "converged": f.converged,
                    "grad_norm": f.grad_norm,
                    "ridge_fallback": f.ridge_fallback,
                    "note": f.note,
                    "present_items": list(items),
                }
                for sp, f, items in zip(self.spans, self.segment_fits,
                                        self.present_items)
            ],
            "pruning": {
                "steps": len(self.pruning_stats),
                "max_candidates": max(self.pruning_stats, default=0),
                "mean_candidates": (sum(self.pruning_stats) / len(self.pruning_stats)
                                    if self.pruning_stats else 0.0),
            },
        }


def _present_items(data: ComparisonDataset, span: SegmentSpan) -> tuple[int, ...]:
    st = pair_stats(data)
    m, _ = st.span_counts(span)
    present = np.zeros(data.n, dtype=bool)
    present[st.pairs[m > 0].ravel()] = True
    return tuple(int(i) + 1 for i in np.flatnonzero(present))


def _build_segmentation(data: ComparisonDataset, taus: list[int],
                        objective: float, stats: list[int],
                        cfg: ResolvedDetectConfig, fit_config: FitConfig,
                        mdl_config: MdlConfig,
                        evaluator: CostEvaluator) -> Segmentation:
    bounds = [0] + taus + [data.T]
    spans = tuple(SegmentSpan(a + 1, b) for a, b in zip(bounds, bounds[1:]))
    fits = tuple(fit_segment(data, sp, fit_config) for sp in spans)
    mdl = total_mdl(data, taus, fit_config, mdl_config,
                    min_seg_len=cfg.min_seg_len, evaluator=evaluator)
    items = tuple(_present_items(data, sp) for sp in spans)
    return Segmentation(K_hat=len(taus), tau_hat=tuple(taus), spans=spans,
                        segment_fits=fits, mdl=mdl, objective=objective,
                        pruning_stats=tuple(stats), config=cfg,
                        present_items=items)


def _resolve_mdl(mdl_config: MdlConfig, gamma: float) -> MdlConfig:
    if mdl_config.penalty_gamma is None:
        return MdlConfig(nll_scale=mdl_config.nll_scale,
                         param_count_rule=mdl_config.param_count_rule,
                         penalty_gamma=gamma)
    return mdl_config


def detect(data: ComparisonDataset, config: DetectConfig | None = None,
           fit_config: FitConfig | None = None,
           mdl_config: MdlConfig | None = None,
           return_trace: bool = False,
           cost_cache: dict | None = None):
    """Minimize the description length over admissible segmentations.

    `cost_cache` maps (tau, s) to the probe cost C(tau+1 : s); pass the
    same dict to two runs (e.g. pruning on/off) to share probe fits.
    Returns a Segmentation (and a debug trace when return_trace=True).
    """
    config = config or DetectConfig()
    fit_config = fit_config or probe_fit_config()
    mdl_config = mdl_config or MdlConfig()
    cfg = config.resolve(data)
    L, gamma, R = cfg.min_seg_len, cfg.gamma, cfg.prune_constant
    T, n = data.T, data.n
    mdl_config = _resolve_mdl(mdl_config, gamma)
    ev = CostEvaluator(data, fit_config, mdl_config)
    st, Q = ev.stats, ev.basis
    p = st.Xp.shape[1]

    F = np.full(T + 1, np.inf)
    last = np.full(T + 1, -1, dtype=np.int64)
    F[0:L] = -gamma
    # warm-start state per candidate tau: last solution and accepted step
    Xi_all = np.zeros((T, p))
    trial_all = np.full(T, fit_config.init_step)

    # F(i) = C(1:i) for i in [L, 2L-1]; same warm chain as candidate 0
    for i in range(L, 2 * L):
        Xi = Xi_all[0][None, :].copy() if cfg.warm_start else np.zeros((1, p))
        tr = trial_all[0:1].copy() if cfg.warm_start else None
        M = (st.cum_m[i] - st.cum_m[0]).astype(np.float64)[None, :]
        Wc = (st.cum_w[i] - st.cum_w[0]).astype(np.float64)[None, :]
        nll, _, _, _, _ = fit_rows(st.Xp, M, Wc, Xi, Q, n, fit_config, tr)
        F[i] = ev.cost_from_nll(i, float(nll[0]))
        last[i] = 0
        if cfg.warm_start:
            Xi_all[0] = Xi[0]
            trial_all[0] = tr[0]

    cands: list[int] = [0]
    stats: list[int] = []
    trace_steps = [] if return_trace else None

    for s in range(2 * L, T + 1):
        new_tau = s - L
        if new_tau >= L:
            cands.append(new_tau)
        carr = np.asarray(cands, dtype=np.int64)
        c = carr.size
        hit = (cost_cache is not None
               and all((t, s) in cost_cache for t in cands))
        if hit:
            costs = np.array([cost_cache[(t, s)] for t in cands])
        else:
            M = (st.cum_m[s] - st.cum_m[carr]).astype(np.float64)
            Wc = (st.cum_w[s] - st.cum_w[carr]).astype(np.float64)
            if cfg.warm_start:
                Xi = Xi_all[carr]
                tr = trial_all[carr]
            else:
                Xi = np.zeros((c, p))
                tr = None
            nll, _, _, _, _ = fit_rows(st.Xp, M, Wc, Xi, Q, n, fit_config, tr)
            if cfg.warm_start:
                Xi_all[carr] = Xi
                trial_all[carr] = tr
            lengths = s - carr
            costs = 0.5 * ev._pc * np.log(lengths) + ev._scale * nll
            if cost_cache is not None:
                for t, cval in zip(cands, costs):
                    cost_cache[(t, s)] = float(cval)
        vals = F[carr] + costs + gamma
        b = int(np.argmin(vals))  # first minimum = smallest tau
        F[s] = vals[b]
        last[s] = carr[b]
        if trace_steps is not None:
            trace_steps.append({"s": s, "cands": carr.copy(), "costs": costs.copy(),
                                "vals": vals.copy()})
        if cfg.pruning_enabled:
            keep = vals - gamma + R < F[s]
            if not keep.all():
                cands = [int(t) for t in carr[keep]]
        stats.append(len(cands))

    taus: list[int] = []
    s = T
    while last[s] > 0:
        taus.append(int(last[s]))
        s = int(last[s])
    taus.reverse()

    seg = _build_segmentation(data, taus, float(F[T]), stats, cfg,
                              fit_config, mdl_config, ev)
    if return_trace:
        return seg, {"F": F, "steps": trace_steps}
    return seg


# ---------------------------------------------------------------------------
# exhaustive oracle


BRUTE_FORCE_GUARD = 1_000_000


def _count_segmentations(T: int, L: int, M: int) -> int:
    """Number of admissible change-point sets (spacing >= L, K <= M)."""
    # count_by_pos[s][k] = segmentations of 1..s with k segments, last boundary s
    total = 0
    count_by_pos: dict[int, list[int]] = {0: [1]}
    for pos in range(L, T + 1):
        counts: list[int] = []
        for prev_pos, prev_counts in count_by_pos.items():
            if pos - prev_pos >= L:
                for k, c in enumerate(prev_counts):
                    if k + 1 > M + 1:
                        continue
                    while len(counts) <= k + 1:
                        counts.append(0)
                    counts[k + 1] += c
        if counts:
            count_by_pos[pos] = counts
    for k, c in enumerate(count_by_pos.get(T, [])):
        if 1 <= k <= M + 1:
            total += c
    return total


def brute_force_detect(data: ComparisonDataset, config: DetectConfig | None = None,
                       fit_config: FitConfig | None = None,
                       mdl_config: MdlConfig | None = None) -> Segmentation:
    """Global optimum by exhaustive enumeration of admissible change-point
    sets; verification oracle for `detect` on small instances."""
    config = config or DetectConfig()
    fit_config = fit_config or probe_fit_config()
    mdl_config = mdl_config or MdlConfig()
    cfg = config.resolve(data)
    L, gamma, M = cfg.min_seg_len, cfg.gamma, cfg.max_changepoints
    T = data.T
    n_adm = _count_segmentations(T, L, M)
    if n_adm > BRUTE_FORCE_GUARD:
        raise InputError(
            f"{n_adm} admissible segmentations exceed the brute-force guard "
            f"({BRUTE_FORCE_GUARD}); use a smaller T")
    mdl_config = _resolve_mdl(mdl_config, gamma)
    ev = CostEvaluator(data, fit_config, mdl_config)

    best_obj = math.inf
    best_rev: tuple[int, ...] = ()
    best: list[int] = []

    def explore(prev: int, k: int, acc_cost: float, taus: list[int]):
        nonlocal best_obj, best_rev, best
        # close the final segment at T
        if T - prev >= L:
            obj = acc_cost + ev.cost(prev + 1, T) + k * gamma
            rev = tuple(reversed(taus))
            if obj < best_obj or (obj == best_obj and rev < best_rev):
                best_obj, best_rev, best = obj, rev, list(taus)
        if k >= M:
            return
        for t in range(max(prev + L, L), T - L + 1):
            taus.append(t)
            explore(t, k + 1, acc_cost + ev.cost(prev + 1, t), taus)
            taus.pop()

    explore(0, 0, 0.0, [])
    return _build_segmentation(data, best, best_obj, [], cfg,
                               fit_config, mdl_config, ev)


# ---------------------------------------------------------------------------
# per-segment rankings


def rank_segments(seg: Segmentation, covariates: CovariateSet) -> list[list[dict]]:
    """Items of each segment sorted by fitted score (descending, ties by
    item index); items never compared within a segment are flagged."""
    out = []
    for fit, items in zip(seg.segment_fits, seg.present_items):
        theta = fit.xi_hat.scores(covariates)
        present = set(items)
        order = sorted(range(covariates.n), key=lambda i: (-theta[i], i))
        out.append([
            {"item": i + 1, "score": float(theta[i]), "appeared": (i + 1) in present}
            for i in order
        ])
    return out
