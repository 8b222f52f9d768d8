"""Advisory diagnostics for a fitted or candidate segment.

These mirror the identifiability conditions the estimation theory
relies on (design incoherence, per-pair comparison frequency, comparison
graph connectivity).  They never block detection; callers decide what
to do with a failing report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .likelihood import _w_matrix, pair_stats
from .types import ComparisonDataset, SegmentSpan


@dataclass(frozen=True)
class DiagnosticsReport:
    incoherence: float          # ||P_W||_{2,inf}, max row norm of the hat matrix of W
    incoherence_bound: float    # c0 * sqrt((d+1)/n)
    incoherence_ok: bool
    l_min: int                  # fewest comparisons among pairs appearing in the span
    t_k: int                    # span length
    sampling_stat: float        # n * l_min / t_k
    sampling_bound: float       # c_p * log(n)
    sampling_ok: bool
    connected: bool
    all_items_present: bool
    missing_items: tuple[int, ...]  # 1-based items never compared in the span

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["missing_items"] = list(self.missing_items)
        return d


def incoherence_statistic(data_or_cov) -> float:
    """Max row 2-norm of P_W = W (W'W)^-1 W'."""
    cov = getattr(data_or_cov, "covariates", data_or_cov)
    W = _w_matrix(cov)
    P = W @ np.linalg.solve(W.T @ W, W.T)
    return float(np.max(np.linalg.norm(P, axis=1)))


def _connected(n: int, edges: np.ndarray, present: np.ndarray) -> bool:
    """BFS over items that appear; isolated (absent) items count as disconnection."""
    if not present.all():
        return False
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return bool(seen.all())


def check_assumptions(data: ComparisonDataset, span: SegmentSpan,
                      c0: float = 2.0, cp: float = 0.5) -> DiagnosticsReport:
    """Advisory segment diagnostics; see DiagnosticsReport fields."""
    span.validate(data.T)
    n, d = data.n, data.d
    st = pair_stats(data)
    m, _ = st.span_counts(span)
    active = m > 0
    edges = st.pairs[active]

    present = np.zeros(n, dtype=bool)
    present[edges.ravel()] = True
    missing = tuple(int(i) + 1 for i in np.flatnonzero(~present))

    l_min = int(m[active].min()) if active.any() else 0
    t_k = span.length
    sampling_stat = n * l_min / t_k
    sampling_bound = cp * math.log(n)

    inco = incoherence_statistic(data)
    inco_bound = c0 * math.sqrt((d + 1) / n)

    return DiagnosticsReport(
        incoherence=inco,
        incoherence_bound=inco_bound,
        incoherence_ok=inco <= inco_bound,
        l_min=l_min,
        t_k=t_k,
        sampling_stat=sampling_stat,
        sampling_bound=sampling_bound,
        sampling_ok=sampling_stat > sampling_bound,
        connected=_connected(n, edges, present),
        all_items_present=not missing,
        missing_items=missing,
    )
