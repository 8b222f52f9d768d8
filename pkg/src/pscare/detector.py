"""Estimator-style front door for the library.

ChangePointDetector bundles the configuration objects behind a familiar
fit/predict surface: construct with keyword options, call fit(dataset),
then read the fitted attributes (`segmentation_`, `changepoints_`,
`n_changepoints_`) or query rankings and win probabilities.  The
functional API (`pscare.detect`, `pscare.fit_segment`, ...) remains the
primitive layer; this class only orchestrates it and holds no other
state.
"""

from __future__ import annotations

from .exceptions import PscareError
from .fitting import FitConfig, probe_fit_config
from .likelihood import win_probability
from .mdl import MdlConfig
from .search import DetectConfig, Segmentation, detect, rank_segments
from .types import ComparisonDataset, ComparisonEvent


class ChangePointDetector:
    """Segment a comparison stream and rank items within each segment.

    Parameters mirror DetectConfig / MdlConfig / FitConfig fields; None
    keeps the documented default.
    """

    def __init__(self, min_seg_len: int | None = None,
                 gamma: float | None = None,
                 pruning: bool = True,
                 nll_scale: str = "log2e_factor",
                 param_count_rule: str = "paper",
                 max_iters: int = 2000,
                 grad_tol: float = 1e-7):
        self.min_seg_len = min_seg_len
        self.gamma = gamma
        self.pruning = pruning
        self.nll_scale = nll_scale
        self.param_count_rule = param_count_rule
        self.max_iters = max_iters
        self.grad_tol = grad_tol

    def get_params(self) -> dict:
        return {
            "min_seg_len": self.min_seg_len,
            "gamma": self.gamma,
            "pruning": self.pruning,
            "nll_scale": self.nll_scale,
            "param_count_rule": self.param_count_rule,
            "max_iters": self.max_iters,
            "grad_tol": self.grad_tol,
        }

    def set_params(self, **params) -> "ChangePointDetector":
        for k, v in params.items():
            if k not in self.get_params():
                raise PscareError(f"unknown parameter {k!r}")
            setattr(self, k, v)
        return self

    # -- fitting ----------------------------------------------------------

    def fit(self, dataset: ComparisonDataset) -> "ChangePointDetector":
        self._dataset = dataset
        seg = detect(
            dataset,
            DetectConfig(min_seg_len=self.min_seg_len, gamma=self.gamma,
                         pruning_enabled=self.pruning),
            probe_fit_config(max_iters=self.max_iters,
                             grad_tol=self.grad_tol),
            MdlConfig(nll_scale=self.nll_scale,
                      param_count_rule=self.param_count_rule),
        )
        self.segmentation_: Segmentation = seg
        self.changepoints_ = list(seg.tau_hat)
        self.n_changepoints_ = seg.K_hat
        self.mdl_ = seg.mdl.total
        return self

    def _check_fitted(self) -> Segmentation:
        seg = getattr(self, "segmentation_", None)
        if seg is None:
            raise PscareError("this detector is not fitted; call fit first")
        return seg

    # -- queries ----------------------------------------------------------

    def predict(self) -> list[int]:
        """Detected change points (last index of each non-final segment)."""
        self._check_fitted()
        return list(self.changepoints_)

    def segment_of(self, t: int) -> int:
        """0-based index of the segment containing time t."""
        seg = self._check_fitted()
        for k, span in enumerate(seg.spans):
            if span.start <= t <= span.end:
                return k
        raise PscareError(f"time {t} outside 1..{seg.spans[-1].end}")

    def rankings(self) -> list[list[dict]]:
        """Per-segment item rankings (see rank_segments)."""
        seg = self._check_fitted()
        return rank_segments(seg, self._dataset.covariates)

    def win_probability(self, t: int, i: int, j: int) -> float:
        """Fitted P(item i beats item j) in the segment containing t."""
        seg = self._check_fitted()
        fit = seg.segment_fits[self.segment_of(t)]
        return win_probability(fit.xi_hat, ComparisonEvent(t=t, i=i, j=j, y=1),
                               self._dataset.covariates)
