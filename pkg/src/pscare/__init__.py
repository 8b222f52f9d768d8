"""Change-point detection and ranking for time-ordered pairwise
comparisons with item covariates.

Typical use:

    from pscare import ChangePointDetector, gen_dataset, SimSpec

    data = gen_dataset(SimSpec(n=10, d=5, K=3, delta=700, seed=1)).dataset
    det = ChangePointDetector().fit(data)
    det.changepoints_, det.rankings()

or, at the functional layer, `detect(dataset)` / `fit_segment(dataset,
span)`.  See the README for the file formats and the CLI.
"""

from .detector import ChangePointDetector
from .diagnostics import DiagnosticsReport, check_assumptions, incoherence_statistic
from .exceptions import (IdentifiabilityError, InputError, NumericalError,
                         ParseError, PscareError)
from .fitting import FitConfig, SegmentFit, fit_segment, probe_fit_config
from .io import IngestResult, ingest, write_comparisons, write_covariates
from .likelihood import (segment_nll, segment_nll_gradient, sigmoid, softplus,
                         win_probability, project_to_theta)
from .mdl import MdlBreakdown, MdlConfig, segment_cost, total_mdl
from .search import (DetectConfig, Segmentation, brute_force_detect, detect,
                     rank_segments)
from .simulate import (SimOutput, SimSpec, gen_covariates, gen_dataset,
                       gen_segment_params)
from .types import (ComparisonDataset, ComparisonEvent, CovariateSet,
                    ParamVector, SegmentSpan)

__version__ = "0.1.0"

__all__ = [
    "ChangePointDetector",
    "ComparisonDataset", "ComparisonEvent", "CovariateSet", "ParamVector",
    "SegmentSpan",
    "DetectConfig", "Segmentation", "detect", "brute_force_detect",
    "rank_segments",
    "FitConfig", "SegmentFit", "fit_segment", "probe_fit_config",
    "MdlConfig", "MdlBreakdown", "segment_cost", "total_mdl",
    "SimSpec", "SimOutput", "gen_covariates", "gen_segment_params",
    "gen_dataset",
    "DiagnosticsReport", "check_assumptions", "incoherence_statistic",
    "IngestResult", "ingest", "write_comparisons", "write_covariates",
    "segment_nll", "segment_nll_gradient", "sigmoid", "softplus",
    "win_probability", "project_to_theta",
    "PscareError", "InputError", "ParseError", "IdentifiabilityError",
    "NumericalError",
    "__version__",
]
