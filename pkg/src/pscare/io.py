"""CSV ingestion and JSON/CSV export.

File formats:

* comparisons.csv — header ``t,i,j,y``; t is the strictly increasing
  time index 1..T, i and j are arbitrary string item labels, y is 1 iff
  i beat j.  Labels are mapped to dense indices in first-appearance
  order.
* covariates.csv — header ``item,c1,...,cd``; one row per item.  Every
  item appearing in the comparisons must be listed; items listed but
  never compared are appended after the first-appearance ones in file
  order.
* truth.json — simulation sidecar: the generating spec (including the
  RNG scheme), true change points, and per-segment parameters.
* report.json — detection report: resolved configuration, change
  points in the paper's convention (tau = last index of a segment),
  description-length breakdown, per-segment fits/rankings/diagnostics,
  the label map, and per-phase timings.

Change points are reported 1-based; all floats round-trip exactly
through their JSON representation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import check_assumptions
from .exceptions import InputError, ParseError
from .mdl import MdlConfig
from .search import Segmentation, rank_segments
from .simulate import SimOutput
from .types import ComparisonDataset, CovariateSet


@dataclass(frozen=True)
class IngestResult:
    dataset: ComparisonDataset
    labels: tuple[str, ...]  # original label of each dense index (1-based order)


# ---------------------------------------------------------------------------
# reading


def _read_rows(path) -> list[list[str]]:
    try:
        with open(path, newline="") as fh:
            return list(csv.reader(fh))
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from e


def _parse_comparisons(path):
    rows = _read_rows(path)
    if not rows:
        raise ParseError("empty comparisons file", line=1)
    if [c.strip() for c in rows[0]] != ["t", "i", "j", "y"]:
        raise ParseError(f"expected header 't,i,j,y', got {','.join(rows[0])!r}",
                         line=1)
    events = []
    for ln, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", line=ln)
        t_s, i_s, j_s, y_s = (c.strip() for c in row)
        try:
            t = int(t_s)
        except ValueError:
            raise ParseError(f"non-integer t {t_s!r}", line=ln) from None
        expected = len(events) + 1
        if t < expected:
            raise ParseError(f"duplicate or out-of-order t={t} "
                             f"(expected {expected})", line=ln)
        if t != expected:
            raise ParseError(f"t must be contiguous 1..T; got t={t} "
                             f"(expected {expected})", line=ln)
        if y_s not in ("0", "1"):
            raise ParseError(f"outcome y must be 0 or 1, got {y_s!r}", line=ln)
        if not i_s or not j_s:
            raise ParseError("empty item label", line=ln)
        if i_s == j_s:
            raise ParseError(f"item {i_s!r} compared with itself", line=ln)
        events.append((t, i_s, j_s, int(y_s)))
    if not events:
        raise ParseError("comparisons file contains no events", line=2)
    return events


def _parse_covariates(path):
    rows = _read_rows(path)
    if not rows:
        raise ParseError("empty covariates file", line=1)
    header = [c.strip() for c in rows[0]]
    d = len(header) - 1
    if header[:1] != ["item"] or header[1:] != [f"c{k}" for k in range(1, d + 1)]:
        raise ParseError(
            f"expected header 'item,c1,...,cd', got {','.join(rows[0])!r}", line=1)
    table: dict[str, np.ndarray] = {}
    order: list[str] = []
    for ln, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != d + 1:
            raise ParseError(f"expected {d + 1} fields, got {len(row)}", line=ln)
        label = row[0].strip()
        if not label:
            raise ParseError("empty item label", line=ln)
        if label in table:
            raise ParseError(f"duplicate covariate row for item {label!r}", line=ln)
        try:
            vals = np.array([float(c) for c in row[1:]])
        except ValueError:
            raise ParseError(f"non-numeric covariate for item {label!r}",
                             line=ln) from None
        table[label] = vals
        order.append(label)
    return d, table, order


def ingest(comparisons_path, covariates_path=None) -> IngestResult:
    """Read comparison (and optional covariate) CSVs into a dataset.

    Labels become dense 1-based indices in first-appearance order of the
    comparison stream; covariate-only items follow in file order.
    """
    events = _parse_comparisons(comparisons_path)

    labels: list[str] = []
    index: dict[str, int] = {}
    for _, i_s, j_s, _ in events:
        for lab in (i_s, j_s):
            if lab not in index:
                index[lab] = len(labels)
                labels.append(lab)

    if covariates_path is None:
        d, table, extra = 0, {lab: np.empty(0) for lab in labels}, []
    else:
        d, table, order = _parse_covariates(covariates_path)
        missing = [lab for lab in labels if lab not in table]
        if missing:
            raise InputError(
                "covariates file is missing items present in comparisons: "
                + ", ".join(repr(m) for m in missing))
        extra = [lab for lab in order if lab not in index]
    for lab in extra:
        index[lab] = len(labels)
        labels.append(lab)

    n = len(labels)
    Z = np.zeros((n, d))
    for lab, k in index.items():
        Z[k] = table[lab]
    covariates = CovariateSet(n=n, d=d, Z=Z)

    i_idx = np.array([index[e[1]] for e in events], dtype=np.int64)
    j_idx = np.array([index[e[2]] for e in events], dtype=np.int64)
    y = np.array([e[3] for e in events], dtype=np.int64)
    data = ComparisonDataset(covariates=covariates, i_idx=i_idx, j_idx=j_idx, y=y)
    return IngestResult(dataset=data, labels=tuple(labels))


# ---------------------------------------------------------------------------
# writing


def write_comparisons(data: ComparisonDataset, path,
                      labels: tuple[str, ...] | None = None) -> None:
    labels = labels or tuple(str(k + 1) for k in range(data.n))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i", "j", "y"])
        for t in range(data.T):
            w.writerow([t + 1, labels[data.i_idx[t]], labels[data.j_idx[t]],
                        int(data.y[t])])


def write_covariates(covariates: CovariateSet, path,
                     labels: tuple[str, ...] | None = None) -> None:
    labels = labels or tuple(str(k + 1) for k in range(covariates.n))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["item"] + [f"c{k}" for k in range(1, covariates.d + 1)])
        for k in range(covariates.n):
            w.writerow([labels[k]] + [repr(float(v)) for v in covariates.Z[k]])


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_truth(out: SimOutput, path) -> None:
    _dump_json({
        "spec": out.spec.as_dict(),
        "true_changepoints": list(out.true_changepoints),
        "true_params": [
            {"alpha": xi.alpha.tolist(), "beta": xi.beta.tolist()}
            for xi in out.true_params
        ],
    }, path)


def build_report(seg: Segmentation, data: ComparisonDataset,
                 labels: tuple[str, ...] | None = None,
                 mdl_config: MdlConfig | None = None,
                 timings: dict | None = None,
                 extra_config: dict | None = None) -> dict:
    """Assemble the detection report (see module docstring for the schema)."""
    labels = labels or tuple(str(k + 1) for k in range(data.n))
    mdl_config = mdl_config or MdlConfig()
    body = seg.as_dict()
    rankings = rank_segments(seg, data.covariates)
    for entry, ranking, span in zip(body["segments"], rankings, seg.spans):
        entry["ranking"] = [
            {"item": labels[r["item"] - 1], "score": r["score"],
             "appeared": r["appeared"]}
            for r in ranking
        ]
        entry["diagnostics"] = check_assumptions(data, span).as_dict()
    config = dict(body.pop("config"))
    config["nll_scale"] = mdl_config.nll_scale
    config["param_count_rule"] = mdl_config.param_count_rule
    if extra_config:
        config.update(extra_config)
    return {
        "T": data.T,
        "n": data.n,
        "d": data.d,
        "labels": list(labels),
        "config": config,
        "K_hat": body["K_hat"],
        "tau_hat": body["tau_hat"],
        "objective": body["objective"],
        "mdl": body["mdl"],
        "segments": body["segments"],
        "pruning": body["pruning"],
        "timings": dict(timings or {}),
    }


def write_report(report: dict, path) -> None:
    _dump_json(report, path)


def read_report(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid report JSON: {e.msg}", line=e.lineno) from e
